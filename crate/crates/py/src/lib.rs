//! Python bindings: scenarios, closed-loop runs, gap presets, campaigns and
//! the metric functions.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use realgap::ads::AdsChoice;
use realgap::experiments::{self, Campaign};
use realgap::geometry::{discrete_frechet_points, fit_circle, Pose};
use realgap::metrics::{self, PixelBox};
use realgap::mixing::Modality;
use realgap::plant::GapProfile;
use realgap::runtime::{self, RunConfig, RunLog};
use realgap::world::{self, Scenario};
use realgap::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Lookup(_) => PyKeyError::new_err(e.to_string()),
        Error::Argument(_)
        | Error::Validation(_)
        | Error::Config(_)
        | Error::Range(_)
        | Error::Degenerate(_)
        | Error::EmptyCorrespondence
        | Error::UndefinedEffect => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

#[pyclass(name = "Scenario", frozen)]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: world::build_scenario(name).map_err(py_err)?,
        })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn track_length(&self) -> f64 {
        self.inner.track.length()
    }

    /// `(id, x, y, yaw)` per obstacle.
    #[getter]
    fn obstacles(&self) -> Vec<(String, f64, f64, f64)> {
        self.inner
            .obstacles
            .iter()
            .map(|o| (o.id.clone(), o.pose.x, o.pose.y, o.pose.yaw))
            .collect()
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Scenario({:?})", self.inner.name)
    }
}

#[pyclass(name = "GapProfile", frozen)]
struct PyGap {
    inner: GapProfile,
}

#[pymethods]
impl PyGap {
    /// A named preset resolved against the default twin.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        let c = RunConfig::default();
        Ok(Self {
            inner: experiments::gap_preset(name, &c.twin, &c.rates).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner: GapProfile = toml::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> PyResult<String> {
        toml::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn is_zero(&self) -> bool {
        self.inner.is_zero()
    }
}

#[pyclass(name = "RunLog", frozen)]
struct PyRunLog {
    inner: RunLog,
}

#[pymethods]
impl PyRunLog {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: RunLog::load(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    #[getter]
    fn outcome(&self) -> String {
        self.inner.outcome.to_string()
    }

    #[getter]
    fn scenario(&self) -> &str {
        &self.inner.header.scenario
    }

    #[getter]
    fn modality(&self) -> &'static str {
        self.inner.header.modality.as_str()
    }

    /// `(t, x, y, yaw)` of the physical vehicle at every tick.
    fn real_path(&self) -> Vec<(f64, f64, f64, f64)> {
        self.inner
            .ticks
            .iter()
            .map(|r| (r.t, r.real.x, r.real.y, r.real.yaw))
            .collect()
    }

    fn events(&self) -> Vec<(u64, String)> {
        self.inner.events().map(|(t, e)| (t, e.to_string())).collect()
    }

    fn ticks_csv(&self) -> Vec<u8> {
        self.inner.ticks_csv()
    }

    /// Log contents without the header; equal bytes mean equal runs.
    fn body_bytes(&self) -> Vec<u8> {
        self.inner.body_bytes()
    }

    fn __len__(&self) -> usize {
        self.inner.ticks.len()
    }
}

/// Run one closed-loop episode.
#[pyfunction]
#[pyo3(signature = (scenario, modality, ads = "modular", gap = None, seed = 0, max_duration = 40.0))]
fn run_closed_loop(
    py: Python<'_>,
    scenario: &PyScenario,
    modality: &str,
    ads: &str,
    gap: Option<&PyGap>,
    seed: u64,
    max_duration: f64,
) -> PyResult<PyRunLog> {
    let modality: Modality = modality.parse().map_err(py_err)?;
    let ads: AdsChoice = ads.parse().map_err(py_err)?;
    let gap = gap.map_or_else(GapProfile::zero, |g| g.inner);
    let sc = scenario.inner.clone();
    let log = py
        .detach(move || {
            runtime::run_closed_loop(&sc, modality, &ads, &gap, seed, max_duration, &RunConfig::default())
        })
        .map_err(py_err)?;
    Ok(PyRunLog { inner: log })
}

/// Behavioral metrics of `log` against `reference` as a dict.
#[pyfunction]
fn evaluate_run(log: &PyRunLog, reference: &PyRunLog, scenario: &PyScenario) -> PyResult<BTreeMap<&'static str, f64>> {
    let m = metrics::evaluate_run(&log.inner, &reference.inner, &scenario.inner).map_err(py_err)?;
    Ok(BTreeMap::from([
        ("frechet_to_reference", m.frechet_to_reference),
        ("completion_pct", m.completion_pct),
        ("completion_delta_vs_reference", m.completion_delta_vs_reference),
        ("crashes", m.crashes as f64),
        ("out_of_road", m.out_of_road as f64),
        ("failure", f64::from(u8::from(m.failure))),
    ]))
}

/// Run a campaign given as TOML text and write its reports under `out`.
#[pyfunction]
fn run_campaign(py: Python<'_>, campaign_toml: &str, out: PathBuf) -> PyResult<Vec<PathBuf>> {
    let campaign = Campaign::from_toml(campaign_toml).map_err(py_err)?;
    py.detach(move || {
        let reports = experiments::run_campaign(&campaign)?;
        experiments::emit_report(&reports, &campaign.formats, &out)
    })
    .map_err(py_err)
}

#[pyfunction]
fn discrete_frechet(a: Vec<[f64; 2]>, b: Vec<[f64; 2]>) -> PyResult<f64> {
    discrete_frechet_points(&a, &b).map_err(py_err)
}

/// `(center_x, center_y, radius)` of the least-squares circle.
#[pyfunction]
fn fit_circle_points(points: Vec<[f64; 2]>) -> PyResult<(f64, f64, f64)> {
    let c = fit_circle(&points).map_err(py_err)?;
    Ok((c.center[0], c.center[1], c.radius))
}

/// `(U, two-sided p)`.
#[pyfunction]
fn mann_whitney_u(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = metrics::mann_whitney_u(&x, &y).map_err(py_err)?;
    Ok((r.u, r.p_two_sided))
}

#[pyfunction]
fn cohens_d(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    metrics::cohens_d(&x, &y).map_err(py_err)
}

/// IoU of two `(x0, y0, x1, y1)` pixel boxes.
#[pyfunction]
fn iou(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> PyResult<f64> {
    let pa = PixelBox::new(a.0, a.1, a.2, a.3);
    let pb = PixelBox::new(b.0, b.1, b.2, b.3);
    metrics::iou(&pa, &pb).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (x, y, z, yaw, timestamp, object_id = 1))]
fn encode_tracking(x: f64, y: f64, z: f64, yaw: f64, timestamp: f64, object_id: u32) -> PyResult<Vec<u8>> {
    let pose = Pose::new(x, y, z, yaw, timestamp);
    Ok(runtime::encode_tracking(&pose, object_id).map_err(py_err)?.to_vec())
}

/// `(object_id, x, y, z, yaw, timestamp)`.
#[pyfunction]
fn decode_tracking(data: &[u8]) -> PyResult<(u32, f64, f64, f64, f64, f64)> {
    let (id, p) = runtime::decode_tracking(data).map_err(py_err)?;
    Ok((id, p.x, p.y, p.z, p.yaw, p.timestamp))
}

#[pymodule]
#[pyo3(name = "realgap")]
fn realgap_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyGap>()?;
    m.add_class::<PyRunLog>()?;
    m.add_function(wrap_pyfunction!(run_closed_loop, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_run, m)?)?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add_function(wrap_pyfunction!(discrete_frechet, m)?)?;
    m.add_function(wrap_pyfunction!(fit_circle_points, m)?)?;
    m.add_function(wrap_pyfunction!(mann_whitney_u, m)?)?;
    m.add_function(wrap_pyfunction!(cohens_d, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(encode_tracking, m)?)?;
    m.add_function(wrap_pyfunction!(decode_tracking, m)?)?;
    m.add("MODALITIES", Modality::ALL.map(Modality::as_str).to_vec())?;
    m.add("SCENARIOS", world::PRESETS.to_vec())?;
    m.add("GAP_PRESETS", experiments::GAP_PRESETS.to_vec())?;
    Ok(())
}
