//! Campaign reports: CSV rows, a structured-text summary, and an SVG of
//! trajectory traces.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixing::Modality;
use crate::world::{OrientedRect, Obstacle};

/// Shortest round-trip decimal form; the single number format of every
/// report, so reruns are byte-identical.
pub fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Mean and population standard deviation; NaN for an empty slice.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub label: String,
    pub modality: Modality,
    pub points: Vec<[f64; 2]>,
    /// Where the run failed, if it did.
    pub failure: Option<[f64; 2]>,
}

impl Trace {
    pub fn new(label: String, modality: Modality, points: Vec<[f64; 2]>) -> Self {
        Self {
            label,
            modality,
            points,
            failure: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub campaign: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub summary: Vec<String>,
    pub traces: Vec<Trace>,
    pub obstacles: Vec<Obstacle>,
    /// Runs that ended in an error instead of an outcome.
    pub run_errors: usize,
}

impl Report {
    pub fn new(campaign: &str, columns: &[&str]) -> Self {
        Self {
            campaign: campaign.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            summary: Vec::new(),
            traces: Vec::new(),
            obstacles: Vec::new(),
            run_errors: 0,
        }
    }

    pub fn row(&mut self, values: Vec<String>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(values);
    }

    /// Index of a column; panics on a name the report never declared.
    pub fn column(&self, name: &str) -> usize {
        self.columns
            .iter()
            .position(|c| c == name)
            .unwrap_or_else(|| panic!("no column {name:?}"))
    }

    /// Parsed values of a numeric column over the rows that satisfy `keep`.
    pub fn values(&self, name: &str, keep: impl Fn(&[String]) -> bool) -> Vec<f64> {
        let c = self.column(name);
        self.rows
            .iter()
            .filter(|r| keep(r))
            .filter_map(|r| r[c].parse().ok())
            .collect()
    }

    pub fn csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    /// Summary lines plus mean ± std of every numeric column.
    pub fn summary_text(&self) -> String {
        let mut out = format!(
            "campaign = {:?}\nrows = {}\nrun_errors = {}\n\n",
            self.campaign,
            self.rows.len(),
            self.run_errors
        );
        for line in &self.summary {
            out.push_str(line);
            out.push('\n');
        }
        out.push('\n');
        for (k, name) in self.columns.iter().enumerate() {
            let vals: Vec<f64> = self.rows.iter().filter_map(|r| r[k].parse().ok()).collect();
            if vals.len() == self.rows.len() && !vals.is_empty() {
                let (m, s) = mean_std(&vals);
                let _ = writeln!(out, "{name}: {} ± {}", fmt(m), fmt(s));
            }
        }
        out
    }

    pub fn svg(&self) -> String {
        trajectory_svg(&self.traces, &self.obstacles)
    }
}

fn modality_color(m: Modality) -> &'static str {
    match m {
        Modality::SIL => "#1f77b4",
        Modality::VIL => "#2ca02c",
        Modality::MR => "#ff7f0e",
        Modality::RW => "#222222",
    }
}

pub const SVG_MARGIN: f64 = 0.2;
pub const SVG_SCALE: f64 = 100.0;

/// World-frame bounding box of all trace points and obstacle corners.
pub fn extent(traces: &[Trace], obstacles: &[Obstacle]) -> Option<([f64; 2], [f64; 2])> {
    let mut pts: Vec<[f64; 2]> = traces.iter().flat_map(|t| t.points.iter().copied()).collect();
    for o in obstacles {
        pts.extend(OrientedRect::new(&o.pose, &o.footprint).corners());
    }
    let first = *pts.first()?;
    Some(pts.iter().fold((first, first), |(lo, hi), p| {
        ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
    }))
}

/// Trajectories per modality with obstacle rectangles and failure dots.
/// One meter is 100 user units, with a 0.2 m margin around the extent; the
/// y axis points up.
pub fn trajectory_svg(traces: &[Trace], obstacles: &[Obstacle]) -> String {
    let (lo, hi) = extent(traces, obstacles).unwrap_or(([0.0, 0.0], [1.0, 1.0]));
    let (x0, y0) = (lo[0] - SVG_MARGIN, lo[1] - SVG_MARGIN);
    let w = (hi[0] - lo[0] + 2.0 * SVG_MARGIN) * SVG_SCALE;
    let h = (hi[1] - lo[1] + 2.0 * SVG_MARGIN) * SVG_SCALE;
    let tx = |p: [f64; 2]| ((p[0] - x0) * SVG_SCALE, h - (p[1] - y0) * SVG_SCALE);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1}" height="{h:.1}" viewBox="0 0 {w:.1} {h:.1}">"#
    );
    for o in obstacles {
        let c = OrientedRect::new(&o.pose, &o.footprint).corners();
        let pts: Vec<String> = c.iter().map(|p| { let (x, y) = tx(*p); format!("{x:.2},{y:.2}") }).collect();
        let _ = writeln!(
            s,
            r#"<polygon class="obstacle" points="{}" fill="rgb({},{},{})" />"#,
            pts.join(" "),
            o.color[0],
            o.color[1],
            o.color[2]
        );
    }
    for t in traces {
        if t.points.is_empty() {
            continue;
        }
        let mut d = String::new();
        for (k, p) in t.points.iter().enumerate() {
            let (x, y) = tx(*p);
            let _ = write!(d, "{}{x:.2},{y:.2} ", if k == 0 { "M" } else { "L" });
        }
        let _ = writeln!(
            s,
            r#"<path class="trace" data-label="{}" d="{}" fill="none" stroke="{}" stroke-width="1.5" />"#,
            t.label,
            d.trim_end(),
            modality_color(t.modality)
        );
        if let Some(f) = t.failure {
            let (x, y) = tx(f);
            let _ = writeln!(s, r#"<circle class="failure" cx="{x:.2}" cy="{y:.2}" r="4" fill="red" />"#);
        }
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Summary,
    Svg,
}

/// Write each report in the requested formats under `dir`, named after the
/// campaign; returns the written paths.
pub fn emit_report(reports: &[Report], formats: &[ReportFormat], dir: &Path) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::Validation("no results to report".into()));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for r in reports {
        for f in formats {
            let (ext, bytes) = match f {
                ReportFormat::Csv => ("csv", r.csv()),
                ReportFormat::Summary => ("summary.txt", r.summary_text().into_bytes()),
                ReportFormat::Svg => ("svg", r.svg().into_bytes()),
            };
            let path = dir.join(format!("{}.{ext}", r.campaign));
            fs::write(&path, bytes)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_rows_plus_header() {
        let mut r = Report::new("demo", &["a", "b"]);
        r.row(vec!["1".into(), "x".into()]);
        r.row(vec!["2".into(), "y".into()]);
        let text = String::from_utf8(r.csv()).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(r.summary_text().contains("a: 1.5 ± 0.5"));
    }

    #[test]
    fn svg_extent_of_circle() {
        let pts: Vec<[f64; 2]> = (0..=360)
            .map(|k| {
                let a = f64::from(k).to_radians();
                [1.0 + 0.5 * a.cos(), -2.0 + 0.5 * a.sin()]
            })
            .collect();
        let t = Trace::new("circle".into(), Modality::SIL, pts);
        let svg = trajectory_svg(&[t], &[]);
        // 1 m diameter plus two 0.2 m margins at 100 units per meter.
        assert!(svg.contains(r#"width="140.0" height="140.0""#), "{svg}");
        let d = svg.split(" d=\"").nth(1).unwrap().split('"').next().unwrap();
        let coords: Vec<[f64; 2]> = d
            .split_whitespace()
            .map(|c| {
                let mut it = c.trim_start_matches(['M', 'L']).split(',').map(|v| v.parse::<f64>().unwrap());
                [it.next().unwrap(), it.next().unwrap()]
            })
            .collect();
        let min_x = coords.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min);
        let max_x = coords.iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max);
        assert!((min_x - 20.0).abs() < 0.01 && (max_x - 120.0).abs() < 0.01);
    }

    #[test]
    fn empty_results_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_report(&[], &[ReportFormat::Csv], dir.path()), Err(Error::Validation(_))));
    }
}
