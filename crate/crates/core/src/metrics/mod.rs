//! Evaluation math: behavioral scoring of runs, the image-similarity
//! battery, point-cloud distances, IoU, lane alignment and the two
//! statistical tests.

mod geometric;
pub mod image;
mod stats;

use serde::{Deserialize, Serialize};

pub use geometric::{cloud_stats, iou, lane_alignment, CloudDistanceStats, PixelBox, LANE_SAMPLES};
pub use image::{image_battery, perceptual_distance, ImageMetricReport};
pub use stats::{cohens_d, mann_whitney_u, MannWhitney, EXACT_LIMIT};

use crate::error::{Error, Result};
use crate::geometry::discrete_frechet_points;
use crate::runtime::RunLog;
use crate::world::{lane_query, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorMetrics {
    pub frechet_to_reference: f64,
    pub completion_pct: f64,
    /// Percentage points relative to the reference run.
    pub completion_delta_vs_reference: f64,
    pub crashes: usize,
    pub out_of_road: usize,
    pub failure: bool,
}

/// Planar path of the vehicle, starting at the scenario start pose.
pub fn run_path(log: &RunLog, scenario: &Scenario) -> Vec<[f64; 2]> {
    std::iter::once(scenario.start.xy())
        .chain(log.ticks.iter().map(|r| r.real.xy()))
        .collect()
}

/// Share of the track length covered before the run ended, in percent.
pub fn completion_pct(log: &RunLog, scenario: &Scenario) -> f64 {
    let track = &scenario.track;
    let length = track.length();
    let mut last = lane_query(&scenario.start, track).arc_position;
    let mut total = 0.0;
    for r in &log.ticks {
        let arc = lane_query(&r.real, track).arc_position;
        let mut d = arc - last;
        if d > length / 2.0 {
            d -= length;
        } else if d < -length / 2.0 {
            d += length;
        }
        total += d;
        last = arc;
    }
    (100.0 * total / length).clamp(0.0, 100.0)
}

/// Score `log` against `reference`; both must come from `scenario`.
pub fn evaluate_run(log: &RunLog, reference: &RunLog, scenario: &Scenario) -> Result<BehaviorMetrics> {
    for l in [log, reference] {
        if l.header.scenario != scenario.name {
            return Err(Error::Argument(format!(
                "log of scenario {:?} evaluated against {:?}",
                l.header.scenario, scenario.name
            )));
        }
    }
    let frechet = discrete_frechet_points(&run_path(log, scenario), &run_path(reference, scenario))?;
    let completion = completion_pct(log, scenario);
    let crashes = log.events().filter(|(_, e)| e.starts_with("crash:")).count();
    let out_of_road = log.events().filter(|(_, e)| *e == "out_of_road").count();
    Ok(BehaviorMetrics {
        frechet_to_reference: frechet,
        completion_pct: completion,
        completion_delta_vs_reference: completion - completion_pct(reference, scenario),
        crashes,
        out_of_road,
        failure: crashes + out_of_road > 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ads::AdsChoice;
    use crate::geometry::Pose;
    use crate::mixing::Modality;
    use crate::plant::{ControlCommand, GapProfile};
    use crate::runtime::{run_closed_loop, Outcome, RunConfig, TickRecord};
    use crate::world::build_scenario;

    fn synthetic(scenario: &Scenario, from: f64, to: f64, lateral: f64, end: Option<&str>) -> RunLog {
        let mut log = run_closed_loop(scenario, Modality::SIL, &AdsChoice::ground_truth(), &GapProfile::zero(), 1, 0.01, &RunConfig::default()).unwrap();
        let n = 200;
        log.ticks = (0..n)
            .map(|k| {
                let s = from + (to - from) * k as f64 / (n - 1) as f64;
                let p = scenario.track.pose_at(s, lateral);
                let pose = Pose { timestamp: k as f64 * 0.01, ..p };
                TickRecord {
                    tick: k,
                    t: pose.timestamp,
                    command: ControlCommand::default(),
                    twin: pose,
                    real: pose,
                    events: if k + 1 == n { end.map(|e| vec![e.to_string()]).unwrap_or_default() } else { vec![] },
                }
            })
            .collect();
        log
    }

    #[test]
    fn self_comparison_is_zero() {
        let sc = build_scenario("N1").unwrap();
        let log = synthetic(&sc, 2.25, 4.0, 0.0, None);
        let m = evaluate_run(&log, &log, &sc).unwrap();
        assert_eq!(m.frechet_to_reference, 0.0);
        assert_eq!(m.completion_delta_vs_reference, 0.0);
        assert!(!m.failure);
    }

    #[test]
    fn half_track_crash() {
        let sc = build_scenario("N1").unwrap();
        let half = sc.track.length() / 2.0;
        let mut log = synthetic(&sc, 2.25, 2.25 + half, 0.0, Some("crash:obs1"));
        log.outcome = Outcome::Crash("obs1".into());
        let m = evaluate_run(&log, &log, &sc).unwrap();
        assert!((m.completion_pct - 50.0).abs() < 0.5);
        assert_eq!(m.crashes, 1);
        assert!(m.failure);
    }

    #[test]
    fn parallel_straight_offset() {
        let sc = build_scenario("G").unwrap();
        // The first stadium straight runs from the start pose.
        let a = synthetic(&sc, 0.05, 0.9, 0.0, None);
        let b = synthetic(&sc, 0.05, 0.9, 0.2, None);
        let pa: Vec<[f64; 2]> = a.ticks.iter().map(|r| r.real.xy()).collect();
        let pb: Vec<[f64; 2]> = b.ticks.iter().map(|r| r.real.xy()).collect();
        let f = discrete_frechet_points(&pa, &pb).unwrap();
        assert!((f - 0.2).abs() < 1e-6, "{f}");
    }

    #[test]
    fn scenario_mismatch() {
        let n1 = build_scenario("N1").unwrap();
        let n2 = build_scenario("N2").unwrap();
        let log = synthetic(&n1, 2.25, 3.0, 0.0, None);
        assert!(matches!(evaluate_run(&log, &log, &n2), Err(Error::Argument(_))));
    }
}
