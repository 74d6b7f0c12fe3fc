use serde::{Deserialize, Serialize};

use super::ObstacleDetection;
use crate::error::{Error, Result};
use crate::plant::VehicleState;
use crate::world::{lane_query, Track};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeParams {
    pub lateral_offsets: Vec<f64>,
    pub horizon: f64,
    pub samples_per_candidate: usize,
    /// `[w_lat, w_obs, w_curv]`.
    pub weights: [f64; 3],
    pub clearance: f64,
}

impl Default for LatticeParams {
    fn default() -> Self {
        Self {
            lateral_offsets: (-4..=4).map(|k| f64::from(k) / 10.0).collect(),
            horizon: 1.5,
            samples_per_candidate: 16,
            weights: [1.0, 5.0, 0.2],
            clearance: 0.3,
        }
    }
}

impl LatticeParams {
    pub fn validate(&self) -> Result<()> {
        if !self.lateral_offsets.contains(&0.0) {
            return Err(Error::Validation("lattice offsets must include 0".into()));
        }
        if self.lateral_offsets.iter().any(|o| !o.is_finite()) {
            return Err(Error::Validation("non-finite lattice offset".into()));
        }
        if !(self.clearance > 0.0) || !(self.horizon > 0.0) || self.samples_per_candidate < 2 {
            return Err(Error::Validation(
                "lattice needs positive clearance and horizon and at least 2 samples".into(),
            ));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Validation("lattice weights must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub offset: f64,
    /// Infinite when the path enters a detection's clearance disk.
    pub cost: f64,
    pub waypoints: Vec<[f64; 2]>,
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let u = if len2 > 0.0 {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - u * ab[0]).hypot(p[1] - a[1] - u * ab[1])
}

/// Smallest distance from `p` to the polyline through `path`.
pub fn path_distance(path: &[[f64; 2]], p: [f64; 2]) -> f64 {
    match path {
        [] => f64::INFINITY,
        [only] => (p[0] - only[0]).hypot(p[1] - only[1]),
        _ => path
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Mean curvature magnitude of the constant-offset path over the horizon
/// plus the peak curvature of a smooth lane change from `reference` to
/// `offset` within the horizon. Offsets past the local center of curvature
/// are infinite.
fn curvature_proxy(track: &Track, arc: f64, reference: f64, offset: f64, params: &LatticeParams) -> f64 {
    let n = params.samples_per_candidate;
    let mut sum = 0.0;
    for k in 0..n {
        let kappa = track.curvature_at(arc + params.horizon * k as f64 / (n - 1) as f64);
        let stretch = 1.0 - kappa * offset;
        if stretch <= 0.0 {
            return f64::INFINITY;
        }
        sum += (kappa / stretch).abs();
    }
    sum / n as f64 + 4.0 * (offset - reference).abs() / params.horizon.powi(2)
}

/// Every lattice candidate with its cost, in the order of
/// `params.lateral_offsets`. Detections are in the vehicle frame.
pub fn lattice_candidates(
    track: &Track,
    state: &VehicleState,
    detections: &[ObstacleDetection],
    params: &LatticeParams,
) -> Result<Vec<Candidate>> {
    candidates_from(track, state, detections, params, None)
}

/// Candidates with lane-change curvature measured from `reference` instead
/// of the vehicle's current lateral offset.
pub fn candidates_from(
    track: &Track,
    state: &VehicleState,
    detections: &[ObstacleDetection],
    params: &LatticeParams,
    reference: Option<f64>,
) -> Result<Vec<Candidate>> {
    params.validate()?;
    let q = lane_query(&state.pose, track);
    let reference = reference.unwrap_or(q.lateral_offset);
    let world: Vec<[f64; 2]> = detections
        .iter()
        .map(|d| {
            let w = state.pose.transform_point(d.centroid);
            [w[0], w[1]]
        })
        .collect();
    let [w_lat, w_obs, w_curv] = params.weights;
    let n = params.samples_per_candidate;
    Ok(params
        .lateral_offsets
        .iter()
        .map(|&offset| {
            let waypoints: Vec<[f64; 2]> = (0..n)
                .map(|k| {
                    let s = q.arc_position + params.horizon * k as f64 / (n - 1) as f64;
                    track.frenet_to_world(s, offset)
                })
                .collect();
            let mut penalties: Vec<f64> = world
                .iter()
                .map(|p| {
                    let d = path_distance(&waypoints, *p);
                    if d < params.clearance {
                        f64::INFINITY
                    } else {
                        (params.clearance / d).powi(2)
                    }
                })
                .collect();
            // Summation order fixed so the cost ignores detection order.
            penalties.sort_by(f64::total_cmp);
            let obstacle: f64 = penalties.iter().sum();
            let cost = w_lat * offset.abs()
                + w_obs * obstacle
                + w_curv * curvature_proxy(track, q.arc_position, reference, offset, params);
            Candidate {
                offset,
                cost,
                waypoints,
            }
        })
        .collect())
}

/// Waypoints of the cheapest candidate; ties go to the smaller |offset|,
/// then to the left.
pub fn plan_lattice(
    track: &Track,
    state: &VehicleState,
    detections: &[ObstacleDetection],
    params: &LatticeParams,
) -> Result<Vec<[f64; 2]>> {
    let candidates = lattice_candidates(track, state, detections, params)?;
    select(candidates).map(|c| c.waypoints)
}

/// Like [`plan_lattice`] but keeps lane changes measured from the previously
/// chosen offset, and returns the whole chosen candidate.
pub fn plan_lattice_from(
    track: &Track,
    state: &VehicleState,
    detections: &[ObstacleDetection],
    params: &LatticeParams,
    previous: Option<f64>,
) -> Result<Candidate> {
    select(candidates_from(track, state, detections, params, previous)?)
}

pub(crate) fn select(candidates: Vec<Candidate>) -> Result<Candidate> {
    candidates
        .into_iter()
        .filter(|c| c.cost.is_finite())
        .min_by(|a, b| {
            a.cost
                .total_cmp(&b.cost)
                .then(a.offset.abs().total_cmp(&b.offset.abs()))
                .then(b.offset.total_cmp(&a.offset))
        })
        .ok_or(Error::PlannerBlocked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::world::nominal_track;
    use proptest::prelude::*;

    fn on_track(track: &Track, s: f64) -> VehicleState {
        VehicleState::at_rest(track.pose_at(s, 0.0))
    }

    fn ahead(state: &VehicleState, track: &Track, ds: f64, d: f64) -> ObstacleDetection {
        let q = lane_query(&state.pose, track);
        let w = track.frenet_to_world(q.arc_position + ds, d);
        ObstacleDetection {
            centroid: state.pose.inverse_transform_point([w[0], w[1], 0.1]),
            point_count: 10,
            cluster_id: 0,
        }
    }

    #[test]
    fn free_road_keeps_centerline() {
        let t = nominal_track();
        let s = on_track(&t, 5.3);
        let wp = plan_lattice(&t, &s, &[], &LatticeParams::default()).unwrap();
        let (lat, _) = t.project(wp[wp.len() / 2]);
        assert!(lat.abs() < 1e-3);
    }

    #[test]
    fn obstacle_on_centerline_is_avoided_by_cheapest_clear_offset() {
        let t = nominal_track();
        let s = on_track(&t, 5.1);
        let p = LatticeParams::default();
        let det = [ahead(&s, &t, 1.0, 0.0)];
        let all = lattice_candidates(&t, &s, &det, &p).unwrap();
        let world = s.pose.transform_point(det[0].centroid);
        // Enumerate costs independently, with curvature from circles through
        // consecutive waypoints, and pick the best by hand.
        let menger = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
            let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            let ab = (b[0] - a[0]).hypot(b[1] - a[1]);
            let bc = (c[0] - b[0]).hypot(c[1] - b[1]);
            let ca = (a[0] - c[0]).hypot(a[1] - c[1]);
            2.0 * cross / (ab * bc * ca)
        };
        let mut ranked = Vec::new();
        for c in &all {
            let d = path_distance(&c.waypoints, [world[0], world[1]]);
            let k: Vec<f64> = c.waypoints.windows(3).map(|w| menger(w[0], w[1], w[2]).abs()).collect();
            let curv = k.iter().sum::<f64>() / k.len() as f64 + 4.0 * c.offset.abs() / p.horizon.powi(2);
            let expected = if d < p.clearance {
                f64::INFINITY
            } else {
                p.weights[0] * c.offset.abs() + p.weights[1] * (p.clearance / d).powi(2) + p.weights[2] * curv
            };
            if expected.is_finite() {
                assert!((c.cost - expected).abs() < 0.05, "{} vs {}", c.cost, expected);
                ranked.push((expected, c.offset));
            } else {
                assert!(c.cost.is_infinite());
            }
        }
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(ranked[1].0 - ranked[0].0 > 0.1);
        let chosen = select(all).unwrap();
        assert_eq!(chosen.offset, ranked[0].1);
        assert!(chosen.offset.abs() >= 0.3 - 1e-9);
    }

    #[test]
    fn fully_covered_lattice_is_blocked() {
        let t = nominal_track();
        let s = on_track(&t, 5.1);
        let det: Vec<_> = [-0.4, -0.2, 0.0, 0.2, 0.4]
            .iter()
            .map(|d| ahead(&s, &t, 0.8, *d))
            .collect();
        assert_eq!(
            plan_lattice(&t, &s, &det, &LatticeParams::default()),
            Err(Error::PlannerBlocked)
        );
    }

    #[test]
    fn offsets_must_include_zero() {
        let p = LatticeParams {
            lateral_offsets: vec![-0.1, 0.1],
            ..LatticeParams::default()
        };
        let t = nominal_track();
        assert!(plan_lattice(&t, &on_track(&t, 1.0), &[], &p).is_err());
    }

    proptest! {
        #[test]
        fn never_enters_clearance_and_ignores_order(
            s0 in 0.0..9.0f64,
            obs in proptest::collection::vec((0.2..1.6f64, -0.5..0.5f64), 0..4),
        ) {
            let t = nominal_track();
            let s = on_track(&t, s0);
            let p = LatticeParams::default();
            let det: Vec<_> = obs.iter().map(|(ds, d)| ahead(&s, &t, *ds, *d)).collect();
            let a = plan_lattice(&t, &s, &det, &p);
            let mut rev = det.clone();
            rev.reverse();
            let b = plan_lattice(&t, &s, &rev, &p);
            prop_assert_eq!(&a, &b);
            if let Ok(path) = a {
                for d in &det {
                    let w = s.pose.transform_point(d.centroid);
                    prop_assert!(path_distance(&path, [w[0], w[1]]) >= p.clearance);
                }
            }
        }
    }

    #[test]
    fn detections_are_vehicle_frame() {
        let t = nominal_track();
        let mut s = on_track(&t, 5.1);
        s.pose = Pose { timestamp: 3.0, ..s.pose };
        let det = [ahead(&s, &t, 1.0, 0.0)];
        let w = s.pose.transform_point(det[0].centroid);
        let (lat, _) = t.project([w[0], w[1]]);
        assert!(lat.abs() < 1e-6);
    }
}
