use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{dbscan_cluster, plan_lattice_from, AdsStep, LatticeParams, ObstacleDetection};
use crate::control::{lookahead_point, pid_speed, pure_pursuit, PidParams, PidState, PurePursuitParams};
use crate::error::{Error, Result};
use crate::mixing::PerceptionFrame;
use crate::plant::{ControlCommand, VehicleState};
use crate::sensing::{depth_to_cloud, PointCloud, SensorRig};
use crate::world::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerceptionMode {
    Perception,
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModularConfig {
    pub eps: f64,
    pub min_pts: usize,
    /// Vehicle-frame height band `[lo, hi]` kept before clustering.
    pub height_band: [f64; 2],
    /// Extra lateral margin beyond the lane edge kept before clustering.
    pub corridor_margin: f64,
    /// Edge of the voxel grid the cloud is thinned on; 0 keeps every point.
    pub voxel_size: f64,
    /// Distance along the planned path to the pure-pursuit target.
    pub path_lookahead: f64,
    pub lattice: LatticeParams,
    pub pursuit: PurePursuitParams,
    pub pid: PidParams,
    pub target_speed: f64,
    /// Seconds a remembered obstacle survives without being re-detected.
    pub memory_horizon: f64,
    /// Detections closer than this to a remembered obstacle update it.
    pub merge_radius: f64,
    /// Remembered obstacles further behind the rear axle are dropped.
    pub forget_behind: f64,
    pub control_dt: f64,
}

impl Default for ModularConfig {
    fn default() -> Self {
        Self {
            eps: 0.08,
            min_pts: 6,
            height_band: [0.03, 0.5],
            corridor_margin: 0.1,
            voxel_size: 0.02,
            path_lookahead: 0.6,
            lattice: LatticeParams::default(),
            pursuit: PurePursuitParams {
                cruise_throttle: 1.0,
                ..PurePursuitParams::default()
            },
            pid: PidParams::default(),
            target_speed: 0.5,
            memory_horizon: 1.5,
            merge_radius: 0.15,
            forget_behind: 0.25,
            control_dt: 0.05,
        }
    }
}

impl ModularConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || self.min_pts < 1 {
            return Err(Error::Validation("DBSCAN needs eps > 0 and min_pts ≥ 1".into()));
        }
        if !(self.height_band[0] < self.height_band[1]) {
            return Err(Error::Validation("empty height band".into()));
        }
        if !(self.voxel_size >= 0.0) || !(self.path_lookahead > 0.0) {
            return Err(Error::Validation("voxel size and path lookahead must be positive".into()));
        }
        if !(self.control_dt > 0.0) || !(self.target_speed >= 0.0) {
            return Err(Error::Validation("control_dt and target_speed must be positive".into()));
        }
        if !(self.memory_horizon >= 0.0 && self.merge_radius >= 0.0) {
            return Err(Error::Validation("memory settings must be non-negative".into()));
        }
        self.lattice.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RememberedObstacle {
    /// Running mean of the matched detections, world frame.
    pub position: [f64; 2],
    pub height: f64,
    pub observations: u32,
    pub last_seen: f64,
}

/// Controller and obstacle-memory state threaded between control ticks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModularState {
    pub pid: PidState,
    pub memory: Vec<RememberedObstacle>,
    /// Lateral offset chosen by the planner on the previous tick.
    pub last_offset: Option<f64>,
    seen_ids: BTreeSet<String>,
}

/// First point (in index order) of every occupied voxel.
pub fn voxel_downsample(cloud: &PointCloud, size: f64) -> PointCloud {
    if size <= 0.0 {
        return cloud.clone();
    }
    let mut seen = HashSet::new();
    cloud.filtered(|p| seen.insert(p.map(|v| (v / size).floor() as i64)))
}

/// Vehicle-frame detections from one depth frame.
pub fn perceive(
    frame: &PerceptionFrame,
    state: &VehicleState,
    scenario: &Scenario,
    rig: &SensorRig,
    config: &ModularConfig,
) -> Result<Vec<ObstacleDetection>> {
    let depth = frame
        .depth
        .as_ref()
        .ok_or_else(|| Error::Wiring("modular ADS needs a depth frame".into()))?;
    let depth = if rig.depth_scale == 1.0 {
        depth.clone()
    } else {
        depth.scaled(rig.depth_scale as f32)
    };
    let cloud = depth_to_cloud(&depth, &rig.tof, rig.min_range)?.to_vehicle(&rig.tof_mount)?;
    let [lo, hi] = config.height_band;
    let floor = scenario.floor_map();
    let limit = scenario.track.lane_half_width + config.corridor_margin;
    let pose = state.pose;
    let kept = cloud.filtered(|p| {
        if p[2] < lo || p[2] > hi {
            return false;
        }
        let w = pose.transform_point(*p);
        floor.frenet([w[0], w[1]]).is_some_and(|(lat, _)| lat.abs() <= limit)
    });
    dbscan_cluster(&voxel_downsample(&kept, config.voxel_size), config.eps, config.min_pts)
}

fn ground_truth(
    state: &VehicleState,
    scenario: &Scenario,
    rig: &SensorRig,
    config: &ModularConfig,
    memory: &mut ModularState,
    events: &mut Vec<String>,
) -> Vec<ObstacleDetection> {
    let mut out = Vec::new();
    for o in &scenario.obstacles {
        let local = state
            .pose
            .inverse_transform_point([o.pose.x, o.pose.y, o.footprint.height / 2.0]);
        let range = local[0].hypot(local[1]);
        if local[0] < -config.forget_behind || range > rig.max_range {
            continue;
        }
        if memory.seen_ids.insert(o.id.clone()) {
            events.push(format!("detect:{range:.3}"));
        }
        out.push(ObstacleDetection {
            centroid: local,
            point_count: config.min_pts,
            cluster_id: out.len(),
        });
    }
    out
}

fn remember(
    detections: &[ObstacleDetection],
    state: &VehicleState,
    config: &ModularConfig,
    memory: &mut ModularState,
    events: &mut Vec<String>,
) -> Vec<ObstacleDetection> {
    let now = state.pose.timestamp;
    for d in detections {
        let w = state.pose.transform_point(d.centroid);
        let xy = [w[0], w[1]];
        let near = memory
            .memory
            .iter_mut()
            .map(|m| ((m.position[0] - xy[0]).hypot(m.position[1] - xy[1]), m))
            .filter(|(dist, _)| *dist <= config.merge_radius)
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match near {
            Some((_, m)) => {
                let n = m.observations as f64;
                m.position = [
                    (m.position[0] * n + xy[0]) / (n + 1.0),
                    (m.position[1] * n + xy[1]) / (n + 1.0),
                ];
                m.height = (m.height * n + w[2]) / (n + 1.0);
                m.observations += 1;
                m.last_seen = now;
            }
            None => {
                let range = d.centroid[0].hypot(d.centroid[1]);
                events.push(format!("detect:{range:.3}"));
                memory.memory.push(RememberedObstacle {
                    position: xy,
                    height: w[2],
                    observations: 1,
                    last_seen: now,
                });
            }
        }
    }
    memory.memory.retain(|m| {
        let local = state.pose.inverse_transform_point([m.position[0], m.position[1], 0.0]);
        now - m.last_seen <= config.memory_horizon && local[0] >= -config.forget_behind
    });
    memory
        .memory
        .iter()
        .enumerate()
        .map(|(k, m)| ObstacleDetection {
            centroid: state
                .pose
                .inverse_transform_point([m.position[0], m.position[1], m.height]),
            point_count: config.min_pts,
            cluster_id: k,
        })
        .collect()
}

/// One control tick of the modular stack: perception (or ground truth),
/// lattice planning, pure pursuit and PID speed control.
pub fn run_modular(
    frame: &PerceptionFrame,
    state: &VehicleState,
    scenario: &Scenario,
    rig: &SensorRig,
    config: &ModularConfig,
    mode: PerceptionMode,
    memory: &mut ModularState,
) -> Result<AdsStep> {
    let mut events = Vec::new();
    let detections = match mode {
        PerceptionMode::GroundTruth => {
            ground_truth(state, scenario, rig, config, memory, &mut events)
        }
        PerceptionMode::Perception => {
            let fresh = perceive(frame, state, scenario, rig, config)?;
            remember(&fresh, state, config, memory, &mut events)
        }
    };
    let t = state.pose.timestamp;
    let previous = memory.last_offset;
    let path = match plan_lattice_from(&scenario.track, state, &detections, &config.lattice, previous) {
        Ok(c) => {
            memory.last_offset = Some(c.offset);
            c.waypoints
        }
        Err(Error::PlannerBlocked) => {
            memory.pid = PidState::default();
            memory.last_offset = None;
            events.push("planner_blocked".into());
            return Ok(AdsStep {
                command: ControlCommand::stop(0.0, t),
                events,
                blocked: true,
            });
        }
        Err(e) => return Err(e),
    };
    let target = lookahead_point(&path, &state.pose, config.path_lookahead)
        .ok_or_else(|| Error::Degenerate("planner returned an empty path".into()))?;
    let base = pure_pursuit(state, target, &config.pursuit);
    let command = pid_speed(
        config.target_speed,
        state.speed,
        &base,
        &config.pid,
        &mut memory.pid,
        config.control_dt,
    );
    Ok(AdsStep {
        command,
        events,
        blocked: false,
    })
}
