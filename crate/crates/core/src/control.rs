//! Waypoint follower (pure pursuit) and PID speed controller.

use serde::{Deserialize, Serialize};

use crate::geometry::Pose;
use crate::plant::{ControlCommand, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PurePursuitParams {
    pub lookahead: f64,
    pub goal_tolerance: f64,
    pub cruise_throttle: f64,
    /// Vehicle geometry the steering law is computed for.
    pub wheelbase: f64,
    pub max_steer: f64,
}

impl Default for PurePursuitParams {
    fn default() -> Self {
        Self {
            lookahead: 0.3,
            goal_tolerance: 0.05,
            cruise_throttle: 0.35,
            wheelbase: 0.25,
            max_steer: 0.35,
        }
    }
}

/// Steer toward `target` along the pure-pursuit arc. Brakes to a stop when
/// the target is within the goal tolerance.
pub fn pure_pursuit(
    state: &VehicleState,
    target: [f64; 2],
    params: &PurePursuitParams,
) -> ControlCommand {
    let t = state.pose.timestamp;
    let local = state.pose.inverse_transform_point([target[0], target[1], 0.0]);
    let dist = local[0].hypot(local[1]);
    if !dist.is_finite() {
        return ControlCommand::stop(0.0, t);
    }
    if dist <= params.goal_tolerance {
        return ControlCommand::stop(0.0, t);
    }
    let alpha = local[1].atan2(local[0]);
    let d = dist.max(params.lookahead);
    let angle = (2.0 * params.wheelbase * alpha.sin() / d).atan();
    let steering = (-angle / params.max_steer).clamp(-1.0, 1.0);
    ControlCommand {
        throttle: params.cruise_throttle.clamp(0.0, 1.0),
        steering,
        brake: 0.0,
        timestamp: t,
    }
}

/// First path point at least `lookahead` away from `pose`, searching
/// forward from the point closest to it; the last point if none is.
pub fn lookahead_point(path: &[[f64; 2]], pose: &Pose, lookahead: f64) -> Option<[f64; 2]> {
    let p = pose.xy();
    let d = |q: &[f64; 2]| (q[0] - p[0]).hypot(q[1] - p[1]);
    let closest = path
        .iter()
        .enumerate()
        .min_by(|a, b| d(a.1).total_cmp(&d(b.1)))?
        .0;
    path[closest..]
        .iter()
        .find(|q| d(q) >= lookahead)
        .or(path.last())
        .copied()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidParams {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Bound on the integral term's contribution to the multiplier.
    pub integral_clamp: f64,
    pub multiplier_range: [f64; 2],
}

impl Default for PidParams {
    fn default() -> Self {
        Self {
            kp: 0.1,
            ki: 0.8,
            kd: 0.0,
            integral_clamp: 0.5,
            multiplier_range: [0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: Option<f64>,
}

/// Scale `base.throttle` by a PID multiplier tracking `target_speed`.
pub fn pid_speed(
    target_speed: f64,
    measured_speed: f64,
    base: &ControlCommand,
    params: &PidParams,
    state: &mut PidState,
    dt: f64,
) -> ControlCommand {
    if target_speed <= 0.0 {
        *state = PidState::default();
        return ControlCommand::stop(base.steering, base.timestamp);
    }
    let e = target_speed - measured_speed;
    if params.ki > 0.0 {
        let bound = params.integral_clamp / params.ki;
        state.integral = (state.integral + e * dt).clamp(-bound, bound);
    }
    let derivative = match state.prev_error {
        Some(prev) if dt > 0.0 => (e - prev) / dt,
        _ => 0.0,
    };
    state.prev_error = Some(e);
    let [lo, hi] = params.multiplier_range;
    let multiplier =
        (params.kp * e + params.ki * state.integral + params.kd * derivative).clamp(lo, hi);
    ControlCommand {
        throttle: (base.throttle * multiplier).clamp(0.0, 1.0),
        ..*base
    }
}
