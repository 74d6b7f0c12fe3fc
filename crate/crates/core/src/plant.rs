//! Vehicle dynamics: the kinematic digital twin and the pseudo-real plant.
//!
//! Both plants share one kinematic bicycle model; the pseudo-real plant is
//! the twin with a [`GapProfile`] applied to its parameters. A zero gap
//! reproduces the twin bit for bit.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose};

/// `[throttle, steering, brake]` with the time it was issued.
///
/// Steering is normalized to [−1, 1]; negative steers left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ControlCommand {
    pub throttle: f64,
    pub steering: f64,
    pub brake: f64,
    pub timestamp: f64,
}

impl ControlCommand {
    pub fn new(throttle: f64, steering: f64, brake: f64, timestamp: f64) -> Result<Self> {
        let c = Self {
            throttle,
            steering,
            brake,
            timestamp,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn stop(steering: f64, timestamp: f64) -> Self {
        Self {
            throttle: 0.0,
            steering: steering.clamp(-1.0, 1.0),
            brake: 1.0,
            timestamp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64, lo: f64, hi: f64| v.is_finite() && v >= lo && v <= hi;
        if !ok(self.throttle, 0.0, 1.0) {
            return Err(Error::Argument(format!("throttle {} outside [0, 1]", self.throttle)));
        }
        if !ok(self.steering, -1.0, 1.0) {
            return Err(Error::Argument(format!("steering {} outside [-1, 1]", self.steering)));
        }
        if !ok(self.brake, 0.0, 1.0) {
            return Err(Error::Argument(format!("brake {} outside [0, 1]", self.brake)));
        }
        if !self.timestamp.is_finite() {
            return Err(Error::Argument("non-finite command timestamp".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct VehicleState {
    /// Rear-axle pose.
    pub pose: Pose,
    /// m/s, never negative.
    pub speed: f64,
    /// Front-wheel angle in radians, positive turns left (counter-clockwise).
    pub steering_angle: f64,
}

impl VehicleState {
    pub fn at_rest(pose: Pose) -> Self {
        Self {
            pose,
            speed: 0.0,
            steering_angle: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub wheelbase: f64,
    pub max_steer: f64,
    /// Acceleration per unit of throttle above the deadzone, (m/s²)/unit.
    pub throttle_gain: f64,
    pub throttle_deadzone: f64,
    /// Linear speed drag, 1/s.
    pub drag: f64,
    /// Deceleration at full brake, m/s².
    pub brake_decel: f64,
    pub command_latency: f64,
    pub steer_scale_left: f64,
    pub steer_scale_right: f64,
}

/// Twin throttle gain: 3.74 m in 3 s from rest at throttle 0.365 with the
/// drag below, i.e. the real 2.87 m plus the twin's 0.87 m overestimate.
pub const TWIN_THROTTLE_GAIN: f64 = 85.106_380_584_816_85;

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            wheelbase: 0.25,
            max_steer: 0.35,
            throttle_gain: TWIN_THROTTLE_GAIN,
            throttle_deadzone: 0.33,
            drag: 2.0,
            brake_decel: 3.0,
            command_latency: 0.0,
            steer_scale_left: 1.0,
            steer_scale_right: 1.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.wheelbase,
            self.max_steer,
            self.throttle_gain,
            self.throttle_deadzone,
            self.drag,
            self.brake_decel,
            self.command_latency,
            self.steer_scale_left,
            self.steer_scale_right,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Validation("non-finite plant parameter".into()));
        }
        if !(self.wheelbase > 0.0) {
            return Err(Error::Validation("wheelbase must be positive".into()));
        }
        if !(self.max_steer > 0.0 && self.max_steer < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Validation("max_steer must be in (0, π/2)".into()));
        }
        if !(0.0..1.0).contains(&self.throttle_deadzone) {
            return Err(Error::Validation("throttle deadzone must be in [0, 1)".into()));
        }
        if !(self.steer_scale_left > 0.0 && self.steer_scale_right > 0.0) {
            return Err(Error::Validation("steering scales must be positive".into()));
        }
        if self.throttle_gain < 0.0 || self.drag < 0.0 || self.brake_decel < 0.0 {
            return Err(Error::Validation("gain, drag and brake must be non-negative".into()));
        }
        if self.command_latency < 0.0 {
            return Err(Error::Validation("latency must be non-negative".into()));
        }
        Ok(())
    }

    /// Signed wheel angle for a normalized command (positive = left).
    pub fn wheel_angle(&self, steering: f64) -> f64 {
        let scale = if steering < 0.0 {
            self.steer_scale_left
        } else {
            self.steer_scale_right
        };
        (-self.max_steer * scale * steering).clamp(-self.max_steer, self.max_steer)
    }

    /// Steady-state turning radius of the rear axle for a steering command.
    pub fn turning_radius(&self, steering: f64) -> f64 {
        self.wheelbase / self.wheel_angle(steering).abs().tan()
    }

    /// Delay-line length in ticks; sub-tick latency rounds up.
    pub fn latency_ticks(&self, dt: f64) -> usize {
        if self.command_latency <= 0.0 {
            0
        } else {
            (self.command_latency / dt - 1e-9).ceil() as usize
        }
    }
}

/// Additive twin→pseudo-real parameter deltas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ActuationGap {
    pub wheelbase: f64,
    pub max_steer: f64,
    pub throttle_gain: f64,
    pub throttle_deadzone: f64,
    pub drag: f64,
    pub brake_decel: f64,
    pub command_latency: f64,
    pub steer_scale_left: f64,
    pub steer_scale_right: f64,
}

/// Sensor discrepancies of the pseudo-real cameras.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PerceptionGap {
    /// Additive Gaussian noise σ per RGB channel, in 8-bit levels.
    pub rgb_sigma: [f64; 3],
    /// Constant brightness offset, 8-bit levels.
    pub exposure_offset: f64,
    /// Gaussian depth noise σ on valid returns, meters.
    pub depth_sigma: f64,
    /// Probability that a valid return is lost.
    pub depth_dropout: f64,
    /// Principal-point miscalibration of the real RGB camera, pixels.
    pub principal_offset_px: [f64; 2],
}

impl PerceptionGap {
    pub fn is_zero(&self) -> bool {
        *self == PerceptionGap::default()
    }

    pub fn rgb_is_zero(&self) -> bool {
        self.rgb_sigma == [0.0; 3] && self.exposure_offset == 0.0
    }

    pub fn depth_is_zero(&self) -> bool {
        self.depth_sigma == 0.0 && self.depth_dropout == 0.0
    }
}

/// The two reality-gap dimensions made explicit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct GapProfile {
    pub actuation: ActuationGap,
    pub perception: PerceptionGap,
}

impl GapProfile {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.perception;
        if p.rgb_sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0))
            || !(p.depth_sigma.is_finite() && p.depth_sigma >= 0.0)
        {
            return Err(Error::Validation("noise σ must be finite and non-negative".into()));
        }
        if !(0.0..=1.0).contains(&p.depth_dropout) {
            return Err(Error::Validation("depth dropout must be in [0, 1]".into()));
        }
        if !p.exposure_offset.is_finite()
            || p.principal_offset_px.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Validation("non-finite perception gap".into()));
        }
        make_pseudo_real(&PlantParams::default(), self).validate()
    }
}

/// Twin parameters perturbed by the actuation deltas of `gap`.
pub fn make_pseudo_real(twin: &PlantParams, gap: &GapProfile) -> PlantParams {
    let d = &gap.actuation;
    PlantParams {
        wheelbase: twin.wheelbase + d.wheelbase,
        max_steer: twin.max_steer + d.max_steer,
        throttle_gain: twin.throttle_gain + d.throttle_gain,
        throttle_deadzone: twin.throttle_deadzone + d.throttle_deadzone,
        drag: twin.drag + d.drag,
        brake_decel: twin.brake_decel + d.brake_decel,
        command_latency: twin.command_latency + d.command_latency,
        steer_scale_left: twin.steer_scale_left + d.steer_scale_left,
        steer_scale_right: twin.steer_scale_right + d.steer_scale_right,
    }
}

/// One integration step of the kinematic bicycle.
///
/// Speed is updated first and the rear axle then advances along an exact
/// circular arc of the commanded curvature, so constant-steering runs trace
/// true circles.
pub fn step(
    state: &VehicleState,
    cmd: &ControlCommand,
    params: &PlantParams,
    dt: f64,
) -> Result<VehicleState> {
    if !(dt > 0.0) {
        return Err(Error::Argument(format!("dt must be positive, got {dt}")));
    }
    cmd.validate()?;
    let angle = params.wheel_angle(cmd.steering);
    let accel = params.throttle_gain * (cmd.throttle - params.throttle_deadzone).max(0.0)
        - params.drag * state.speed
        - params.brake_decel * cmd.brake;
    let speed = (state.speed + accel * dt).max(0.0);
    let ds = speed * dt;
    let kappa = angle.tan() / params.wheelbase;

    let p = state.pose;
    let mut pose = p;
    if ds > 0.0 {
        let dyaw = kappa * ds;
        if dyaw.abs() < 1e-12 {
            let (s, c) = p.yaw.sin_cos();
            pose.x = p.x + ds * c;
            pose.y = p.y + ds * s;
        } else {
            let yaw1 = p.yaw + dyaw;
            pose.x = p.x + (yaw1.sin() - p.yaw.sin()) / kappa;
            pose.y = p.y + (p.yaw.cos() - yaw1.cos()) / kappa;
            pose.yaw = normalize_angle(yaw1);
        }
    }
    pose.timestamp = p.timestamp + dt;
    Ok(VehicleState {
        pose,
        speed,
        steering_angle: angle,
    })
}

/// Stateful plant: parameters, current state and the command delay line.
#[derive(Debug, Clone)]
pub struct Plant {
    params: PlantParams,
    state: VehicleState,
    delay: VecDeque<ControlCommand>,
    latency_ticks: usize,
    dt: f64,
}

impl Plant {
    pub fn new(params: PlantParams, initial: VehicleState, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) {
            return Err(Error::Argument(format!("dt must be positive, got {dt}")));
        }
        let latency_ticks = params.latency_ticks(dt);
        let delay = std::iter::repeat_n(ControlCommand::default(), latency_ticks).collect();
        Ok(Self {
            params,
            state: initial,
            delay,
            latency_ticks,
            dt,
        })
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn params(&self) -> &PlantParams {
        &self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Overwrite the pose (used by pose injection into the simulator).
    pub fn set_pose(&mut self, pose: Pose) {
        self.state.pose = pose;
    }

    pub fn set_state(&mut self, state: VehicleState) {
        self.state = state;
    }

    /// Queue `cmd` and integrate one tick with the command due now.
    pub fn step(&mut self, cmd: &ControlCommand) -> Result<&VehicleState> {
        cmd.validate()?;
        let applied = if self.latency_ticks == 0 {
            *cmd
        } else {
            self.delay.push_back(*cmd);
            self.delay.pop_front().unwrap_or_default()
        };
        self.state = step(&self.state, &applied, &self.params, self.dt)?;
        Ok(&self.state)
    }
}
