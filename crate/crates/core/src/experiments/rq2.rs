//! Open-loop and waypoint actuation protocols, and the solver that builds
//! the calibrated actuation gap from their aggregate errors.

use serde::{Deserialize, Serialize};

use super::report::{fmt, mean_std, Report, Trace};
use crate::control::{lookahead_point, pid_speed, pure_pursuit, PidParams, PidState, PurePursuitParams};
use crate::error::{Error, Result};
use crate::geometry::{discrete_frechet_points, fit_circle, Pose};
use crate::metrics::{cohens_d, mann_whitney_u};
use crate::mixing::Modality;
use crate::plant::{make_pseudo_real, ActuationGap, ControlCommand, GapProfile, Plant, PlantParams, VehicleState};
use crate::runtime::RateConfig;

pub const FORWARD_THROTTLES: [f64; 3] = [0.34, 0.365, 0.39];
pub const FORWARD_DURATION: f64 = 3.0;
pub const STEERING_VALUES: [f64; 6] = [-1.0, -0.6, -0.3, 0.3, 0.6, 1.0];
pub const STEERING_THROTTLE: f64 = 0.365;
pub const STEERING_DURATION: f64 = 6.0;
/// Samples before this time are excluded from the circle fit.
pub const STEERING_SETTLE: f64 = 1.0;
pub const BRAKE_GOAL: f64 = 2.0;
pub const BRAKE_TRIGGER_BEFORE: f64 = 0.35;
pub const PID_PHASES: [f64; 4] = [0.4, 0.8, 0.6, 0.0];
pub const PID_PHASE_DURATION: f64 = 10.0;
pub const PID_STEERING: f64 = 0.6;
pub const WAYPOINT_REPETITIONS: usize = 5;

/// Aggregate twin-minus-real errors the calibrated gap reproduces.
pub const TARGET_FORWARD_ERROR: f64 = 0.87;
pub const TARGET_LEFT_RADIUS_ERROR: f64 = -0.81;
pub const TARGET_RIGHT_RADIUS_ERROR: f64 = -0.16;
pub const TARGET_BRAKE_ERROR: f64 = -0.02;

/// Which plant a protocol variant drives, and whether its pose reaches the
/// evaluator through injection into the simulator.
fn variant_params(modality: Modality, twin: &PlantParams, gap: &GapProfile) -> Result<PlantParams> {
    match modality {
        Modality::SIL => Ok(*twin),
        Modality::RW | Modality::VIL => Ok(make_pseudo_real(twin, gap)),
        Modality::MR => Err(Error::Argument("actuation protocols run SIL, RW and VIL only".into())),
    }
}

/// States at every control tick of a drive starting at rest at the origin,
/// with `policy` consulted at the control rate and the command held between.
pub fn drive<F>(params: &PlantParams, rates: &RateConfig, duration: f64, mut policy: F) -> Result<Vec<VehicleState>>
where
    F: FnMut(&VehicleState) -> Option<ControlCommand>,
{
    rates.validate()?;
    let dt = rates.dt();
    let every = u64::from(rates.sim_tick / rates.control_rate);
    let n = (duration * f64::from(rates.sim_tick)).round() as u64;
    let mut plant = Plant::new(*params, VehicleState::at_rest(Pose::identity()), dt)?;
    let mut cmd = ControlCommand::default();
    let mut out = Vec::with_capacity((n / every) as usize + 1);
    for k in 0..n {
        if k % every == 0 {
            out.push(*plant.state());
            match policy(plant.state()) {
                Some(c) => cmd = c,
                None => return Ok(out),
            }
        }
        plant.step(&cmd)?;
    }
    out.push(*plant.state());
    Ok(out)
}

/// Distance travelled along the path of `states`.
fn path_length(states: &[VehicleState]) -> f64 {
    states
        .windows(2)
        .map(|w| (w[1].pose.x - w[0].pose.x).hypot(w[1].pose.y - w[0].pose.y))
        .sum()
}

fn constant(throttle: f64, steering: f64) -> impl FnMut(&VehicleState) -> Option<ControlCommand> {
    move |s: &VehicleState| Some(ControlCommand { throttle, steering, brake: 0.0, timestamp: s.pose.timestamp })
}

pub fn forward_run(params: &PlantParams, rates: &RateConfig, throttle: f64) -> Result<Vec<VehicleState>> {
    drive(params, rates, FORWARD_DURATION, constant(throttle, 0.0))
}

pub fn forward_distance(params: &PlantParams, rates: &RateConfig, throttle: f64) -> Result<f64> {
    Ok(path_length(&forward_run(params, rates, throttle)?))
}

pub fn steering_run(params: &PlantParams, rates: &RateConfig, steering: f64) -> Result<Vec<VehicleState>> {
    drive(params, rates, STEERING_DURATION, constant(STEERING_THROTTLE, steering))
}

/// Radius of the circle fitted to the settled part of a steering run.
pub fn fitted_radius(params: &PlantParams, rates: &RateConfig, steering: f64) -> Result<f64> {
    let pts: Vec<[f64; 2]> = steering_run(params, rates, steering)?
        .iter()
        .filter(|s| s.pose.timestamp >= STEERING_SETTLE)
        .map(|s| s.pose.xy())
        .collect();
    Ok(fit_circle(&pts)?.radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrakeResult {
    pub speed_at_trigger: f64,
    /// Distance from the trigger point to standstill.
    pub braking_distance: f64,
    pub deceleration: f64,
    pub stop_position: f64,
}

/// Accelerate at the steering-protocol throttle, brake fully once the
/// vehicle is within 35 cm of the 2 m goal, and measure the stop.
pub fn brake_run(params: &PlantParams, rates: &RateConfig) -> Result<BrakeResult> {
    let trigger = BRAKE_GOAL - BRAKE_TRIGGER_BEFORE;
    let mut at: Option<(f64, f64)> = None;
    let states = drive(params, rates, 20.0, |s| {
        let x = s.pose.x;
        if at.is_none() && x >= trigger {
            at = Some((x, s.speed));
        }
        match at {
            None => Some(ControlCommand { throttle: STEERING_THROTTLE, steering: 0.0, brake: 0.0, timestamp: s.pose.timestamp }),
            Some(_) if s.speed <= 0.0 => None,
            Some(_) => Some(ControlCommand::stop(0.0, s.pose.timestamp)),
        }
    })?;
    let (x0, v0) = at.ok_or_else(|| Error::Degenerate("vehicle never reached the brake trigger".into()))?;
    let stop = states.last().map_or(x0, |s| s.pose.x);
    let d = stop - x0;
    Ok(BrakeResult {
        speed_at_trigger: v0,
        braking_distance: d,
        deceleration: if d > 0.0 { v0 * v0 / (2.0 * d) } else { 0.0 },
        stop_position: stop,
    })
}

/// Speeds at every control tick of the four PID phases.
pub fn pid_run(params: &PlantParams, rates: &RateConfig, pid: &PidParams) -> Result<Vec<(f64, f64)>> {
    let mut state = PidState::default();
    let dt = 1.0 / f64::from(rates.control_rate);
    let mut samples = Vec::new();
    drive(params, rates, PID_PHASE_DURATION * PID_PHASES.len() as f64, |s| {
        let phase = ((s.pose.timestamp / PID_PHASE_DURATION + 1e-9).floor() as usize).min(PID_PHASES.len() - 1);
        let target = PID_PHASES[phase];
        samples.push((target, s.speed));
        let base = ControlCommand { throttle: 1.0, steering: PID_STEERING, brake: 0.0, timestamp: s.pose.timestamp };
        Some(pid_speed(target, s.speed, &base, pid, &mut state, dt))
    })?;
    Ok(samples)
}

/// Path families of the waypoint protocol, starting at the origin heading +x.
pub fn waypoint_paths() -> Vec<(&'static str, Vec<[f64; 2]>)> {
    let arc = |r: f64, sign: f64, n: usize| -> Vec<[f64; 2]> {
        (0..=n)
            .map(|k| {
                let a = std::f64::consts::FRAC_PI_2 * k as f64 / n as f64;
                [r * a.sin(), sign * r * (1.0 - a.cos())]
            })
            .collect()
    };
    let straight_then = |pts: Vec<[f64; 2]>| -> Vec<[f64; 2]> {
        let mut v: Vec<[f64; 2]> = (0..5).map(|k| [0.1 * k as f64, 0.0]).collect();
        v.extend(pts.into_iter().map(|p| [p[0] + 0.5, p[1]]));
        v
    };
    let s_shape: Vec<[f64; 2]> = (0..=40)
        .map(|k| {
            let x = 3.0 * k as f64 / 40.0;
            [x, 0.4 * (std::f64::consts::TAU * x / 3.0).sin()]
        })
        .collect();
    vec![
        ("single_point", vec![[2.0, 0.6]]),
        ("wide_turn", straight_then(arc(1.5, 1.0, 24))),
        ("sharp_turn", straight_then(arc(0.8, -1.0, 16))),
        ("s_shape", s_shape),
    ]
}

/// Follow `path` with pure pursuit at the steering-protocol throttle until
/// its last point is reached or 15 s pass.
pub fn follow_path(params: &PlantParams, rates: &RateConfig, path: &[[f64; 2]]) -> Result<Vec<VehicleState>> {
    let pp = PurePursuitParams {
        cruise_throttle: STEERING_THROTTLE,
        goal_tolerance: 0.1,
        ..PurePursuitParams::default()
    };
    let goal = *path.last().ok_or_else(|| Error::Argument("empty waypoint path".into()))?;
    drive(params, rates, 15.0, |s| {
        let p = s.pose.xy();
        if (p[0] - goal[0]).hypot(p[1] - goal[1]) <= pp.goal_tolerance {
            return None;
        }
        let target = lookahead_point(path, &s.pose, pp.lookahead)?;
        Some(pure_pursuit(s, target, &pp))
    })
}

fn bisect(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if flo.signum() == fhi.signum() {
        return Err(Error::Degenerate(format!("calibration target not bracketed ({flo}, {fhi})")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)?.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn mean_radius(params: &PlantParams, rates: &RateConfig, values: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for s in values {
        total += fitted_radius(params, rates, *s)?;
    }
    Ok(total / values.len() as f64)
}

/// Solve the actuation deltas that make the protocols report these
/// aggregate twin-minus-real errors: +0.87 m forward distance at throttle
/// 0.365, −0.81 m mean left radius, −0.16 m mean right radius and −0.02 m
/// braking distance.
pub fn calibrate_target_gap(twin: &PlantParams, rates: &RateConfig) -> Result<ActuationGap> {
    let mut gap = GapProfile::zero();
    let real = |g: &GapProfile| make_pseudo_real(twin, g);

    let twin_forward = forward_distance(twin, rates, STEERING_THROTTLE)?;
    gap.actuation.throttle_gain = bisect(-0.9 * twin.throttle_gain, 0.0, |d| {
        let mut g = gap;
        g.actuation.throttle_gain = d;
        Ok(twin_forward - forward_distance(&real(&g), rates, STEERING_THROTTLE)? - TARGET_FORWARD_ERROR)
    })?;

    let left: Vec<f64> = STEERING_VALUES.iter().copied().filter(|s| *s < 0.0).collect();
    let right: Vec<f64> = STEERING_VALUES.iter().copied().filter(|s| *s > 0.0).collect();
    for (values, target, is_left) in [(left, TARGET_LEFT_RADIUS_ERROR, true), (right, TARGET_RIGHT_RADIUS_ERROR, false)] {
        let twin_r = mean_radius(twin, rates, &values)?;
        let delta = bisect(-0.9, 0.0, |d| {
            let mut g = gap;
            if is_left {
                g.actuation.steer_scale_left = d;
            } else {
                g.actuation.steer_scale_right = d;
            }
            Ok(twin_r - mean_radius(&real(&g), rates, &values)? - target)
        })?;
        if is_left {
            gap.actuation.steer_scale_left = delta;
        } else {
            gap.actuation.steer_scale_right = delta;
        }
    }

    let twin_brake = brake_run(twin, rates)?.braking_distance;
    gap.actuation.brake_decel = bisect(-0.9 * twin.brake_decel, twin.brake_decel, |d| {
        let mut g = gap;
        g.actuation.brake_decel = d;
        Ok(twin_brake - brake_run(&real(&g), rates)?.braking_distance - TARGET_BRAKE_ERROR)
    })?;
    Ok(gap.actuation)
}

fn push_tests(report: &mut Report, what: &str, x: &[f64], y: &[f64]) {
    if let Ok(mw) = mann_whitney_u(x, y) {
        let d = cohens_d(x, y).map_or_else(|e| e.to_string(), fmt);
        report.summary.push(format!("{what}: U = {}, p = {}, d = {d}", fmt(mw.u), fmt(mw.p_two_sided)));
    }
}

pub const VARIANTS: [Modality; 3] = [Modality::SIL, Modality::RW, Modality::VIL];

/// Forward protocol: distance after 3 s per throttle and variant.
pub fn forward_report(twin: &PlantParams, gap: &GapProfile, rates: &RateConfig, modalities: &[Modality], repetitions: usize) -> Result<Report> {
    let mut r = Report::new("rq2_forward", &["throttle", "modality", "repetition", "distance", "final_speed", "error_vs_rw"]);
    for &throttle in &FORWARD_THROTTLES {
        let real = forward_run(&variant_params(Modality::RW, twin, gap)?, rates, throttle)?;
        let d_real = path_length(&real);
        for &m in modalities {
            let run = forward_run(&variant_params(m, twin, gap)?, rates, throttle)?;
            let d = path_length(&run);
            for rep in 0..repetitions {
                r.row(vec![fmt(throttle), m.as_str().into(), rep.to_string(), fmt(d), fmt(run.last().map_or(0.0, |s| s.speed)), fmt(d - d_real)]);
            }
            if m == Modality::SIL {
                let x: Vec<f64> = run.iter().map(|s| s.speed).collect();
                let y: Vec<f64> = real.iter().map(|s| s.speed).collect();
                push_tests(&mut r, &format!("per-frame speed SIL vs RW at throttle {throttle}"), &x, &y);
            }
            r.summary.push(format!("throttle {throttle} {}: distance {} m, error {} m ({} commands)", m.as_str(), fmt(d), fmt(d - d_real), run.len() - 1));
        }
    }
    Ok(r)
}

/// Steering protocol: fitted radius per steering value and variant.
pub fn steering_report(twin: &PlantParams, gap: &GapProfile, rates: &RateConfig, modalities: &[Modality], repetitions: usize) -> Result<Report> {
    let mut r = Report::new("rq2_steer", &["steering", "modality", "repetition", "radius", "error_vs_rw"]);
    let mut errors: Vec<(Modality, bool, f64)> = Vec::new();
    for &s in &STEERING_VALUES {
        let real_r = fitted_radius(&variant_params(Modality::RW, twin, gap)?, rates, s)?;
        for &m in modalities {
            let params = variant_params(m, twin, gap)?;
            let radius = fitted_radius(&params, rates, s)?;
            errors.push((m, s < 0.0, radius - real_r));
            for rep in 0..repetitions {
                r.row(vec![fmt(s), m.as_str().into(), rep.to_string(), fmt(radius), fmt(radius - real_r)]);
            }
            r.traces.push(Trace::new(format!("{} steer {s}", m.as_str()), m, steering_run(&params, rates, s)?.iter().map(|x| x.pose.xy()).collect()));
        }
    }
    for &m in modalities {
        for (left, name) in [(true, "left"), (false, "right")] {
            let e: Vec<f64> = errors.iter().filter(|x| x.0 == m && x.1 == left).map(|x| x.2).collect();
            r.summary.push(format!("{} mean {name} radius error: {} m", m.as_str(), fmt(e.iter().sum::<f64>() / e.len() as f64)));
        }
    }
    Ok(r)
}

pub fn brake_report(twin: &PlantParams, gap: &GapProfile, rates: &RateConfig, modalities: &[Modality], repetitions: usize) -> Result<Report> {
    let mut r = Report::new("rq2_brake", &["modality", "repetition", "speed_at_trigger", "braking_distance", "deceleration", "stop_position", "error_vs_rw"]);
    let real = brake_run(&variant_params(Modality::RW, twin, gap)?, rates)?;
    for &m in modalities {
        let b = brake_run(&variant_params(m, twin, gap)?, rates)?;
        for rep in 0..repetitions {
            r.row(vec![m.as_str().into(), rep.to_string(), fmt(b.speed_at_trigger), fmt(b.braking_distance), fmt(b.deceleration), fmt(b.stop_position), fmt(b.braking_distance - real.braking_distance)]);
        }
        r.summary.push(format!("{}: braking distance {} m, error {} m", m.as_str(), fmt(b.braking_distance), fmt(b.braking_distance - real.braking_distance)));
    }
    Ok(r)
}

pub fn pid_report(twin: &PlantParams, gap: &GapProfile, rates: &RateConfig, pid: &PidParams, modalities: &[Modality], repetitions: usize) -> Result<Report> {
    let mut r = Report::new("rq2_pid", &["modality", "repetition", "phase_target", "mean_speed", "mean_abs_error"]);
    let real = pid_run(&variant_params(Modality::RW, twin, gap)?, rates, pid)?;
    for &m in modalities {
        let samples = pid_run(&variant_params(m, twin, gap)?, rates, pid)?;
        for &target in &PID_PHASES {
            let phase: Vec<&(f64, f64)> = samples.iter().filter(|s| s.0 == target).collect();
            let speeds: Vec<f64> = phase.iter().map(|s| s.1).collect();
            let (mean, _) = mean_std(&speeds);
            let err = phase.iter().map(|s| (s.1 - s.0).abs()).sum::<f64>() / phase.len().max(1) as f64;
            for rep in 0..repetitions {
                r.row(vec![m.as_str().into(), rep.to_string(), fmt(target), fmt(mean), fmt(err)]);
            }
            if m == Modality::SIL {
                let y: Vec<f64> = real.iter().filter(|s| s.0 == target).map(|s| s.1).collect();
                push_tests(&mut r, &format!("phase {target} m/s speed SIL vs RW"), &speeds, &y);
            }
        }
    }
    Ok(r)
}

pub fn waypoint_report(twin: &PlantParams, gap: &GapProfile, rates: &RateConfig, modalities: &[Modality], repetitions: usize) -> Result<Report> {
    let mut r = Report::new("rq2_waypoint", &["path", "modality", "repetition", "frechet_to_rw", "final_x", "final_y"]);
    for (name, path) in waypoint_paths() {
        let real: Vec<[f64; 2]> = follow_path(&variant_params(Modality::RW, twin, gap)?, rates, &path)?.iter().map(|s| s.pose.xy()).collect();
        for &m in modalities {
            let run: Vec<[f64; 2]> = follow_path(&variant_params(m, twin, gap)?, rates, &path)?.iter().map(|s| s.pose.xy()).collect();
            let f = discrete_frechet_points(&run, &real)?;
            let end = *run.last().expect("drive records the initial state");
            for rep in 0..repetitions {
                r.row(vec![name.into(), m.as_str().into(), rep.to_string(), fmt(f), fmt(end[0]), fmt(end[1])]);
            }
            r.summary.push(format!("{name} {}: Fréchet to RW {} m", m.as_str(), fmt(f)));
            r.traces.push(Trace::new(format!("{name} {}", m.as_str()), m, run));
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_protocol_issues_sixty_commands() {
        let states = forward_run(&PlantParams::default(), &RateConfig::default(), 0.365).unwrap();
        // One state per command plus the final state.
        assert_eq!(states.len() - 1, 60);
    }

    #[test]
    fn zero_gap_has_zero_errors() {
        let twin = PlantParams::default();
        let rates = RateConfig::default();
        let gap = GapProfile::zero();
        let f = forward_report(&twin, &gap, &rates, &VARIANTS, 1).unwrap();
        let col = f.column("error_vs_rw");
        assert!(f.rows.iter().all(|row| row[col].parse::<f64>().unwrap().abs() < 1e-6));
        let b = brake_report(&twin, &gap, &rates, &VARIANTS, 1).unwrap();
        let col = b.column("error_vs_rw");
        assert!(b.rows.iter().all(|row| row[col].parse::<f64>().unwrap().abs() < 1e-6));
    }

    #[test]
    fn twin_matches_closed_form_radius() {
        let p = PlantParams::default();
        let r = fitted_radius(&p, &RateConfig::default(), -1.0).unwrap();
        assert!((r - p.turning_radius(-1.0)).abs() < 1e-6);
    }

    #[test]
    fn calibration_reproduces_aggregate_errors() {
        let twin = PlantParams::default();
        let rates = RateConfig::default();
        let act = calibrate_target_gap(&twin, &rates).unwrap();
        let gap = GapProfile { actuation: act, ..GapProfile::zero() };
        let real = make_pseudo_real(&twin, &gap);
        let fwd = forward_distance(&twin, &rates, 0.365).unwrap() - forward_distance(&real, &rates, 0.365).unwrap();
        assert!((fwd - 0.87).abs() < 1e-6);
        let left = mean_radius(&twin, &rates, &[-1.0, -0.6, -0.3]).unwrap() - mean_radius(&real, &rates, &[-1.0, -0.6, -0.3]).unwrap();
        assert!((left + 0.81).abs() < 1e-6);
        let right = mean_radius(&twin, &rates, &[0.3, 0.6, 1.0]).unwrap() - mean_radius(&real, &rates, &[0.3, 0.6, 1.0]).unwrap();
        assert!((right + 0.16).abs() < 1e-6);
        let brake = brake_run(&twin, &rates).unwrap().braking_distance - brake_run(&real, &rates).unwrap().braking_distance;
        assert!((brake + 0.02).abs() < 1e-6, "{brake}");
    }

    #[test]
    fn waypoint_paths_are_reached_by_twin() {
        let p = PlantParams::default();
        for (name, path) in waypoint_paths() {
            let run = follow_path(&p, &RateConfig::default(), &path).unwrap();
            let end = run.last().unwrap().pose.xy();
            let goal = path.last().unwrap();
            assert!((end[0] - goal[0]).hypot(end[1] - goal[1]) < 0.3, "{name} ended at {end:?}");
        }
    }
}
