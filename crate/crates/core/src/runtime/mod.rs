//! Lockstep closed-loop scheduler, RunLog recording and the tracking
//! broadcast protocol.

mod log;
pub mod tracking;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use self::log::{FrameRecord, Outcome, RunHeader, RunLog, StoredFrame, TickRecord, TICK_COLUMNS};
pub use tracking::{
    broadcast_poses, decode_tracking, encode_tracking, loopback_soak, BridgeCounters, SoakReport,
    UdpBridge, DATAGRAM_LEN,
};

use crate::ads::{AdsChoice, AdsConfig, Driver};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::mixing::{
    compose_frame, inject_pose, Modality, ModalityWiring, PerceptionFrame, PerceptionSource,
    PlantKind, RealFrames, SimFrames, SimWorld,
};
use crate::plant::{make_pseudo_real, ControlCommand, GapProfile, Plant, PlantParams, VehicleState};
use crate::rng::derive_seed;
use crate::sensing::{
    apply_sensor_noise, render_depth_masked, render_rgb, RenderMask, SensorRig,
};
use crate::world::{collision_query, lane_query, Scenario, VEHICLE_FOOTPRINT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateConfig {
    /// Integration rate, Hz.
    pub sim_tick: u32,
    pub sensor_rate: u32,
    pub control_rate: u32,
    pub tracking_rate: u32,
    pub sim_frame_cap: u32,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            sim_tick: 100,
            sensor_rate: 20,
            control_rate: 20,
            tracking_rate: 100,
            sim_frame_cap: 60,
        }
    }
}

impl RateConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.sim_tick,
            self.sensor_rate,
            self.control_rate,
            self.tracking_rate,
            self.sim_frame_cap,
        ];
        if all.contains(&0) {
            return Err(Error::Validation("rates must be positive".into()));
        }
        if self.sim_tick % self.sensor_rate != 0 || self.sim_tick % self.control_rate != 0 {
            return Err(Error::Validation(format!(
                "sim tick {} Hz is not divisible by sensor {} Hz and control {} Hz",
                self.sim_tick, self.sensor_rate, self.control_rate
            )));
        }
        if self.sensor_rate > self.sim_frame_cap {
            return Err(Error::Validation(format!(
                "sensor rate {} Hz exceeds the simulator frame cap {} Hz",
                self.sensor_rate, self.sim_frame_cap
            )));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / f64::from(self.sim_tick)
    }
}

/// Frozen parameters shared by every run of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub rates: RateConfig,
    pub rig: SensorRig,
    pub ads: AdsConfig,
    pub twin: PlantParams,
    /// Largest real/simulated timestamp difference accepted when mixing.
    pub max_skew: f64,
    /// Keep every perception frame in the log.
    pub store_frames: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rates: RateConfig::default(),
            rig: SensorRig::default(),
            ads: AdsConfig::default(),
            twin: PlantParams::default(),
            max_skew: 0.005,
            store_frames: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        self.rig.validate()?;
        self.ads.validate()?;
        self.twin.validate()?;
        if !(self.max_skew >= 0.0) {
            return Err(Error::Validation("max_skew must be non-negative".into()));
        }
        Ok(())
    }
}

/// SHA-256 over the streams of a perception frame.
pub fn frame_digest(frame: &PerceptionFrame) -> String {
    let mut h = Sha256::new();
    if let Some(rgb) = &frame.rgb {
        h.update(b"rgb");
        h.update(rgb.width.to_le_bytes());
        h.update(rgb.height.to_le_bytes());
        h.update(&rgb.data);
    }
    if let Some(d) = &frame.depth {
        h.update(b"depth");
        h.update(d.width.to_le_bytes());
        h.update(d.height.to_le_bytes());
        for v in &d.data {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Which streams to render, and where to look from.
#[derive(Debug, Clone, Copy)]
pub struct SenseRequest {
    pub rgb: bool,
    pub depth: bool,
    pub real_pose: Pose,
    pub sim_pose: Pose,
    pub timestamp: f64,
    pub noise_seed: u64,
}

/// Frames the physical vehicle would record: rendered with `mask`, shifted
/// principal point, then sensor noise.
pub fn real_frames(
    scenario: &Scenario,
    rig: &SensorRig,
    gap: &GapProfile,
    req: &SenseRequest,
    mask: RenderMask,
) -> RealFrames {
    let rgb = req.rgb.then(|| {
        let k = rig.rgb.shifted(gap.perception.principal_offset_px);
        let clean = render_rgb(scenario, &req.real_pose, &k, &rig.rgb_mount, mask).to_rgb();
        apply_sensor_noise(&clean, gap, derive_seed(req.noise_seed, "rgb", 0))
    });
    let depth = req.depth.then(|| {
        let clean = render_depth_masked(
            scenario,
            &req.real_pose,
            &rig.tof,
            &rig.tof_mount,
            rig.max_range as f32,
            mask,
        );
        apply_sensor_noise(&clean, gap, derive_seed(req.noise_seed, "depth", 0))
    });
    RealFrames {
        timestamp: req.timestamp,
        rgb,
        depth,
    }
}

/// Noise-free simulator frames rendered with `mask`.
pub fn sim_frames(scenario: &Scenario, rig: &SensorRig, req: &SenseRequest, mask: RenderMask) -> SimFrames {
    SimFrames {
        timestamp: req.timestamp,
        rgb: req
            .rgb
            .then(|| render_rgb(scenario, &req.sim_pose, &rig.rgb, &rig.rgb_mount, mask)),
        depth: req.depth.then(|| {
            render_depth_masked(
                scenario,
                &req.sim_pose,
                &rig.tof,
                &rig.tof_mount,
                rig.max_range as f32,
                mask,
            )
        }),
    }
}

/// Render and compose what the ADS perceives under `wiring`.
pub fn sense(
    scenario: &Scenario,
    rig: &SensorRig,
    wiring: &ModalityWiring,
    gap: &GapProfile,
    req: &SenseRequest,
    max_skew: f64,
) -> Result<PerceptionFrame> {
    let (real, sim) = match wiring.perception_source {
        PerceptionSource::Sim => (None, Some(sim_frames(scenario, rig, req, RenderMask::ALL))),
        PerceptionSource::Real => (Some(real_frames(scenario, rig, gap, req, RenderMask::ALL)), None),
        PerceptionSource::Mixed => (
            Some(real_frames(scenario, rig, gap, req, RenderMask::BACKGROUND)),
            Some(sim_frames(scenario, rig, req, RenderMask::OBSTACLES)),
        ),
    };
    compose_frame(wiring, real.as_ref(), sim.as_ref(), max_skew)
}

/// Signed arc progress accumulated across the start/finish seam.
struct Progress {
    length: f64,
    last: f64,
    total: f64,
}

impl Progress {
    fn new(length: f64, start: f64) -> Self {
        Self {
            length,
            last: start,
            total: 0.0,
        }
    }

    fn update(&mut self, arc: f64) -> f64 {
        let mut d = arc - self.last;
        if d > self.length / 2.0 {
            d -= self.length;
        } else if d < -self.length / 2.0 {
            d += self.length;
        }
        self.last = arc;
        self.total += d;
        self.total
    }
}

/// Run one closed-loop episode. Sensors and controller run at their own
/// rates on a shared integer tick clock; the run ends at the first crash,
/// lane departure, completed lap, blocked planner, or at `max_duration`.
pub fn run_closed_loop(
    scenario: &Scenario,
    modality: Modality,
    ads: &AdsChoice,
    gap: &GapProfile,
    seed: u64,
    max_duration: f64,
    config: &RunConfig,
) -> Result<RunLog> {
    config.validate()?;
    gap.validate()?;
    scenario.validate()?;
    if !(max_duration > 0.0 && max_duration.is_finite()) {
        return Err(Error::Validation("max_duration must be positive".into()));
    }
    let rates = config.rates;
    let dt = rates.dt();
    let n_ticks = (max_duration * f64::from(rates.sim_tick)).round() as u64;
    let sensor_every = u64::from(rates.sim_tick / rates.sensor_rate);
    let control_every = u64::from(rates.sim_tick / rates.control_rate);
    let wiring = modality.wiring();
    let pseudo_real = make_pseudo_real(&config.twin, gap);
    let active = match wiring.plant {
        PlantKind::Twin => config.twin,
        PlantKind::PseudoReal => pseudo_real,
    };
    let start = Pose {
        timestamp: 0.0,
        ..scenario.start
    };
    let mut plant = Plant::new(active, VehicleState::at_rest(start), dt)?;
    let mut sim = SimWorld {
        vehicle_pose: start,
        obstacles: scenario.obstacles.clone(),
    };
    let mut driver = Driver::new(ads, &config.ads)?;
    let (need_rgb, need_depth) = ads.needs();

    let header = RunHeader {
        scenario: scenario.name.clone(),
        modality,
        ads: ads.clone(),
        seed,
        max_duration,
        gap: *gap,
        rates,
        rig: config.rig,
        twin: config.twin,
        pseudo_real,
        ads_config: config.ads.clone(),
    };
    let mut ticks = Vec::with_capacity(n_ticks as usize);
    let mut frames = Vec::new();
    let mut stored_frames = Vec::new();
    let mut frame: Option<PerceptionFrame> = None;
    let mut command = ControlCommand::default();
    let mut outcome = None;
    let track = &scenario.track;
    let mut progress = Progress::new(track.length(), lane_query(&start, track).arc_position);

    for n in 0..n_ticks {
        let mut events = Vec::new();
        let state = *plant.state();
        if n % sensor_every == 0 {
            let index = n / sensor_every;
            let req = SenseRequest {
                rgb: need_rgb,
                depth: need_depth,
                real_pose: state.pose,
                sim_pose: if wiring.plant == PlantKind::Twin {
                    state.pose
                } else {
                    sim.vehicle_pose
                },
                timestamp: state.pose.timestamp,
                noise_seed: derive_seed(seed, "sensor_noise", index),
            };
            let f = sense(scenario, &config.rig, &wiring, gap, &req, config.max_skew)?;
            frames.push(FrameRecord {
                frame: index,
                tick: n,
                digest: frame_digest(&f),
            });
            if config.store_frames {
                stored_frames.push(StoredFrame {
                    frame: index,
                    rgb: f.rgb.clone(),
                    depth: f.depth.clone(),
                });
            }
            frame = Some(f);
        }
        if n % control_every == 0 {
            let f = frame
                .as_ref()
                .ok_or_else(|| Error::Wiring("control tick before the first sensor frame".into()))?;
            let step = driver.act(f, &state, scenario, &config.rig)?;
            command = step.command;
            events.extend(step.events);
            if step.blocked {
                outcome = Some(Outcome::PlannerBlocked);
            }
        }
        if outcome.is_none() {
            let pose = plant.step(&command)?.pose;
            if wiring.pose_injection {
                inject_pose(&mut sim, pose, &scenario.obstacles)?;
            }
            let q = lane_query(&pose, track);
            let travelled = progress.update(q.arc_position);
            if let Some(id) = collision_query(&pose, &VEHICLE_FOOTPRINT, &scenario.obstacles) {
                events.push(format!("crash:{id}"));
                outcome = Some(Outcome::Crash(id.to_string()));
            } else if !q.inside {
                events.push("out_of_road".into());
                outcome = Some(Outcome::OutOfRoad);
            } else if travelled >= track.length() {
                events.push("lap_complete".into());
                outcome = Some(Outcome::Completed);
            }
        }
        let real = plant.state().pose;
        let twin = match (wiring.plant, wiring.pose_injection) {
            (PlantKind::PseudoReal, true) => sim.vehicle_pose,
            _ => real,
        };
        if outcome.is_none() && n + 1 == n_ticks {
            events.push("timeout".into());
            outcome = Some(Outcome::Timeout);
        }
        ticks.push(TickRecord {
            tick: n,
            t: real.timestamp,
            command,
            twin,
            real,
            events,
        });
        if outcome.is_some() {
            break;
        }
    }
    Ok(RunLog {
        header,
        ticks,
        frames,
        outcome: outcome.unwrap_or(Outcome::Timeout),
        stored_frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::build_scenario;

    #[test]
    fn rate_validation() {
        assert!(RateConfig::default().validate().is_ok());
        let bad = RateConfig {
            sensor_rate: 30,
            ..RateConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn short_run_times_out_with_expected_frame_count() {
        let sc = build_scenario("N1").unwrap();
        let log = run_closed_loop(
            &sc,
            Modality::SIL,
            &AdsChoice::modular(),
            &GapProfile::zero(),
            1,
            0.1,
            &RunConfig::default(),
        )
        .unwrap();
        assert_eq!(log.outcome, Outcome::Timeout);
        assert_eq!(log.ticks.len(), 10);
        // Sensor frames at ticks 0 and 5 of a 0.1 s run at 20 Hz.
        assert_eq!(log.frames.len(), 2);
        assert!(log.ticks.windows(2).all(|w| w[1].tick == w[0].tick + 1));
    }

    #[test]
    fn injected_pose_matches_real_pose() {
        let sc = build_scenario("N1").unwrap();
        let mut gap = GapProfile::zero();
        gap.actuation.throttle_gain = -10.0;
        let log = run_closed_loop(&sc, Modality::VIL, &AdsChoice::modular(), &gap, 3, 0.5, &RunConfig::default())
            .unwrap();
        assert!(log.ticks.iter().all(|r| r.twin == r.real));
    }

    #[test]
    fn invalid_duration_is_rejected() {
        let sc = build_scenario("N1").unwrap();
        let r = run_closed_loop(&sc, Modality::SIL, &AdsChoice::modular(), &GapProfile::zero(), 1, 0.0, &RunConfig::default());
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn log_directory_round_trip() {
        let sc = build_scenario("N1").unwrap();
        let config = RunConfig {
            store_frames: true,
            ..RunConfig::default()
        };
        let log = run_closed_loop(&sc, Modality::MR, &AdsChoice::E2e, &GapProfile::zero(), 2, 0.2, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        log.save(dir.path()).unwrap();
        let back = RunLog::load(dir.path()).unwrap();
        assert_eq!(back.body_bytes(), log.body_bytes());
        assert_eq!(back.header, log.header);
        assert_eq!(back.stored_frames, log.stored_frames);
    }
}
