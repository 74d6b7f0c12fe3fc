//! RunLog: the complete per-tick record of one closed-loop run and its
//! on-disk directory form.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RateConfig;
use crate::ads::{AdsChoice, AdsConfig};
use crate::error::{Error, Result};
use crate::geometry::{Pose, Trajectory};
use crate::mixing::Modality;
use crate::plant::{ControlCommand, GapProfile, PlantParams};
use crate::sensing::io::{read_depth, read_ppm, write_depth, write_ppm};
use crate::sensing::{DepthImage, RgbImage, SensorRig};

pub const TICK_COLUMNS: [&str; 12] = [
    "tick", "t", "throttle", "steering", "brake", "x_twin", "y_twin", "yaw_twin", "x_real",
    "y_real", "yaw_real", "event",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub scenario: String,
    pub modality: Modality,
    pub ads: AdsChoice,
    pub seed: u64,
    pub max_duration: f64,
    pub gap: GapProfile,
    pub rates: RateConfig,
    pub rig: SensorRig,
    pub twin: PlantParams,
    pub pseudo_real: PlantParams,
    pub ads_config: AdsConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub tick: u64,
    /// Simulated time at the end of the tick.
    pub t: f64,
    pub command: ControlCommand,
    pub twin: Pose,
    pub real: Pose,
    pub events: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRecord {
    pub frame: u64,
    pub tick: u64,
    /// Hex SHA-256 of the perception frame the ADS received.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredFrame {
    pub frame: u64,
    pub rgb: Option<RgbImage>,
    pub depth: Option<DepthImage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Completed,
    Crash(String),
    OutOfRoad,
    PlannerBlocked,
    Timeout,
}

impl Outcome {
    pub fn is_failure(&self) -> bool {
        matches!(self, Outcome::Crash(_) | Outcome::OutOfRoad)
    }

    /// Outcome class without the obstacle id.
    pub fn kind(&self) -> &'static str {
        match self {
            Outcome::Completed => "completed",
            Outcome::Crash(_) => "crash",
            Outcome::OutOfRoad => "out_of_road",
            Outcome::PlannerBlocked => "planner_blocked",
            Outcome::Timeout => "timeout",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Crash(id) => write!(f, "crash:{id}"),
            other => f.write_str(other.kind()),
        }
    }
}

impl FromStr for Outcome {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "completed" => Ok(Outcome::Completed),
            "out_of_road" => Ok(Outcome::OutOfRoad),
            "planner_blocked" => Ok(Outcome::PlannerBlocked),
            "timeout" => Ok(Outcome::Timeout),
            other => other
                .strip_prefix("crash:")
                .map(|id| Outcome::Crash(id.to_string()))
                .ok_or_else(|| Error::Protocol(format!("unknown outcome {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: RunHeader,
    pub ticks: Vec<TickRecord>,
    pub frames: Vec<FrameRecord>,
    pub outcome: Outcome,
    pub stored_frames: Vec<StoredFrame>,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn parse<T: FromStr>(field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Protocol(format!("bad {what} field {field:?}")))
}

impl RunLog {
    pub fn ticks_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TICK_COLUMNS).expect("in-memory write");
        for r in &self.ticks {
            let c = &r.command;
            w.write_record([
                r.tick.to_string(),
                r.t.to_string(),
                c.throttle.to_string(),
                c.steering.to_string(),
                c.brake.to_string(),
                r.twin.x.to_string(),
                r.twin.y.to_string(),
                r.twin.yaw.to_string(),
                r.real.x.to_string(),
                r.real.y.to_string(),
                r.real.yaw.to_string(),
                r.events.join(";"),
            ])
            .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn frames_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["frame", "tick", "digest"]).expect("in-memory write");
        for f in &self.frames {
            w.write_record([f.frame.to_string(), f.tick.to_string(), f.digest.clone()])
                .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn header_toml(&self) -> Result<String> {
        toml::to_string(&self.header).map_err(|e| Error::Config(e.to_string()))
    }

    /// Tick table, frame digests and outcome: everything but the header.
    pub fn body_bytes(&self) -> Vec<u8> {
        let mut out = self.ticks_csv();
        out.extend(self.frames_csv());
        out.extend(format!("{}\n", self.outcome).into_bytes());
        out
    }

    /// Full serialized form, header included.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = self.header_toml()?.into_bytes();
        out.extend(self.body_bytes());
        Ok(out)
    }

    pub fn real_trajectory(&self) -> Result<Trajectory> {
        Trajectory::new(self.ticks.iter().map(|r| r.real).collect())
    }

    pub fn twin_trajectory(&self) -> Result<Trajectory> {
        Trajectory::new(self.ticks.iter().map(|r| r.twin).collect())
    }

    pub fn events(&self) -> impl Iterator<Item = (u64, &str)> {
        self.ticks
            .iter()
            .flat_map(|r| r.events.iter().map(move |e| (r.tick, e.as_str())))
    }

    /// Distance at which obstacles were first reported by the ADS.
    pub fn detection_ranges(&self) -> Vec<f64> {
        self.events()
            .filter_map(|(_, e)| e.strip_prefix("detect:")?.parse().ok())
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("header.toml"), self.header_toml()?)?;
        fs::write(dir.join("ticks.csv"), self.ticks_csv())?;
        fs::write(dir.join("frames.csv"), self.frames_csv())?;
        fs::write(dir.join("outcome.txt"), format!("{}\n", self.outcome))?;
        if !self.stored_frames.is_empty() {
            let fdir = dir.join("frames");
            fs::create_dir_all(&fdir)?;
            for f in &self.stored_frames {
                if let Some(rgb) = &f.rgb {
                    write_ppm(&fdir.join(format!("{:06}.ppm", f.frame)), rgb)?;
                }
                if let Some(d) = &f.depth {
                    write_depth(&fdir.join(format!("{:06}.dpth", f.frame)), d)?;
                }
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let header: RunHeader = toml::from_str(&fs::read_to_string(dir.join("header.toml"))?)
            .map_err(|e| Error::Config(e.to_string()))?;
        let mut ticks = Vec::new();
        let mut rdr = csv::Reader::from_path(dir.join("ticks.csv")).map_err(csv_err)?;
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != TICK_COLUMNS.len() {
                return Err(Error::Protocol(format!("tick row has {} fields", rec.len())));
            }
            let f = |k: usize| parse::<f64>(&rec[k], TICK_COLUMNS[k]);
            let t = f(1)?;
            ticks.push(TickRecord {
                tick: parse(&rec[0], "tick")?,
                t,
                command: ControlCommand {
                    throttle: f(2)?,
                    steering: f(3)?,
                    brake: f(4)?,
                    timestamp: t,
                },
                twin: Pose { x: f(5)?, y: f(6)?, z: 0.0, yaw: f(7)?, timestamp: t },
                real: Pose { x: f(8)?, y: f(9)?, z: 0.0, yaw: f(10)?, timestamp: t },
                events: rec[11]
                    .split(';')
                    .filter(|e| !e.is_empty())
                    .map(str::to_string)
                    .collect(),
            });
        }
        let mut frames = Vec::new();
        let mut rdr = csv::Reader::from_path(dir.join("frames.csv")).map_err(csv_err)?;
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            frames.push(FrameRecord {
                frame: parse(&rec[0], "frame")?,
                tick: parse(&rec[1], "tick")?,
                digest: rec[2].to_string(),
            });
        }
        let outcome: Outcome = fs::read_to_string(dir.join("outcome.txt"))?.parse()?;
        let mut stored_frames = Vec::new();
        let fdir = dir.join("frames");
        if fdir.is_dir() {
            for f in &frames {
                let rgb_path = fdir.join(format!("{:06}.ppm", f.frame));
                let depth_path = fdir.join(format!("{:06}.dpth", f.frame));
                let rgb = rgb_path.exists().then(|| read_ppm(&rgb_path)).transpose()?;
                let depth = depth_path.exists().then(|| read_depth(&depth_path)).transpose()?;
                if rgb.is_some() || depth.is_some() {
                    stored_frames.push(StoredFrame { frame: f.frame, rgb, depth });
                }
            }
        }
        Ok(Self {
            header,
            ticks,
            frames,
            outcome,
            stored_frames,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_text_round_trip() {
        for o in [
            Outcome::Completed,
            Outcome::Crash("obs1".into()),
            Outcome::OutOfRoad,
            Outcome::PlannerBlocked,
            Outcome::Timeout,
        ] {
            assert_eq!(o.to_string().parse::<Outcome>().unwrap(), o);
        }
        assert!("exploded".parse::<Outcome>().is_err());
        assert!(Outcome::Crash("a".into()).is_failure());
        assert!(!Outcome::Timeout.is_failure());
    }
}
