//! Mixed-reality sensor mixing and the modality router.
//!
//! The four modalities differ only in where perception comes from, which
//! plant moves, and whether the simulator follows the physical vehicle.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::sensing::{DepthImage, RgbImage, RgbaImage};
use crate::world::Obstacle;

#[allow(clippy::upper_case_acronyms)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    SIL,
    VIL,
    MR,
    RW,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::SIL, Modality::VIL, Modality::MR, Modality::RW];

    pub fn wiring(self) -> ModalityWiring {
        use PerceptionSource::*;
        use PlantKind::*;
        let (perception_source, plant, inject) = match self {
            Modality::SIL => (Sim, Twin, false),
            Modality::RW => (Real, PseudoReal, false),
            Modality::VIL => (Sim, PseudoReal, true),
            Modality::MR => (Mixed, PseudoReal, true),
        };
        ModalityWiring {
            perception_source,
            plant,
            pose_injection: inject,
            obstacle_mirroring: inject,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::SIL => "SIL",
            Modality::VIL => "VIL",
            Modality::MR => "MR",
            Modality::RW => "RW",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SIL" => Ok(Modality::SIL),
            "VIL" => Ok(Modality::VIL),
            "MR" => Ok(Modality::MR),
            "RW" => Ok(Modality::RW),
            other => Err(Error::Lookup(format!("unknown modality {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerceptionSource {
    Sim,
    Real,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlantKind {
    Twin,
    PseudoReal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityWiring {
    pub perception_source: PerceptionSource,
    pub plant: PlantKind,
    pub pose_injection: bool,
    pub obstacle_mirroring: bool,
}

fn blend(sim: u8, real: u8, alpha: u8) -> u8 {
    let a = u32::from(alpha);
    let num = a * u32::from(sim) + (255 - a) * u32::from(real);
    // round(num / 255) with halves rounded up
    ((2 * num + 255) / 510) as u8
}

/// Alpha-composite a simulated overlay onto a real frame.
pub fn mix_rgb(real: &RgbImage, overlay: &RgbaImage) -> Result<RgbImage> {
    if real.width != overlay.width || real.height != overlay.height {
        return Err(Error::Argument(format!(
            "RGB mix of {}x{} with {}x{}",
            real.width, real.height, overlay.width, overlay.height
        )));
    }
    let data = real
        .data
        .chunks_exact(3)
        .zip(overlay.data.chunks_exact(4))
        .flat_map(|(r, o)| {
            let a = o[3];
            [blend(o[0], r[0], a), blend(o[1], r[1], a), blend(o[2], r[2], a)]
        })
        .collect();
    Ok(RgbImage {
        width: real.width,
        height: real.height,
        data,
    })
}

/// Per-pixel nearest return of two aligned depth frames.
pub fn mix_depth(real: &DepthImage, sim: &DepthImage) -> Result<DepthImage> {
    if real.width != sim.width || real.height != sim.height || real.max_range != sim.max_range {
        return Err(Error::Argument("depth mix of mismatched frames".into()));
    }
    Ok(DepthImage {
        data: real.data.iter().zip(&sim.data).map(|(a, b)| a.min(*b)).collect(),
        ..real.clone()
    })
}

/// Simulator-side state that follows the physical world in VIL and MR.
#[derive(Debug, Clone, PartialEq)]
pub struct SimWorld {
    pub vehicle_pose: Pose,
    pub obstacles: Vec<Obstacle>,
}

/// Hard-set the simulated vehicle to the tracked pose and mirror tracked
/// obstacle poses by id.
pub fn inject_pose(sim: &mut SimWorld, real_pose: Pose, tracked: &[Obstacle]) -> Result<()> {
    if !real_pose.is_finite() {
        return Err(Error::Argument("injected pose is not finite".into()));
    }
    for t in tracked {
        let target = sim
            .obstacles
            .iter_mut()
            .find(|o| o.id == t.id)
            .ok_or_else(|| Error::Registration(format!("obstacle {:?} is not registered", t.id)))?;
        target.pose = t.pose;
    }
    sim.vehicle_pose = real_pose;
    Ok(())
}

/// Frames produced by the simulator; RGB carries coverage alpha.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimFrames {
    pub timestamp: f64,
    pub rgb: Option<RgbaImage>,
    pub depth: Option<DepthImage>,
}

/// Frames from the (pseudo-)physical vehicle.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RealFrames {
    pub timestamp: f64,
    pub rgb: Option<RgbImage>,
    pub depth: Option<DepthImage>,
}

/// What the ADS perceives in one sensor tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerceptionFrame {
    pub timestamp: f64,
    pub rgb: Option<RgbImage>,
    pub depth: Option<DepthImage>,
}

/// Route or merge frames according to `wiring`. `max_skew` bounds the
/// timestamp difference between real and simulated frames when mixing.
pub fn compose_frame(
    wiring: &ModalityWiring,
    real: Option<&RealFrames>,
    sim: Option<&SimFrames>,
    max_skew: f64,
) -> Result<PerceptionFrame> {
    let missing = |what: &str| Error::Wiring(format!("{what} frames required by wiring are missing"));
    match wiring.perception_source {
        PerceptionSource::Sim => {
            let s = sim.ok_or_else(|| missing("simulated"))?;
            Ok(PerceptionFrame {
                timestamp: s.timestamp,
                rgb: s.rgb.as_ref().map(RgbaImage::to_rgb),
                depth: s.depth.clone(),
            })
        }
        PerceptionSource::Real => {
            let r = real.ok_or_else(|| missing("real"))?;
            Ok(PerceptionFrame {
                timestamp: r.timestamp,
                rgb: r.rgb.clone(),
                depth: r.depth.clone(),
            })
        }
        PerceptionSource::Mixed => {
            let r = real.ok_or_else(|| missing("real"))?;
            let s = sim.ok_or_else(|| missing("simulated"))?;
            if (r.timestamp - s.timestamp).abs() > max_skew {
                return Err(Error::Wiring(format!(
                    "real and simulated frames {:.4} s apart",
                    (r.timestamp - s.timestamp).abs()
                )));
            }
            let rgb = match (&r.rgb, &s.rgb) {
                (Some(a), Some(b)) => Some(mix_rgb(a, b)?),
                (None, None) => None,
                _ => return Err(Error::Wiring("RGB stream present on one side only".into())),
            };
            let depth = match (&r.depth, &s.depth) {
                (Some(a), Some(b)) => Some(mix_depth(a, b)?),
                (None, None) => None,
                _ => return Err(Error::Wiring("depth stream present on one side only".into())),
            };
            Ok(PerceptionFrame {
                timestamp: r.timestamp,
                rgb,
                depth,
            })
        }
    }
}
