//! Named gap profiles.

use crate::error::{Error, Result};
use crate::plant::{GapProfile, PerceptionGap, PlantParams};
use crate::runtime::RateConfig;

use super::rq2::calibrate_target_gap;

pub const GAP_PRESETS: [&str; 5] = ["zero", "paper_calibrated", "perception_dominant", "dropout", "noise_only"];

/// Resolve a preset name against the twin it perturbs.
///
/// * `zero`: no gap.
/// * `paper_calibrated`: actuation deltas solved so the actuation protocols
///   report the target aggregate errors. The deltas are constructed, not measured.
/// * `perception_dominant`: heavy depth noise and dropout on top of the
///   calibrated actuation gap.
/// * `dropout`: depth returns mostly lost, actuation untouched.
/// * `noise_only`: sensor noise with no dropout, miscalibration or
///   actuation change.
pub fn gap_preset(name: &str, twin: &PlantParams, rates: &RateConfig) -> Result<GapProfile> {
    let noise = PerceptionGap {
        rgb_sigma: [6.0, 6.0, 6.0],
        depth_sigma: 0.01,
        ..PerceptionGap::default()
    };
    match name {
        "zero" => Ok(GapProfile::zero()),
        "paper_calibrated" => Ok(GapProfile {
            actuation: calibrate_target_gap(twin, rates)?,
            perception: PerceptionGap::default(),
        }),
        "perception_dominant" => Ok(GapProfile {
            actuation: calibrate_target_gap(twin, rates)?,
            perception: PerceptionGap {
                rgb_sigma: [8.0, 8.0, 8.0],
                exposure_offset: 6.0,
                depth_sigma: 0.03,
                depth_dropout: 0.6,
                principal_offset_px: [1.0, 0.0],
            },
        }),
        "dropout" => Ok(GapProfile {
            perception: PerceptionGap {
                depth_sigma: 0.02,
                depth_dropout: 0.97,
                ..PerceptionGap::default()
            },
            ..GapProfile::zero()
        }),
        "noise_only" => Ok(GapProfile {
            perception: noise,
            ..GapProfile::zero()
        }),
        other => Err(Error::Lookup(format!("unknown gap preset {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve_and_validate() {
        let twin = PlantParams::default();
        for name in GAP_PRESETS {
            gap_preset(name, &twin, &RateConfig::default()).unwrap().validate().unwrap();
        }
        assert!(gap_preset("zero", &twin, &RateConfig::default()).unwrap().is_zero());
        assert!(gap_preset("warp", &twin, &RateConfig::default()).is_err());
    }

    #[test]
    fn noise_only_leaves_dynamics_alone() {
        let g = gap_preset("noise_only", &PlantParams::default(), &RateConfig::default()).unwrap();
        assert_eq!(g.actuation, Default::default());
        assert_eq!(g.perception.depth_dropout, 0.0);
        assert_eq!(g.perception.principal_offset_px, [0.0, 0.0]);
    }
}
