//! Scripted campaigns reproducing the three evaluation protocols, plus
//! report emission.
//!
//! A campaign file is TOML:
//!
//! ```toml
//! id = "rq1"
//! modalities = ["SIL", "VIL", "MR", "RW"]
//! repetitions = 5
//! seeds = [1, 2, 3, 4, 5, 6, 7, 8]
//! gap = "perception_dominant"
//! scenarios = ["N2"]
//! ads = ["modular"]
//! ```

pub mod presets;
pub mod report;
pub mod rq1;
pub mod rq2;
pub mod rq3;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use presets::{gap_preset, GAP_PRESETS};
pub use report::{emit_report, fmt, mean_std, trajectory_svg, Report, ReportFormat, Trace};

use crate::ads::AdsChoice;
use crate::control::PidParams;
use crate::error::{Error, Result};
use crate::mixing::Modality;
use crate::plant::GapProfile;
use crate::runtime::RunConfig;
use crate::world::{build_scenario, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignId {
    Rq1,
    Rq2Forward,
    Rq2Steer,
    Rq2Brake,
    Rq2Pid,
    Rq2Waypoint,
    Rq3Obstacle,
    Rq3Lane,
    /// The synchronized-frame image and point-cloud battery.
    Rq3Perception,
    Ablation,
}

impl CampaignId {
    pub fn as_str(self) -> &'static str {
        match self {
            CampaignId::Rq1 => "rq1",
            CampaignId::Rq2Forward => "rq2_forward",
            CampaignId::Rq2Steer => "rq2_steer",
            CampaignId::Rq2Brake => "rq2_brake",
            CampaignId::Rq2Pid => "rq2_pid",
            CampaignId::Rq2Waypoint => "rq2_waypoint",
            CampaignId::Rq3Obstacle => "rq3_obstacle",
            CampaignId::Rq3Lane => "rq3_lane",
            CampaignId::Rq3Perception => "rq3_perception",
            CampaignId::Ablation => "ablation",
        }
    }

    fn is_rq2(self) -> bool {
        matches!(
            self,
            CampaignId::Rq2Forward
                | CampaignId::Rq2Steer
                | CampaignId::Rq2Brake
                | CampaignId::Rq2Pid
                | CampaignId::Rq2Waypoint
        )
    }

    fn default_scenarios(self) -> Vec<String> {
        match self {
            CampaignId::Rq1 | CampaignId::Ablation => vec!["N1".into(), "N2".into()],
            CampaignId::Rq3Perception => vec!["N2".into()],
            _ => vec!["G".into()],
        }
    }
}

fn default_modalities() -> Vec<Modality> {
    Modality::ALL.to_vec()
}

fn default_repetitions() -> usize {
    1
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_gap() -> String {
    "zero".into()
}

fn default_ads() -> Vec<String> {
    vec!["modular".into()]
}

fn default_max_duration() -> f64 {
    40.0
}

fn default_formats() -> Vec<ReportFormat> {
    vec![ReportFormat::Csv, ReportFormat::Summary, ReportFormat::Svg]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Campaign {
    pub id: CampaignId,
    #[serde(default = "default_modalities")]
    pub modalities: Vec<Modality>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Preset name, or `"custom"` to use `gap_profile`.
    #[serde(default = "default_gap")]
    pub gap: String,
    #[serde(default)]
    pub gap_profile: Option<GapProfile>,
    /// Scenario presets; empty means the protocol's default.
    #[serde(default)]
    pub scenarios: Vec<String>,
    #[serde(default = "default_ads")]
    pub ads: Vec<String>,
    #[serde(default = "default_max_duration")]
    pub max_duration: f64,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub pid: PidParams,
    /// Optional command computing a learned perceptual distance.
    #[serde(default)]
    pub perceptual_command: Vec<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<ReportFormat>,
}

/// Minimum non-failed reference runs an RQ1 campaign aims for.
pub const MIN_REFERENCE_SUCCESSES: usize = 4;

impl Campaign {
    pub fn new(id: CampaignId) -> Self {
        Self {
            id,
            modalities: default_modalities(),
            repetitions: default_repetitions(),
            seeds: default_seeds(),
            gap: default_gap(),
            gap_profile: None,
            scenarios: Vec::new(),
            ads: default_ads(),
            max_duration: default_max_duration(),
            run: RunConfig::default(),
            pid: PidParams::default(),
            perceptual_command: Vec::new(),
            formats: default_formats(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Campaign = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn scenario_names(&self) -> Vec<String> {
        if self.scenarios.is_empty() {
            self.id.default_scenarios()
        } else {
            self.scenarios.clone()
        }
    }

    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        self.scenario_names().iter().map(|n| build_scenario(n)).collect()
    }

    pub fn ads_choices(&self) -> Result<Vec<AdsChoice>> {
        self.ads.iter().map(|a| a.parse()).collect()
    }

    /// The gap profile this campaign runs with.
    pub fn gap_profile(&self) -> Result<GapProfile> {
        if self.gap == "custom" {
            return self
                .gap_profile
                .ok_or_else(|| Error::Validation("gap = \"custom\" needs a [gap_profile] table".into()));
        }
        gap_preset(&self.gap, &self.run.twin, &self.run.rates)
    }

    /// Check everything a run could trip over, before the first run.
    pub fn validate(&self) -> Result<()> {
        if self.modalities.is_empty() {
            return Err(Error::Validation("campaign selects no modality".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Validation("repetitions must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Validation("campaign lists no seeds".into()));
        }
        if !(self.max_duration > 0.0 && self.max_duration.is_finite()) {
            return Err(Error::Validation("max_duration must be positive".into()));
        }
        if self.id.is_rq2() && self.modalities.contains(&Modality::MR) {
            return Err(Error::Validation("actuation protocols run SIL, RW and VIL only".into()));
        }
        match self.id {
            CampaignId::Rq1 if self.seeds.len() < MIN_REFERENCE_SUCCESSES.max(self.repetitions) => {
                return Err(Error::Validation(format!(
                    "rq1 needs at least {} seeds for its reference runs",
                    MIN_REFERENCE_SUCCESSES.max(self.repetitions)
                )));
            }
            CampaignId::Ablation if self.seeds.len() < self.repetitions => {
                return Err(Error::Validation("ablation needs one seed per repetition".into()));
            }
            _ => {}
        }
        self.run.validate()?;
        self.pid.multiplier_range.iter().try_for_each(|v| {
            v.is_finite()
                .then_some(())
                .ok_or_else(|| Error::Validation("non-finite PID range".into()))
        })?;
        for s in self.scenarios()? {
            s.validate()?;
        }
        self.ads_choices()?;
        self.gap_profile()?.validate()
    }
}

/// Validate and run a campaign. Run errors are logged and counted in the
/// reports; only configuration problems and an RQ1 reference without a
/// single successful run abort the campaign.
pub fn run_campaign(campaign: &Campaign) -> Result<Vec<Report>> {
    campaign.validate()?;
    let gap = campaign.gap_profile()?;
    let twin = campaign.run.twin;
    let rates = campaign.run.rates;
    let mods: Vec<Modality> = campaign.modalities.clone();
    let reps = campaign.repetitions;
    let report = match campaign.id {
        CampaignId::Rq2Forward => rq2::forward_report(&twin, &gap, &rates, &mods, reps)?,
        CampaignId::Rq2Steer => rq2::steering_report(&twin, &gap, &rates, &mods, reps)?,
        CampaignId::Rq2Brake => rq2::brake_report(&twin, &gap, &rates, &mods, reps)?,
        CampaignId::Rq2Pid => rq2::pid_report(&twin, &gap, &rates, &campaign.pid, &mods, reps)?,
        CampaignId::Rq2Waypoint => rq2::waypoint_report(&twin, &gap, &rates, &mods, reps)?,
        CampaignId::Rq1 => return rq1::run_rq1(campaign, &gap),
        CampaignId::Ablation => return rq1::run_ablation(campaign, &gap),
        CampaignId::Rq3Obstacle => rq3::obstacle_report(campaign, &gap)?,
        CampaignId::Rq3Lane => rq3::lane_report(campaign, &gap)?,
        CampaignId::Rq3Perception => rq3::perception_report(campaign, &gap)?,
    };
    Ok(vec![report])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut c = Campaign::new(CampaignId::Rq1);
        c.seeds = vec![1, 2, 3, 4, 5];
        c.gap = "noise_only".into();
        let back = Campaign::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        back.validate().unwrap();
    }

    #[test]
    fn minimal_file() {
        let c = Campaign::from_toml("id = \"rq2_forward\"\nmodalities = [\"SIL\", \"RW\"]\n").unwrap();
        assert_eq!(c.repetitions, 1);
        c.validate().unwrap();
    }

    #[test]
    fn validation_failures() {
        let mut c = Campaign::new(CampaignId::Rq2Steer);
        c.modalities.clear();
        assert!(matches!(c.validate(), Err(Error::Validation(_))));
        let mut c = Campaign::new(CampaignId::Rq2Steer);
        c.repetitions = 0;
        assert!(matches!(c.validate(), Err(Error::Validation(_))));
        let mut c = Campaign::new(CampaignId::Rq2Steer);
        c.modalities = vec![Modality::SIL];
        c.gap = "nonsense".into();
        assert!(matches!(c.validate(), Err(Error::Lookup(_))));
        let mut c = Campaign::new(CampaignId::Rq1);
        c.seeds = vec![1, 2];
        assert!(matches!(c.validate(), Err(Error::Validation(_))));
        assert!(matches!(Campaign::from_toml("id = \"rq9\""), Err(Error::Config(_))));
        assert!(matches!(Campaign::from_toml("id = \"rq1\"\nbogus = 1"), Err(Error::Config(_))));
    }

    #[test]
    fn custom_gap_needs_table() {
        let mut c = Campaign::new(CampaignId::Rq2Brake);
        c.modalities = vec![Modality::SIL, Modality::RW];
        c.gap = "custom".into();
        assert!(c.validate().is_err());
        c.gap_profile = Some(GapProfile::zero());
        c.validate().unwrap();
    }
}
