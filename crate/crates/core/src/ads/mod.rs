//! Driving stacks under test: the modular DBSCAN + lattice pipeline and the
//! end-to-end policy interface.

mod dbscan;
mod e2e;
mod external;
mod lattice;
mod modular;

use serde::{Deserialize, Serialize};
use std::time::Duration;

pub use dbscan::{dbscan_cluster, dbscan_labels, ObstacleDetection};
pub use e2e::{e2e_reference_policy, state_line, E2eParams, PolicyInput, PolicyOutput};
pub use external::{parse_reply, ExternalPolicy, DEFAULT_POLICY_TIMEOUT};
pub use lattice::{
    candidates_from, lattice_candidates, path_distance, plan_lattice, plan_lattice_from, Candidate,
    LatticeParams,
};
pub use modular::{
    perceive, run_modular, ModularConfig, ModularState, PerceptionMode, RememberedObstacle,
};

use crate::error::{Error, Result};
use crate::mixing::PerceptionFrame;
use crate::plant::{ControlCommand, VehicleState};
use crate::sensing::SensorRig;
use crate::world::Scenario;

/// Command and events from one control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct AdsStep {
    pub command: ControlCommand,
    pub events: Vec<String>,
    /// The planner found no admissible path and the vehicle was stopped.
    pub blocked: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdsChoice {
    Modular { mode: PerceptionMode },
    E2e,
    External { command: Vec<String> },
}

impl AdsChoice {
    pub fn modular() -> Self {
        AdsChoice::Modular {
            mode: PerceptionMode::Perception,
        }
    }

    pub fn ground_truth() -> Self {
        AdsChoice::Modular {
            mode: PerceptionMode::GroundTruth,
        }
    }

    /// `(rgb, depth)` streams this stack reads.
    pub fn needs(&self) -> (bool, bool) {
        match self {
            AdsChoice::Modular {
                mode: PerceptionMode::Perception,
            } => (false, true),
            AdsChoice::Modular {
                mode: PerceptionMode::GroundTruth,
            } => (false, false),
            AdsChoice::E2e | AdsChoice::External { .. } => (true, false),
        }
    }

    pub fn label(&self) -> String {
        match self {
            AdsChoice::Modular {
                mode: PerceptionMode::Perception,
            } => "modular".into(),
            AdsChoice::Modular {
                mode: PerceptionMode::GroundTruth,
            } => "modular_gt".into(),
            AdsChoice::E2e => "e2e".into(),
            AdsChoice::External { .. } => "external".into(),
        }
    }
}

impl std::str::FromStr for AdsChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "modular" => Ok(Self::modular()),
            "modular_gt" | "ground_truth" => Ok(Self::ground_truth()),
            "e2e" => Ok(AdsChoice::E2e),
            other => Err(Error::Lookup(other.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct AdsConfig {
    pub modular: ModularConfig,
    pub e2e: E2eParams,
    pub policy_timeout_ms: u64,
}

impl AdsConfig {
    pub fn validate(&self) -> Result<()> {
        self.modular.validate()?;
        self.e2e.validate()
    }

    fn timeout(&self) -> Duration {
        if self.policy_timeout_ms == 0 {
            DEFAULT_POLICY_TIMEOUT
        } else {
            Duration::from_millis(self.policy_timeout_ms)
        }
    }
}

enum DriverKind {
    Modular(PerceptionMode, ModularState),
    E2e(Option<ControlCommand>),
    External(ExternalPolicy, Option<ControlCommand>),
}

/// A driving stack with its state, stepped once per control tick.
pub struct Driver {
    kind: DriverKind,
    config: AdsConfig,
}

impl Driver {
    pub fn new(choice: &AdsChoice, config: &AdsConfig) -> Result<Self> {
        config.validate()?;
        let kind = match choice {
            AdsChoice::Modular { mode } => DriverKind::Modular(*mode, ModularState::default()),
            AdsChoice::E2e => DriverKind::E2e(None),
            AdsChoice::External { command } => {
                DriverKind::External(ExternalPolicy::spawn(command, config.timeout())?, None)
            }
        };
        Ok(Self {
            kind,
            config: config.clone(),
        })
    }

    pub fn act(
        &mut self,
        frame: &PerceptionFrame,
        state: &VehicleState,
        scenario: &Scenario,
        rig: &SensorRig,
    ) -> Result<AdsStep> {
        let t = state.pose.timestamp;
        match &mut self.kind {
            DriverKind::Modular(mode, memory) => {
                run_modular(frame, state, scenario, rig, &self.config.modular, *mode, memory)
            }
            DriverKind::E2e(last) => {
                let rgb = frame
                    .rgb
                    .clone()
                    .ok_or_else(|| Error::Wiring("E2E policy needs an RGB frame".into()))?;
                let input = PolicyInput {
                    rgb,
                    depth: frame.depth.clone(),
                    timestamp: t,
                };
                let out = e2e_reference_policy(&input, &self.config.e2e, last);
                Ok(AdsStep {
                    command: out.command,
                    events: out.event.into_iter().collect(),
                    blocked: false,
                })
            }
            DriverKind::External(policy, last) => {
                let rgb = frame
                    .rgb
                    .as_ref()
                    .ok_or_else(|| Error::Wiring("external policy needs an RGB frame".into()))?;
                match policy.query(rgb, state) {
                    Ok(command) => {
                        *last = Some(command);
                        Ok(AdsStep {
                            command,
                            events: vec![],
                            blocked: false,
                        })
                    }
                    Err(Error::Protocol(msg)) => {
                        let held = last.map_or_else(ControlCommand::default, |c| ControlCommand {
                            timestamp: t,
                            ..c
                        });
                        let tag = if msg.contains("timeout") {
                            "policy_timeout"
                        } else {
                            "policy_error"
                        };
                        Ok(AdsStep {
                            command: held,
                            events: vec![tag.into()],
                            blocked: false,
                        })
                    }
                    Err(e) => Err(e),
                }
            }
        }
    }
}
