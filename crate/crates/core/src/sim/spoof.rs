//! Capacity spoofing: a weak device claims the strong tier.

use serde::{Deserialize, Serialize};

use super::predictor::SyntheticPredictor;
use super::scenario::{run_scenario, Admission, HospitalSpec, ScenarioConfig, ScenarioReport};
use super::{invalid, SimError};
use crate::capacity::CapacityClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackerSpec {
    #[serde(default = "default_name")]
    pub name: String,
    /// Real throughput of the attacker's device.
    #[serde(default = "default_throughput")]
    pub throughput: f64,
    #[serde(default = "default_claim")]
    pub claimed_tier: CapacityClass,
    #[serde(default = "default_predictor")]
    pub predictor: SyntheticPredictor,
    /// Hospital slot the attacker takes over. Defaults to the first strong hospital.
    #[serde(default)]
    pub replace_index: Option<usize>,
}

fn default_name() -> String {
    "Attacker".into()
}

fn default_throughput() -> f64 {
    50.0
}

fn default_claim() -> CapacityClass {
    CapacityClass::Strong
}

fn default_predictor() -> SyntheticPredictor {
    SyntheticPredictor {
        base_accuracy: 0.55,
        ..SyntheticPredictor::default()
    }
}

impl Default for AttackerSpec {
    fn default() -> Self {
        Self {
            name: default_name(),
            throughput: default_throughput(),
            claimed_tier: default_claim(),
            predictor: default_predictor(),
            replace_index: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpoofConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub attacker: AttackerSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpoofArm {
    /// The configured federation, with proof of capacity on.
    Honest,
    SpoofedNoPoc,
    SpoofedPoc,
}

impl SpoofArm {
    pub const ALL: [SpoofArm; 3] = [Self::Honest, Self::SpoofedNoPoc, Self::SpoofedPoc];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub arm: SpoofArm,
    /// `None` in the honest arm.
    pub attacker_status: Option<String>,
    pub participant_counts: Vec<u64>,
    pub participants: Vec<Vec<String>>,
    pub round_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub scenario: ScenarioReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpoofReport {
    pub attacker_index: usize,
    pub arms: Vec<ArmReport>,
}

impl SpoofReport {
    pub fn arm(&self, arm: SpoofArm) -> &ArmReport {
        self.arms.iter().find(|a| a.arm == arm).expect("all arms are run")
    }

    /// True when the attacker was admitted in `arm`.
    pub fn attacker_admitted(&self, arm: SpoofArm) -> bool {
        arm != SpoofArm::Honest
            && self.arm(arm).scenario.hospitals[self.attacker_index].registration == Admission::Accepted
    }
}

fn summarize(arm: SpoofArm, report: ScenarioReport, attacker: Option<usize>) -> ArmReport {
    let names = |idx: &[usize]| idx.iter().map(|&i| report.hospitals[i].name.clone()).collect::<Vec<_>>();
    let mut participant_counts = Vec::new();
    let mut participants = Vec::new();
    let mut round_accuracy = Vec::new();
    for r in &report.rounds {
        match &r.ensemble {
            Some(e) => {
                participant_counts.push(e.participant_count);
                participants.push(names(&e.participants));
                round_accuracy.push(e.metrics.accuracy);
            }
            None => {
                participant_counts.push(0);
                participants.push(Vec::new());
            }
        }
    }
    let mean_accuracy = if round_accuracy.is_empty() {
        0.0
    } else {
        round_accuracy.iter().sum::<f64>() / round_accuracy.len() as f64
    };
    ArmReport {
        arm,
        attacker_status: attacker.map(|i| report.hospitals[i].registration.label()),
        participant_counts,
        participants,
        round_accuracy,
        mean_accuracy,
        scenario: report,
    }
}

/// Runs the honest federation and the two spoofed variants from one seed.
pub fn run_spoofing_scenario(cfg: &SpoofConfig) -> Result<SpoofReport, SimError> {
    let base = &cfg.scenario;
    let index = match cfg.attacker.replace_index {
        Some(i) if i < base.hospitals.len() => i,
        Some(i) => {
            return Err(invalid(
                "attacker.replace_index",
                format!("{i} is out of range for {} hospitals", base.hospitals.len()),
            ))
        }
        None => base
            .hospitals
            .iter()
            .position(|h| h.tier == cfg.attacker.claimed_tier)
            .ok_or_else(|| invalid("attacker.replace_index", "no hospital of the claimed tier to replace"))?,
    };
    cfg.attacker.predictor.validate("attacker.predictor")?;

    let mut arms = Vec::with_capacity(3);
    for arm in SpoofArm::ALL {
        let mut scenario = base.clone();
        let attacker = match arm {
            SpoofArm::Honest => {
                scenario.poc_enabled = true;
                None
            }
            SpoofArm::SpoofedNoPoc | SpoofArm::SpoofedPoc => {
                scenario.poc_enabled = arm == SpoofArm::SpoofedPoc;
                scenario.hospitals[index] = HospitalSpec {
                    name: cfg.attacker.name.clone(),
                    tier: cfg.attacker.claimed_tier,
                    throughput: cfg.attacker.throughput,
                    predictor: cfg.attacker.predictor,
                };
                Some(index)
            }
        };
        let run = run_scenario(&scenario)?;
        arms.push(summarize(arm, run.report, attacker));
    }
    Ok(SpoofReport {
        attacker_index: index,
        arms,
    })
}
