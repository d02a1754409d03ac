//! Ready-made scenario configurations.

use super::predictor::SyntheticPredictor;
use super::scenario::{AttendancePattern, HospitalSpec, ScenarioConfig, SyntheticTask, WeightingMode};
use super::spoof::{AttackerSpec, SpoofConfig};
use crate::capacity::CapacityClass;
use crate::policy::PolicyConstants;

fn hospital(name: &str, tier: CapacityClass, predictor: SyntheticPredictor) -> HospitalSpec {
    let throughput = match tier {
        CapacityClass::Weak => 60.0,
        CapacityClass::Medium => 180.0,
        CapacityClass::Strong => 420.0,
    };
    HospitalSpec {
        name: name.into(),
        tier,
        throughput,
        predictor,
    }
}

fn base(seed: u64, rounds: u64, hospitals: Vec<HospitalSpec>, task: SyntheticTask) -> ScenarioConfig {
    ScenarioConfig {
        seed: Some(seed),
        rounds,
        hospitals,
        task,
        dirichlet_alpha: 0.5,
        policy: WeightingMode::Full,
        poc_enabled: true,
        attendance: AttendancePattern::full(),
        ece_bins: None,
        constants: PolicyConstants::default(),
    }
}

/// Weak, Medium and Strong hospitals with default predictors, binary task.
pub fn three_tier(seed: u64, rounds: u64) -> ScenarioConfig {
    let p = SyntheticPredictor::default();
    base(
        seed,
        rounds,
        vec![
            hospital("Hospital A", CapacityClass::Weak, p),
            hospital("Hospital B", CapacityClass::Medium, p),
            hospital("Hospital C", CapacityClass::Strong, p),
        ],
        SyntheticTask::default(),
    )
}

/// Three-tier federation under the weak-always / medium 80 % / strong 60 % attendance pattern.
pub fn dropout(seed: u64, rounds: u64) -> ScenarioConfig {
    ScenarioConfig {
        attendance: AttendancePattern::dropout(),
        ..three_tier(seed, rounds)
    }
}

/// One heavily overconfident, less accurate member next to two near-calibrated ones.
///
/// All three share a tier so capacity does not move the weights. With five
/// classes and sharpness 3 the honest members sit close to calibrated, which
/// leaves the overconfident member as the dominant source of ensemble ECE.
pub fn miscalibrated_member(seed: u64, policy: WeightingMode) -> ScenarioConfig {
    let member = |base_accuracy, overconfidence| SyntheticPredictor {
        base_accuracy,
        sharpness: 3.0,
        overconfidence,
    };
    let classes = 5;
    ScenarioConfig {
        policy,
        ..base(
            seed,
            3,
            vec![
                hospital("Overconfident", CapacityClass::Medium, member(0.55, 4.0)),
                hospital("Calibrated 1", CapacityClass::Medium, member(0.85, 1.05)),
                hospital("Calibrated 2", CapacityClass::Medium, member(0.85, 1.05)),
            ],
            SyntheticTask {
                class_count: classes,
                test_size: 500,
                val_size: 500,
                train_size: 1000,
                label_distribution: vec![1.0 / classes as f64; classes],
            },
        )
    }
}

/// Three-tier federation where the attacker replaces the strong hospital.
pub fn spoofing(seed: u64, rounds: u64) -> SpoofConfig {
    SpoofConfig {
        scenario: three_tier(seed, rounds),
        attacker: AttackerSpec::default(),
    }
}
