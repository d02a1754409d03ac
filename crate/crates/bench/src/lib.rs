//! Fixtures shared by the benchmarks.

use chainlearn_core::metrics::PredictionBatch;
use chainlearn_core::sim::{generate_predictions, presets, run_scenario, stream_rng, SyntheticPredictor};
use chainlearn_core::AuditLog;

/// `n` synthetic predictions over `classes` classes from the default predictor.
pub fn prediction_batch(n: usize, classes: usize, seed: u64) -> PredictionBatch {
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut rng = stream_rng(seed, 0, 0, "bench");
    generate_predictions(&SyntheticPredictor::default(), &labels, classes, &mut rng).expect("valid predictor")
}

/// Audit log of a three-hospital run with `rounds` rounds.
pub fn audit_log(rounds: u64) -> AuditLog {
    run_scenario(&presets::three_tier(1, rounds))
        .expect("preset runs")
        .coordinator
        .audit_log()
        .clone()
}
