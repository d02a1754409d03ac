//! Probability-space aggregation and evaluation metrics.
//!
//! Aggregation keeps integer weights and works in `f64`. All means use
//! pairwise summation so results do not depend on how a caller chunks work.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::FixedPoint;

/// Tolerance on `sum(p) == 1` for a valid probability vector.
pub const SUM_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_ECE_BINS: usize = 15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("total weight is zero")]
    ZeroTotalWeight,
    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),
    #[error("label {label} out of range for {class_count} classes")]
    LabelOutOfRange { label: usize, class_count: usize },
    #[error("value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("bin count must be at least 1")]
    ZeroBins,
}

/// Per-input class distribution. Entries in `[0, 1]` summing to 1 within 1e-9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self, MetricsError> {
        if probs.is_empty() {
            return Err(MetricsError::InvalidProbability("no classes".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(MetricsError::InvalidProbability(format!("entry {p} outside [0, 1]")));
        }
        let sum = pairwise_sum(&probs);
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(MetricsError::InvalidProbability(format!("entries sum to {sum}")));
        }
        Ok(Self(probs))
    }

    /// All mass on `class`.
    pub fn one_hot(class_count: usize, class: usize) -> Self {
        let mut v = vec![0.0; class_count];
        v[class] = 1.0;
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn max_prob(&self) -> f64 {
        self.0[self.argmax()]
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Predictions for a set of inputs together with their true labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBatch {
    class_count: usize,
    predictions: Vec<ProbabilityVector>,
    labels: Vec<usize>,
}

impl PredictionBatch {
    pub fn new(
        class_count: usize,
        predictions: Vec<ProbabilityVector>,
        labels: Vec<usize>,
    ) -> Result<Self, MetricsError> {
        if predictions.len() != labels.len() {
            return Err(MetricsError::LengthMismatch(format!(
                "{} predictions vs {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        if let Some(p) = predictions.iter().find(|p| p.len() != class_count) {
            return Err(MetricsError::LengthMismatch(format!(
                "vector of length {} in a {class_count}-class batch",
                p.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(MetricsError::LabelOutOfRange { label, class_count });
        }
        Ok(Self {
            class_count,
            predictions,
            labels,
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn predictions(&self) -> &[ProbabilityVector] {
        &self.predictions
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn non_empty(&self) -> Result<(), MetricsError> {
        if self.is_empty() {
            Err(MetricsError::EmptyBatch)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EceConfig {
    pub bin_count: usize,
}

impl Default for EceConfig {
    fn default() -> Self {
        Self {
            bin_count: DEFAULT_ECE_BINS,
        }
    }
}

/// Summary used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub ece: f64,
}

impl EvalMetrics {
    pub fn evaluate(batch: &PredictionBatch, cfg: EceConfig) -> Result<Self, MetricsError> {
        Ok(Self {
            accuracy: accuracy(batch)?,
            macro_f1: macro_f1(batch)?,
            ece: expected_calibration_error(batch, cfg)?,
        })
    }
}

/// Sum with O(log n) error growth and a fixed reduction tree.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if xs.len() <= BLOCK {
        return xs.iter().fold(0.0, |acc, x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// `sum_i W_i P_i / sum_i W_i`.
pub fn weighted_aggregate(
    vectors: &[&ProbabilityVector],
    weights: &[FixedPoint],
) -> Result<ProbabilityVector, MetricsError> {
    if vectors.len() != weights.len() {
        return Err(MetricsError::LengthMismatch(format!(
            "{} vectors vs {} weights",
            vectors.len(),
            weights.len()
        )));
    }
    let Some(first) = vectors.first() else {
        return Err(MetricsError::ZeroTotalWeight);
    };
    let classes = first.len();
    if let Some(v) = vectors.iter().find(|v| v.len() != classes) {
        return Err(MetricsError::LengthMismatch(format!(
            "vector of length {} vs {classes}",
            v.len()
        )));
    }
    let total: u128 = weights.iter().map(|w| u128::from(w.0)).sum();
    if total == 0 {
        return Err(MetricsError::ZeroTotalWeight);
    }
    let total = total as f64;
    let coeffs: Vec<f64> = weights.iter().map(|w| w.0 as f64 / total).collect();

    let mut terms = vec![0.0; vectors.len()];
    let mut out = Vec::with_capacity(classes);
    for c in 0..classes {
        for ((t, v), k) in terms.iter_mut().zip(vectors).zip(&coeffs) {
            *t = k * v.0[c];
        }
        out.push(pairwise_sum(&terms).clamp(0.0, 1.0));
    }
    Ok(ProbabilityVector(out))
}

/// Top-1 accuracy.
pub fn accuracy(batch: &PredictionBatch) -> Result<f64, MetricsError> {
    batch.non_empty()?;
    let correct = batch
        .predictions
        .iter()
        .zip(&batch.labels)
        .filter(|(p, &l)| p.argmax() == l)
        .count();
    Ok(correct as f64 / batch.len() as f64)
}

/// Unweighted mean of per-class F1 over all classes. Undefined ratios count as 0.
pub fn macro_f1(batch: &PredictionBatch) -> Result<f64, MetricsError> {
    batch.non_empty()?;
    let k = batch.class_count;
    let mut tp = vec![0u64; k];
    let mut predicted = vec![0u64; k];
    let mut actual = vec![0u64; k];
    for (p, &label) in batch.predictions.iter().zip(&batch.labels) {
        let guess = p.argmax();
        predicted[guess] += 1;
        actual[label] += 1;
        if guess == label {
            tp[label] += 1;
        }
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let per_class: Vec<f64> = (0..k)
        .map(|c| {
            let precision = ratio(tp[c], predicted[c]);
            let recall = ratio(tp[c], actual[c]);
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        })
        .collect();
    Ok(mean(&per_class))
}

/// Upper edge of bin `b` (0-based) is `(b + 1) / bins`; bins are `(lo, hi]`.
fn bin_index(confidence: f64, bins: usize) -> usize {
    let edge = |k: usize| k as f64 / bins as f64;
    let mut idx = ((confidence * bins as f64).ceil() as isize - 1).clamp(0, bins as isize - 1) as usize;
    // correct for rounding in the product so membership matches the edge values exactly
    while idx > 0 && confidence <= edge(idx) {
        idx -= 1;
    }
    while idx + 1 < bins && confidence > edge(idx + 1) {
        idx += 1;
    }
    idx
}

/// Equal-width ECE over the max-probability.
///
/// A confidence exactly on an interior edge belongs to the lower bin; 1.0
/// belongs to the top bin.
pub fn expected_calibration_error(batch: &PredictionBatch, cfg: EceConfig) -> Result<f64, MetricsError> {
    batch.non_empty()?;
    if cfg.bin_count == 0 {
        return Err(MetricsError::ZeroBins);
    }
    let mut conf_bins: Vec<Vec<f64>> = vec![Vec::new(); cfg.bin_count];
    let mut hit_bins: Vec<Vec<f64>> = vec![Vec::new(); cfg.bin_count];
    for (p, &label) in batch.predictions.iter().zip(&batch.labels) {
        let conf = p.max_prob();
        let b = bin_index(conf, cfg.bin_count);
        conf_bins[b].push(conf);
        hit_bins[b].push(if p.argmax() == label { 1.0 } else { 0.0 });
    }
    let n = batch.len() as f64;
    let gaps: Vec<f64> = conf_bins
        .iter()
        .zip(&hit_bins)
        .filter(|(c, _)| !c.is_empty())
        .map(|(c, h)| (c.len() as f64 / n) * (mean(h) - mean(c)).abs())
        .collect();
    Ok(pairwise_sum(&gaps))
}

pub fn mean_confidence(batch: &PredictionBatch) -> Result<f64, MetricsError> {
    batch.non_empty()?;
    let maxes: Vec<f64> = batch.predictions.iter().map(ProbabilityVector::max_prob).collect();
    Ok(mean(&maxes))
}

/// Round-half-up of `x * scale`, clamped to `[0, scale]`.
pub fn to_fixed_point(x: f64, scale: u64) -> Result<FixedPoint, MetricsError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(MetricsError::OutOfRange(x));
    }
    let v = (x * scale as f64 + 0.5).floor();
    Ok(FixedPoint((v as u64).min(scale)))
}
