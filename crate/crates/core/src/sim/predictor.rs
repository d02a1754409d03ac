//! Synthetic predictors with controllable accuracy and calibration.
//!
//! For each input:
//!
//! 1. With probability `base_accuracy` the mode is the true label, otherwise
//!    a wrong class drawn uniformly.
//! 2. A flat `Dirichlet(1, ..., 1)` vector `d` is drawn and its largest entry
//!    swapped into the mode position.
//! 3. The mode is boosted: `p = (d + s * e_mode) / (1 + s)` with
//!    `s = sharpness`. Infinite sharpness gives a one-hot vector.
//! 4. Overconfidence `g` sharpens without moving the argmax:
//!    `q_j = p_j^g / sum_k p_k^g`.
//!
//! Every input consumes the same number of random draws whatever the
//! parameters, so two predictors differing only in `overconfidence` produce
//! identical argmaxes from the same stream.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::{invalid, SimError};
use crate::metrics::{PredictionBatch, ProbabilityVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticPredictor {
    /// Probability that the emitted argmax is the true label.
    pub base_accuracy: f64,
    /// Extra mass placed on the argmax, relative to the flat noise.
    pub sharpness: f64,
    /// Power applied to the distribution before renormalising; above 1 inflates confidence.
    pub overconfidence: f64,
}

impl Default for SyntheticPredictor {
    fn default() -> Self {
        Self {
            base_accuracy: 0.85,
            sharpness: 0.67,
            overconfidence: 1.0,
        }
    }
}

impl SyntheticPredictor {
    pub fn validate(&self, field: &str) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.base_accuracy) {
            return Err(invalid(format!("{field}.base_accuracy"), "must lie in [0, 1]"));
        }
        if self.sharpness.is_nan() || self.sharpness <= 0.0 {
            return Err(invalid(format!("{field}.sharpness"), "must be positive"));
        }
        if !(self.overconfidence > 0.0 && self.overconfidence.is_finite()) {
            return Err(invalid(format!("{field}.overconfidence"), "must be positive and finite"));
        }
        Ok(())
    }

    fn emit<R: Rng + ?Sized>(&self, label: usize, class_count: usize, rng: &mut R) -> ProbabilityVector {
        let correct = rng.random::<f64>() < self.base_accuracy;
        let wrong: usize = rng.random_range(0..class_count.max(2) - 1);
        let mode = if correct || class_count == 1 {
            label
        } else if wrong >= label {
            wrong + 1
        } else {
            wrong
        };
        let mut d: Vec<f64> = (0..class_count).map(|_| Exp1.sample(rng)).collect();
        let top = (0..class_count).fold(0, |best, j| if d[j] > d[best] { j } else { best });
        d.swap(top, mode);

        if self.sharpness.is_infinite() {
            return ProbabilityVector::one_hot(class_count, mode);
        }
        let total: f64 = d.iter().sum();
        let s = self.sharpness;
        let mut p: Vec<f64> = d.iter().map(|x| x / total / (1.0 + s)).collect();
        p[mode] += s / (1.0 + s);

        let peak = p[mode];
        let g = self.overconfidence;
        let mut q: Vec<f64> = p.iter().map(|x| (x / peak).powf(g)).collect();
        let z: f64 = q.iter().sum();
        q.iter_mut().for_each(|x| *x /= z);
        ProbabilityVector::new(q).expect("construction yields a normalised vector")
    }
}

pub fn generate_predictions<R: Rng + ?Sized>(
    predictor: &SyntheticPredictor,
    labels: &[usize],
    class_count: usize,
    rng: &mut R,
) -> Result<PredictionBatch, SimError> {
    predictor.validate("predictor")?;
    if class_count == 0 {
        return Err(invalid("class_count", "must be at least 1"));
    }
    let predictions = labels
        .iter()
        .map(|&l| predictor.emit(l, class_count, rng))
        .collect();
    Ok(PredictionBatch::new(class_count, predictions, labels.to_vec())?)
}
