//! Integer-only ensemble weight policy.
//!
//! The weight of a participant is
//!
//! ```text
//! W = min( floor(M * C * (SCALE - E) / SCALE^2) + B, MAX )
//! B = min(bonus_per_round * r, bonus_cap)
//! ```
//!
//! where `M` is the capacity multiplier, `C` the average confidence, `E` the
//! expected calibration error and `r` the number of accepted rounds. `C`, `E`
//! and `W` are fixed-point values in units of `1 / SCALE`. Multiplication is
//! performed before the single truncating division, the way an EVM contract
//! would evaluate it.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capacity::CapacityClass;

pub const SCALE: u64 = 10_000;
pub const MAX_WEIGHT: u64 = 15_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("invalid reliability: confidence {confidence} / ece {ece} exceed scale {scale}")]
    InvalidReliability { confidence: u64, ece: u64, scale: u64 },
    #[error("weight computation overflowed 128-bit intermediate")]
    Overflow,
    #[error("invalid policy constants: {0}")]
    InvalidConstants(&'static str),
}

/// A non-negative fixed-point quantity in units of `1 / scale`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FixedPoint(pub u64);

impl FixedPoint {
    pub const ZERO: FixedPoint = FixedPoint(0);

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn to_f64(self, scale: u64) -> f64 {
        self.0 as f64 / scale as f64
    }
}

impl fmt::Display for FixedPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u64> for FixedPoint {
    fn from(v: u64) -> Self {
        FixedPoint(v)
    }
}

/// Contract constants. Injectable so the cap branch can be exercised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConstants {
    pub scale: u64,
    pub max_weight: u64,
    pub mult_weak: u64,
    pub mult_medium: u64,
    pub mult_strong: u64,
    pub bonus_per_round: u64,
    pub bonus_cap: u64,
}

impl Default for PolicyConstants {
    fn default() -> Self {
        Self {
            scale: SCALE,
            max_weight: MAX_WEIGHT,
            mult_weak: 8_000,
            mult_medium: 10_000,
            mult_strong: 12_000,
            bonus_per_round: 500,
            bonus_cap: 2_500,
        }
    }
}

impl PolicyConstants {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.scale == 0 {
            return Err(PolicyError::InvalidConstants("scale must be positive"));
        }
        if !(self.mult_weak < self.mult_medium && self.mult_medium < self.mult_strong) {
            return Err(PolicyError::InvalidConstants(
                "multipliers must be strictly increasing weak < medium < strong",
            ));
        }
        if self.max_weight < self.mult_strong {
            return Err(PolicyError::InvalidConstants(
                "max_weight must be at least the largest multiplier",
            ));
        }
        if self.bonus_per_round == 0 {
            if self.bonus_cap != 0 {
                return Err(PolicyError::InvalidConstants(
                    "bonus_cap must be zero when bonus_per_round is zero",
                ));
            }
        } else if !self.bonus_cap.is_multiple_of(self.bonus_per_round) {
            return Err(PolicyError::InvalidConstants(
                "bonus_cap must be a multiple of bonus_per_round",
            ));
        }
        Ok(())
    }
}

/// `(C, E, r)` for one participant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Reliability {
    pub confidence: FixedPoint,
    pub ece: FixedPoint,
    pub rounds_participated: u64,
}

impl Reliability {
    pub fn new(confidence: u64, ece: u64, rounds_participated: u64) -> Self {
        Self {
            confidence: FixedPoint(confidence),
            ece: FixedPoint(ece),
            rounds_participated,
        }
    }

    pub fn check(&self, consts: &PolicyConstants) -> Result<(), PolicyError> {
        if self.confidence.0 > consts.scale || self.ece.0 > consts.scale {
            return Err(PolicyError::InvalidReliability {
                confidence: self.confidence.0,
                ece: self.ece.0,
                scale: consts.scale,
            });
        }
        Ok(())
    }
}

/// Which single factor of the weight formula is neutralised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Full,
    /// `M = scale`
    NoCapMul,
    /// `C = scale`
    NoConf,
    /// `E = 0`
    NoEce,
    /// `B = 0`
    NoBonus,
}

pub fn participation_bonus(rounds: u64, consts: &PolicyConstants) -> FixedPoint {
    FixedPoint(consts.bonus_per_round.saturating_mul(rounds).min(consts.bonus_cap))
}

pub fn capacity_multiplier(capacity: CapacityClass, consts: &PolicyConstants) -> u64 {
    match capacity {
        CapacityClass::Weak => consts.mult_weak,
        CapacityClass::Medium => consts.mult_medium,
        CapacityClass::Strong => consts.mult_strong,
    }
}

pub fn calculate_weight(
    capacity: CapacityClass,
    rel: &Reliability,
    consts: &PolicyConstants,
) -> Result<FixedPoint, PolicyError> {
    ablated_weight(AblationVariant::Full, capacity, rel, consts)
}

pub fn ablated_weight(
    variant: AblationVariant,
    capacity: CapacityClass,
    rel: &Reliability,
    consts: &PolicyConstants,
) -> Result<FixedPoint, PolicyError> {
    rel.check(consts)?;
    let scale = consts.scale;
    let multiplier = match variant {
        AblationVariant::NoCapMul => scale,
        _ => capacity_multiplier(capacity, consts),
    };
    let confidence = match variant {
        AblationVariant::NoConf => scale,
        _ => rel.confidence.0,
    };
    let ece = match variant {
        AblationVariant::NoEce => 0,
        _ => rel.ece.0,
    };
    let bonus = match variant {
        AblationVariant::NoBonus => 0,
        _ => participation_bonus(rel.rounds_participated, consts).0,
    };

    let numerator = u128::from(multiplier)
        .checked_mul(u128::from(confidence))
        .and_then(|p| p.checked_mul(u128::from(scale - ece)))
        .ok_or(PolicyError::Overflow)?;
    let denominator = u128::from(scale) * u128::from(scale);
    let base = numerator / denominator;
    let weight = (base + u128::from(bonus)).min(u128::from(consts.max_weight));
    // bounded by max_weight, which is a u64
    Ok(FixedPoint(weight as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(cap: CapacityClass, c: u64, e: u64, r: u64) -> u64 {
        calculate_weight(cap, &Reliability::new(c, e, r), &PolicyConstants::default())
            .unwrap()
            .0
    }

    #[test]
    fn bonus_values() {
        let k = PolicyConstants::default();
        assert_eq!(participation_bonus(0, &k).0, 0);
        assert_eq!(participation_bonus(2, &k).0, 1000);
        assert_eq!(participation_bonus(5, &k).0, 2500);
        assert_eq!(participation_bonus(10, &k).0, 2500);
        assert_eq!(participation_bonus(u64::MAX, &k).0, 2500);
    }

    #[test]
    fn multipliers() {
        let k = PolicyConstants::default();
        assert_eq!(capacity_multiplier(CapacityClass::Weak, &k), 8000);
        assert_eq!(capacity_multiplier(CapacityClass::Medium, &k), 10000);
        assert_eq!(capacity_multiplier(CapacityClass::Strong, &k), 12000);
    }

    #[test]
    fn weight_examples() {
        assert_eq!(w(CapacityClass::Strong, 9500, 500, 2), 11830);
        assert_eq!(w(CapacityClass::Weak, 10000, 0, 0), 8000);
        assert_eq!(w(CapacityClass::Strong, 10000, 10000, 1), 500);
        assert_eq!(w(CapacityClass::Medium, 8000, 2000, 6), 8900);
        assert_eq!(w(CapacityClass::Weak, 0, 0, 0), 0);
    }

    #[test]
    fn ablation_examples() {
        let k = PolicyConstants::default();
        let strong = Reliability::new(9500, 500, 2);
        assert_eq!(
            ablated_weight(AblationVariant::NoBonus, CapacityClass::Strong, &strong, &k).unwrap().0,
            10830
        );
        let weak = Reliability::new(10000, 7000, 0);
        assert_eq!(
            ablated_weight(AblationVariant::NoEce, CapacityClass::Weak, &weak, &k).unwrap().0,
            8000
        );
        // NoCapMul: M = scale
        assert_eq!(
            ablated_weight(AblationVariant::NoCapMul, CapacityClass::Strong, &strong, &k).unwrap().0,
            9025 + 1000
        );
        // NoConf: C = scale -> 12000 * 9500 / 10000
        assert_eq!(
            ablated_weight(AblationVariant::NoConf, CapacityClass::Strong, &strong, &k).unwrap().0,
            11400 + 1000
        );
    }

    #[test]
    fn rejects_out_of_range_reliability() {
        let k = PolicyConstants::default();
        for rel in [Reliability::new(10001, 0, 0), Reliability::new(0, 10001, 0)] {
            assert!(matches!(
                calculate_weight(CapacityClass::Medium, &rel, &k),
                Err(PolicyError::InvalidReliability { .. })
            ));
            assert!(ablated_weight(AblationVariant::NoEce, CapacityClass::Medium, &rel, &k).is_err());
        }
    }

    #[test]
    fn cap_branch_with_synthetic_constants() {
        let k = PolicyConstants {
            max_weight: 12_000,
            bonus_per_round: 1_000,
            bonus_cap: 5_000,
            ..PolicyConstants::default()
        };
        k.validate().unwrap();
        let rel = Reliability::new(10_000, 0, 5);
        assert_eq!(calculate_weight(CapacityClass::Strong, &rel, &k).unwrap().0, 12_000);
        assert_eq!(calculate_weight(CapacityClass::Weak, &rel, &k).unwrap().0, 12_000);
        assert_eq!(calculate_weight(CapacityClass::Weak, &Reliability::new(10_000, 0, 3), &k).unwrap().0, 11_000);
    }

    #[test]
    fn overflow_is_an_error() {
        let k = PolicyConstants {
            scale: u64::MAX,
            max_weight: u64::MAX,
            mult_weak: u64::MAX - 2,
            mult_medium: u64::MAX - 1,
            mult_strong: u64::MAX,
            bonus_per_round: 0,
            bonus_cap: 0,
        };
        let rel = Reliability::new(u64::MAX, 0, 0);
        assert_eq!(calculate_weight(CapacityClass::Strong, &rel, &k), Err(PolicyError::Overflow));
    }

    #[test]
    fn constant_validation() {
        assert!(PolicyConstants::default().validate().is_ok());
        let bad = [
            PolicyConstants { scale: 0, ..Default::default() },
            PolicyConstants { mult_medium: 8_000, ..Default::default() },
            PolicyConstants { max_weight: 11_999, ..Default::default() },
            PolicyConstants { bonus_cap: 2_600, ..Default::default() },
            PolicyConstants { bonus_per_round: 0, ..Default::default() },
        ];
        for k in bad {
            assert!(k.validate().is_err(), "{k:?}");
        }
    }

    #[test]
    fn constants_round_trip_through_json() {
        let k = PolicyConstants::default();
        let json = serde_json::to_string(&k).unwrap();
        assert_eq!(serde_json::from_str::<PolicyConstants>(&json).unwrap(), k);
        let partial: PolicyConstants = serde_json::from_str(r#"{"max_weight": 20000}"#).unwrap();
        assert_eq!(partial.max_weight, 20_000);
        assert_eq!(partial.scale, 10_000);
    }
}
