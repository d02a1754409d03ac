//! Coordination payload and gas accounting.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capacity::ArchitectureFamily;
use crate::sim::ScenarioReport;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostError {
    #[error("reference profile carries zero bytes per round")]
    ZeroPayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommMethod {
    /// Full parameter upload and download (FedAvg / FedProx).
    ParamAveraging,
    /// Public-set logits (FedMD).
    LogitExchange,
    /// Hash, confidence, ECE and model type up; weights down.
    MetadataOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommProfile {
    pub method: CommMethod,
    pub param_count: u64,
    pub bytes_per_param: u64,
    pub logit_payload_bytes: u64,
    pub upload_items: u64,
    pub item_bytes: u64,
    pub weight_count: u64,
}

impl CommProfile {
    pub fn new(method: CommMethod) -> Self {
        Self {
            method,
            param_count: ArchitectureFamily::ResNet50.param_count(),
            bytes_per_param: 4,
            logit_payload_bytes: 4096,
            upload_items: 4,
            item_bytes: 32,
            weight_count: 3,
        }
    }

    pub fn metadata_only() -> Self {
        Self::new(CommMethod::MetadataOnly)
    }

    pub fn param_averaging(param_count: u64) -> Self {
        Self {
            param_count,
            ..Self::new(CommMethod::ParamAveraging)
        }
    }

    pub fn logit_exchange() -> Self {
        Self::new(CommMethod::LogitExchange)
    }
}

/// Bytes one hospital moves in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundBytes {
    pub upload: u64,
    pub download: u64,
    pub total: u64,
}

pub fn per_round_bytes(profile: &CommProfile) -> RoundBytes {
    let (upload, download) = match profile.method {
        CommMethod::MetadataOnly => (
            profile.upload_items * profile.item_bytes,
            profile.weight_count * profile.item_bytes,
        ),
        CommMethod::ParamAveraging => {
            let b = profile.param_count * profile.bytes_per_param;
            (b, b)
        }
        CommMethod::LogitExchange => (profile.logit_payload_bytes, profile.logit_payload_bytes),
    };
    RoundBytes {
        upload,
        download,
        total: upload + download,
    }
}

/// Exact non-negative rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub numerator: u64,
    pub denominator: u64,
}

impl Ratio {
    pub fn floor(self) -> u64 {
        self.numerator / self.denominator
    }

    pub fn to_f64(self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

/// `baseline.total / ours.total`.
pub fn reduction_ratio(baseline: &CommProfile, ours: &CommProfile) -> Result<Ratio, CostError> {
    let ours = per_round_bytes(ours).total;
    if ours == 0 {
        return Err(CostError::ZeroPayload);
    }
    Ok(Ratio {
        numerator: per_round_bytes(baseline).total,
        denominator: ours,
    })
}

/// US dollars in whole cents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UsdCents(pub u64);

impl UsdCents {
    pub fn dollars(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for UsdCents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

/// Per-operation gas and pricing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GasSchedule {
    pub register_gas: u64,
    pub start_round_gas: u64,
    pub submit_gas: u64,
    pub record_gas: u64,
    pub view_gas: u64,
    pub gwei_per_gas: f64,
    pub usd_per_eth: f64,
}

impl Default for GasSchedule {
    fn default() -> Self {
        Self {
            register_gas: 174_764,
            start_round_gas: 48_942,
            submit_gas: 252_464,
            record_gas: 94_931,
            view_gas: 0,
            gwei_per_gas: 20.0,
            usd_per_eth: 2000.0,
        }
    }
}

impl GasSchedule {
    /// `gas * gwei * 1e-9 * usd_per_eth`, rounded half-up to cents.
    pub fn usd(&self, gas: u64) -> UsdCents {
        let cents = gas as f64 * self.gwei_per_gas * self.usd_per_eth * 1e-7;
        UsdCents((cents + 0.5).floor() as u64)
    }

    pub fn cost(&self, gas: u64) -> GasCost {
        GasCost {
            gas,
            usd: self.usd(gas),
        }
    }

    pub fn gas_for(&self, op: GasOp) -> u64 {
        match op {
            GasOp::RegisterHospital => self.register_gas,
            GasOp::StartNewRound => self.start_round_gas,
            GasOp::SubmitUpdate => self.submit_gas,
            GasOp::CalculateWeight => self.view_gas,
            GasOp::RecordEnsemblePrediction => self.record_gas,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasCost {
    pub gas: u64,
    pub usd: UsdCents,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GasOp {
    RegisterHospital,
    StartNewRound,
    SubmitUpdate,
    CalculateWeight,
    RecordEnsemblePrediction,
}

impl GasOp {
    pub const ALL: [GasOp; 5] = [
        GasOp::RegisterHospital,
        GasOp::StartNewRound,
        GasOp::SubmitUpdate,
        GasOp::CalculateWeight,
        GasOp::RecordEnsemblePrediction,
    ];

    /// Contract function name.
    pub fn name(self) -> &'static str {
        match self {
            GasOp::RegisterHospital => "registerHospital",
            GasOp::StartNewRound => "startNewRound",
            GasOp::SubmitUpdate => "submitUpdate",
            GasOp::CalculateWeight => "calculateWeight",
            GasOp::RecordEnsemblePrediction => "recordEnsemblePrediction",
        }
    }

    pub fn frequency(self) -> &'static str {
        match self {
            GasOp::RegisterHospital => "Once per hospital",
            GasOp::StartNewRound => "Once per round",
            GasOp::SubmitUpdate => "Per hospital/round",
            GasOp::CalculateWeight => "Per hospital/round",
            GasOp::RecordEnsemblePrediction => "Once per round",
        }
    }
}

pub fn register_cost(schedule: &GasSchedule) -> GasCost {
    schedule.cost(schedule.register_gas)
}

/// One round with `hospital_count` submissions and one ensemble record.
pub fn round_gas(schedule: &GasSchedule, hospital_count: u64) -> GasCost {
    schedule.cost(schedule.start_round_gas + hospital_count * schedule.submit_gas + schedule.record_gas)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub op: GasOp,
    /// `None` for registration.
    pub round: Option<u64>,
    pub count: u64,
    pub gas: u64,
    pub usd: UsdCents,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTraffic {
    pub round: u64,
    pub submitters: u64,
    pub bytes: u64,
}

/// What happened on chain, reduced to counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivitySummary {
    pub registrations: u64,
    pub rounds: Vec<RoundActivity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundActivity {
    pub round: u64,
    pub accepted_submissions: u64,
    pub ensemble_recorded: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub entries: Vec<LedgerEntry>,
    pub traffic: Vec<RoundTraffic>,
}

impl CostLedger {
    /// Registration is charged per accepted hospital. Reverted calls cost nothing.
    pub fn from_activity(activity: &ActivitySummary, schedule: &GasSchedule, profile: &CommProfile) -> Self {
        let mut ledger = CostLedger::default();
        let mut push = |op: GasOp, round: Option<u64>, count: u64| {
            if count == 0 {
                return;
            }
            let gas = schedule.gas_for(op) * count;
            ledger.entries.push(LedgerEntry {
                op,
                round,
                count,
                gas,
                usd: schedule.usd(gas),
            });
        };
        push(GasOp::RegisterHospital, None, activity.registrations);
        for r in &activity.rounds {
            push(GasOp::StartNewRound, Some(r.round), 1);
            push(GasOp::SubmitUpdate, Some(r.round), r.accepted_submissions);
            push(GasOp::RecordEnsemblePrediction, Some(r.round), u64::from(r.ensemble_recorded));
        }
        let per_hospital = per_round_bytes(profile).total;
        ledger.traffic = activity
            .rounds
            .iter()
            .map(|r| RoundTraffic {
                round: r.round,
                submitters: r.accepted_submissions,
                bytes: r.accepted_submissions * per_hospital,
            })
            .collect();
        ledger
    }

    pub fn total_gas(&self) -> u64 {
        self.entries.iter().map(|e| e.gas).sum()
    }

    /// Priced from the gas total, not by adding rounded entries.
    pub fn total_usd(&self, schedule: &GasSchedule) -> UsdCents {
        schedule.usd(self.total_gas())
    }

    pub fn total_bytes(&self) -> u64 {
        self.traffic.iter().map(|t| t.bytes).sum()
    }
}

/// Gas and traffic for a finished scenario.
pub fn ledger_for_scenario(report: &ScenarioReport, schedule: &GasSchedule, profile: &CommProfile) -> CostLedger {
    CostLedger::from_activity(&report.activity(), schedule, profile)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metadata_payload() {
        let b = per_round_bytes(&CommProfile::metadata_only());
        assert_eq!((b.upload, b.download, b.total), (128, 96, 224));
    }

    #[test]
    fn param_and_logit_payloads() {
        let b = per_round_bytes(&CommProfile::param_averaging(25_557_032));
        assert_eq!(b.upload, 102_228_128);
        assert_eq!(b.total, 204_456_256);
        let b = per_round_bytes(&CommProfile::logit_exchange());
        assert_eq!((b.upload, b.download, b.total), (4096, 4096, 8192));
    }

    #[test]
    fn ratios() {
        let ours = CommProfile::metadata_only();
        let r = reduction_ratio(&CommProfile::param_averaging(25_557_032), &ours).unwrap();
        assert_eq!(r.floor(), 912_751);
        assert!((r.to_f64() - 912_751.142857).abs() < 1e-5);
        assert_eq!(reduction_ratio(&ours, &ours).unwrap().to_f64(), 1.0);
        let doubled = reduction_ratio(&CommProfile::param_averaging(2 * 25_557_032), &ours).unwrap();
        assert_eq!(doubled.numerator, 2 * r.numerator);
        let zero = CommProfile {
            upload_items: 0,
            weight_count: 0,
            ..ours
        };
        assert_eq!(reduction_ratio(&ours, &zero), Err(CostError::ZeroPayload));
    }

    #[test]
    fn gas_table() {
        let s = GasSchedule::default();
        let three = round_gas(&s, 3);
        assert_eq!(three.gas, 901_265);
        assert_eq!(three.usd.to_string(), "36.05");
        let one = round_gas(&s, 1);
        assert_eq!(one.gas, 396_337);
        assert_eq!(one.usd, UsdCents(1585));
        assert_eq!(register_cost(&s), GasCost { gas: 174_764, usd: UsdCents(699) });
        assert_eq!(s.usd(s.start_round_gas), UsdCents(196));
        assert_eq!(s.usd(s.submit_gas), UsdCents(1010));
        assert_eq!(s.usd(s.record_gas), UsdCents(380));
        assert_eq!(s.usd(0), UsdCents(0));
    }

    #[test]
    fn ledger_composition() {
        let s = GasSchedule::default();
        let p = CommProfile::metadata_only();
        let activity = ActivitySummary {
            registrations: 3,
            rounds: (1..=5)
                .map(|round| RoundActivity {
                    round,
                    accepted_submissions: 3,
                    ensemble_recorded: true,
                })
                .collect(),
        };
        let ledger = CostLedger::from_activity(&activity, &s, &p);
        assert_eq!(ledger.total_gas(), 3 * 174_764 + 5 * 901_265);
        assert_eq!(ledger.total_bytes(), 5 * 3 * 224);

        let none = ActivitySummary {
            registrations: 3,
            rounds: vec![],
        };
        assert_eq!(CostLedger::from_activity(&none, &s, &p).total_gas(), 3 * 174_764);
    }
}
