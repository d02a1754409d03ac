use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::partition::{dirichlet_partition, label_skew};
use super::predictor::{generate_predictions, SyntheticPredictor};
use super::rng::{stream_rng, TASK_STREAM};
use super::{invalid, SimError};
use crate::capacity::{
    assign_architecture, run_benchmark, BenchmarkWorkload, CapacityClass, DEFAULT_BENCHMARK_BATCH,
    DEFAULT_BENCHMARK_STEPS,
};
use crate::coordinator::{Coordinator, CoordinatorConfig, UpdateRequest};
use crate::cost::{ActivitySummary, RoundActivity};
use crate::identity::{sha256, Hash32, ParticipantAddress, SignedBenchmark, SigningKey};
use crate::metrics::{
    expected_calibration_error, mean_confidence, to_fixed_point, weighted_aggregate, EceConfig, EvalMetrics,
    PredictionBatch, ProbabilityVector,
};
use crate::policy::{AblationVariant, FixedPoint, PolicyConstants};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTask {
    pub class_count: usize,
    pub test_size: usize,
    pub val_size: usize,
    /// Size of the label pool that is Dirichlet-partitioned across hospitals.
    #[serde(default = "default_train_size")]
    pub train_size: usize,
    pub label_distribution: Vec<f64>,
}

fn default_train_size() -> usize {
    1000
}

impl Default for SyntheticTask {
    fn default() -> Self {
        Self {
            class_count: 2,
            test_size: 312,
            val_size: 312,
            train_size: default_train_size(),
            label_distribution: vec![0.5, 0.5],
        }
    }
}

impl SyntheticTask {
    fn validate(&self) -> Result<(), SimError> {
        if self.class_count == 0 {
            return Err(invalid("task.class_count", "must be at least 1"));
        }
        if self.label_distribution.len() != self.class_count {
            return Err(invalid(
                "task.label_distribution",
                format!("has {} entries for {} classes", self.label_distribution.len(), self.class_count),
            ));
        }
        if self.label_distribution.iter().any(|p| !(0.0..=1.0).contains(p))
            || (self.label_distribution.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(invalid("task.label_distribution", "must be probabilities summing to 1"));
        }
        for (field, size) in [
            ("task.test_size", self.test_size),
            ("task.val_size", self.val_size),
            ("task.train_size", self.train_size),
        ] {
            if size < self.class_count {
                return Err(invalid(field, "must be at least class_count"));
            }
        }
        Ok(())
    }

    fn sample_labels<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        let dist = WeightedIndex::new(&self.label_distribution).expect("validated distribution");
        (0..n).map(|_| dist.sample(rng)).collect()
    }
}

/// Per-tier probability of attending a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttendancePattern {
    pub weak: f64,
    pub medium: f64,
    pub strong: f64,
}

impl Default for AttendancePattern {
    fn default() -> Self {
        Self::full()
    }
}

impl AttendancePattern {
    pub fn full() -> Self {
        Self {
            weak: 1.0,
            medium: 1.0,
            strong: 1.0,
        }
    }

    /// Weak always attends, medium 80 %, strong 60 %.
    pub fn dropout() -> Self {
        Self {
            weak: 1.0,
            medium: 0.8,
            strong: 0.6,
        }
    }

    pub fn probability(&self, tier: CapacityClass) -> f64 {
        match tier {
            CapacityClass::Weak => self.weak,
            CapacityClass::Medium => self.medium,
            CapacityClass::Strong => self.strong,
        }
    }
}

/// How ensemble weights are obtained each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    Full,
    NoCapMul,
    NoConf,
    NoEce,
    NoBonus,
    /// Every participant gets weight 1.
    EqualWeight,
}

impl WeightingMode {
    pub fn ablation(self) -> Option<AblationVariant> {
        match self {
            Self::Full => Some(AblationVariant::Full),
            Self::NoCapMul => Some(AblationVariant::NoCapMul),
            Self::NoConf => Some(AblationVariant::NoConf),
            Self::NoEce => Some(AblationVariant::NoEce),
            Self::NoBonus => Some(AblationVariant::NoBonus),
            Self::EqualWeight => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HospitalSpec {
    pub name: String,
    /// Declared tier. Need not match `throughput` (that is how spoofing is set up).
    pub tier: CapacityClass,
    /// Injected benchmark throughput, samples per second.
    pub throughput: f64,
    #[serde(default)]
    pub predictor: SyntheticPredictor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    pub rounds: u64,
    pub hospitals: Vec<HospitalSpec>,
    #[serde(default)]
    pub task: SyntheticTask,
    #[serde(default = "default_alpha")]
    pub dirichlet_alpha: f64,
    #[serde(default = "default_policy")]
    pub policy: WeightingMode,
    #[serde(default = "default_true")]
    pub poc_enabled: bool,
    #[serde(default)]
    pub attendance: AttendancePattern,
    #[serde(default)]
    pub ece_bins: Option<usize>,
    #[serde(default)]
    pub constants: PolicyConstants,
}

fn default_alpha() -> f64 {
    0.5
}

fn default_policy() -> WeightingMode {
    WeightingMode::Full
}

fn default_true() -> bool {
    true
}

impl ScenarioConfig {
    /// The seed used when none is configured.
    pub const DEFAULT_SEED: u64 = 0;

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(Self::DEFAULT_SEED)
    }

    pub fn ece_config(&self) -> EceConfig {
        self.ece_bins.map_or_else(EceConfig::default, |bin_count| EceConfig { bin_count })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.hospitals.is_empty() {
            return Err(invalid("hospitals", "at least one hospital is required"));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "must be at least 1"));
        }
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return Err(invalid("dirichlet_alpha", "must be positive and finite"));
        }
        if self.ece_config().bin_count == 0 {
            return Err(invalid("ece_bins", "must be at least 1"));
        }
        self.task.validate()?;
        self.constants
            .validate()
            .map_err(|e| invalid("constants", e.to_string()))?;
        for tier in CapacityClass::ALL {
            if !(0.0..=1.0).contains(&self.attendance.probability(tier)) {
                return Err(invalid(format!("attendance.{tier}"), "must lie in [0, 1]"));
            }
        }
        for (i, h) in self.hospitals.iter().enumerate() {
            h.predictor.validate(&format!("hospitals[{i}].predictor"))?;
            if !(h.throughput >= 0.0 && h.throughput.is_finite()) {
                return Err(invalid(format!("hospitals[{i}].throughput"), "must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// Outcome of a protocol call made on a hospital's behalf.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Admission {
    Accepted,
    Rejected { code: String, message: String },
}

impl Admission {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Admission::Accepted)
    }

    /// `"accepted"` or `"rejected: <Code>"`.
    pub fn label(&self) -> String {
        match self {
            Admission::Accepted => "accepted".into(),
            Admission::Rejected { code, .. } => format!("rejected: {code}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolEvent {
    /// 0 for registration.
    pub round: u64,
    pub hospital: usize,
    pub action: String,
    pub outcome: Admission,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardSummary {
    pub hospital: usize,
    pub size: usize,
    pub class_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HospitalSummary {
    pub index: usize,
    pub name: String,
    pub tier: CapacityClass,
    pub throughput: f64,
    pub address: ParticipantAddress,
    pub registration: Admission,
    pub attended_rounds: u64,
    pub accepted_rounds: u64,
    pub rounds_participated: u64,
    pub final_weight: Option<u64>,
    pub final_bonus: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRound {
    pub index: usize,
    pub name: String,
    pub outcome: Admission,
    pub confidence: u64,
    pub ece: u64,
    pub weight: Option<u64>,
    pub validation: EvalMetrics,
    pub test: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRound {
    pub participants: Vec<usize>,
    pub participant_count: u64,
    pub prediction_hash: Hash32,
    pub metrics: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u64,
    /// Attending hospitals only.
    pub members: Vec<MemberRound>,
    pub ensemble: Option<EnsembleRound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub seed: u64,
    pub policy: WeightingMode,
    pub poc_enabled: bool,
    pub hospitals: Vec<HospitalSummary>,
    pub shards: Vec<ShardSummary>,
    pub label_skew: f64,
    pub events: Vec<ProtocolEvent>,
    pub rounds: Vec<RoundReport>,
    pub audit_head: Hash32,
    pub state_digest: Hash32,
}

/// One row of the flat per-round metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: u64,
    pub hospital_or_ensemble: String,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub ece: f64,
    pub weight: Option<u64>,
    pub accepted: bool,
}

impl ScenarioReport {
    pub fn metrics_rows(&self) -> Vec<MetricsRow> {
        let mut rows = Vec::new();
        for r in &self.rounds {
            for m in &r.members {
                rows.push(MetricsRow {
                    round: r.round,
                    hospital_or_ensemble: m.name.clone(),
                    accuracy: m.test.accuracy,
                    macro_f1: m.test.macro_f1,
                    ece: m.test.ece,
                    weight: m.weight,
                    accepted: m.outcome.is_accepted(),
                });
            }
            if let Some(e) = &r.ensemble {
                let total = r.members.iter().filter_map(|m| m.weight).sum();
                rows.push(MetricsRow {
                    round: r.round,
                    hospital_or_ensemble: "ensemble".into(),
                    accuracy: e.metrics.accuracy,
                    macro_f1: e.metrics.macro_f1,
                    ece: e.metrics.ece,
                    weight: Some(total),
                    accepted: true,
                });
            }
        }
        rows
    }

    /// Counts needed for cost accounting.
    pub fn activity(&self) -> ActivitySummary {
        ActivitySummary {
            registrations: self.hospitals.iter().filter(|h| h.registration.is_accepted()).count() as u64,
            rounds: self
                .rounds
                .iter()
                .map(|r| RoundActivity {
                    round: r.round,
                    accepted_submissions: r.members.iter().filter(|m| m.outcome.is_accepted()).count() as u64,
                    ensemble_recorded: r.ensemble.is_some(),
                })
                .collect(),
        }
    }

    pub fn ensemble_metrics(&self) -> Vec<(u64, EvalMetrics)> {
        self.rounds
            .iter()
            .filter_map(|r| r.ensemble.as_ref().map(|e| (r.round, e.metrics)))
            .collect()
    }
}

/// A finished scenario: the report plus the coordinator it drove.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub coordinator: Coordinator,
}

fn owner_key(seed: u64) -> SigningKey {
    let mut label = b"chainlearn/owner/".to_vec();
    label.extend_from_slice(&seed.to_be_bytes());
    SigningKey::derive(&label)
}

fn hospital_key(seed: u64, index: usize) -> SigningKey {
    let mut label = b"chainlearn/hospital/".to_vec();
    label.extend_from_slice(&seed.to_be_bytes());
    label.extend_from_slice(&(index as u64).to_be_bytes());
    SigningKey::derive(&label)
}

/// SHA-256 over the row-major little-endian `f64` matrix.
pub(crate) fn prediction_digest(rows: &[ProbabilityVector]) -> Hash32 {
    let mut buf = Vec::with_capacity(rows.len() * rows.first().map_or(0, |r| r.len()) * 8);
    for r in rows {
        for p in r.as_slice() {
            buf.extend_from_slice(&p.to_le_bytes());
        }
    }
    sha256(&buf)
}

fn model_digest(seed: u64, index: usize, round: u64) -> Hash32 {
    let mut buf = b"chainlearn/model/".to_vec();
    for v in [seed, index as u64, round] {
        buf.extend_from_slice(&v.to_be_bytes());
    }
    sha256(&buf)
}

struct Participant {
    key: SigningKey,
    registered: bool,
    attended: u64,
    accepted: u64,
}

/// Runs a whole scenario. Deterministic in `cfg`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun, SimError> {
    cfg.validate()?;
    let seed = cfg.seed();
    let ece_cfg = cfg.ece_config();
    let k = cfg.task.class_count;

    let mut task_rng = stream_rng(seed, TASK_STREAM, 0, "labels");
    let val_labels = cfg.task.sample_labels(cfg.task.val_size, &mut task_rng);
    let test_labels = cfg.task.sample_labels(cfg.task.test_size, &mut task_rng);
    let train_labels = cfg.task.sample_labels(cfg.task.train_size, &mut task_rng);
    let mut part_rng = stream_rng(seed, TASK_STREAM, 0, "partition");
    let parts = dirichlet_partition(&train_labels, cfg.hospitals.len(), cfg.dirichlet_alpha, &mut part_rng)?;
    let shards = parts
        .iter()
        .enumerate()
        .map(|(hospital, idx)| {
            let mut class_counts = vec![0; k];
            for &i in idx {
                class_counts[train_labels[i]] += 1;
            }
            ShardSummary {
                hospital,
                size: idx.len(),
                class_counts,
            }
        })
        .collect();
    let skew = label_skew(&parts, &train_labels);

    let owner = owner_key(seed).address();
    let mut coord = Coordinator::new(
        owner,
        CoordinatorConfig {
            poc_enabled: cfg.poc_enabled,
            constants: cfg.constants,
        },
    );
    let mut events = Vec::new();
    let mut participants = Vec::with_capacity(cfg.hospitals.len());
    let mut registrations = Vec::with_capacity(cfg.hospitals.len());

    for (i, spec) in cfg.hospitals.iter().enumerate() {
        let key = hospital_key(seed, i);
        let mut report = run_benchmark(
            BenchmarkWorkload::injected(spec.throughput),
            DEFAULT_BENCHMARK_STEPS,
            DEFAULT_BENCHMARK_BATCH,
        )?;
        report.declared_capacity = spec.tier;
        let signed = SignedBenchmark::create(report, &key)?;
        let outcome = match coord.register_hospital(key.address(), &spec.name, spec.tier, &signed) {
            Ok(()) => Admission::Accepted,
            Err(e) => Admission::Rejected {
                code: e.code().into(),
                message: e.to_string(),
            },
        };
        events.push(ProtocolEvent {
            round: 0,
            hospital: i,
            action: "register".into(),
            outcome: outcome.clone(),
        });
        participants.push(Participant {
            key,
            registered: outcome.is_accepted(),
            attended: 0,
            accepted: 0,
        });
        registrations.push(outcome);
    }

    let mut rounds = Vec::with_capacity(cfg.rounds as usize);
    for _ in 0..cfg.rounds {
        let round = coord.start_new_round(owner)?;
        let mut members = Vec::new();
        let mut contributions: Vec<(usize, PredictionBatch)> = Vec::new();

        for (i, spec) in cfg.hospitals.iter().enumerate() {
            let p = &mut participants[i];
            if !p.registered {
                continue;
            }
            let attend_p = cfg.attendance.probability(spec.tier);
            if stream_rng(seed, i as u64, round, "attendance").random::<f64>() >= attend_p {
                continue;
            }
            p.attended += 1;

            let val = generate_predictions(&spec.predictor, &val_labels, k, &mut stream_rng(seed, i as u64, round, "validation"))?;
            let test = generate_predictions(&spec.predictor, &test_labels, k, &mut stream_rng(seed, i as u64, round, "test"))?;
            let scale = cfg.constants.scale;
            let confidence = to_fixed_point(mean_confidence(&val)?, scale)?;
            let ece = to_fixed_point(expected_calibration_error(&val, ece_cfg)?, scale)?;
            let update = UpdateRequest {
                model_hash: model_digest(seed, i, round),
                confidence,
                ece,
                model_type: assign_architecture(spec.tier),
            };
            let outcome = match coord.submit_update(p.key.address(), &update) {
                Ok(()) => {
                    p.accepted += 1;
                    Admission::Accepted
                }
                Err(e) => Admission::Rejected {
                    code: e.code().into(),
                    message: e.to_string(),
                },
            };
            events.push(ProtocolEvent {
                round,
                hospital: i,
                action: "submit".into(),
                outcome: outcome.clone(),
            });
            members.push(MemberRound {
                index: i,
                name: spec.name.clone(),
                outcome,
                confidence: confidence.0,
                ece: ece.0,
                weight: None,
                validation: EvalMetrics::evaluate(&val, ece_cfg)?,
                test: EvalMetrics::evaluate(&test, ece_cfg)?,
            });
            if members.last().is_some_and(|m| m.outcome.is_accepted()) {
                contributions.push((i, test));
            }
        }

        // weights are read after every submission of the round has landed
        let mut weights = Vec::with_capacity(contributions.len());
        for (i, _) in &contributions {
            let w = match cfg.policy.ablation() {
                Some(variant) => coord.weight_view(&participants[*i].key.address(), variant)?,
                None => FixedPoint(1),
            };
            weights.push(w);
            if let Some(m) = members.iter_mut().find(|m| m.index == *i) {
                m.weight = Some(w.0);
            }
        }

        let ensemble = if contributions.is_empty() {
            None
        } else {
            let mut rows = Vec::with_capacity(test_labels.len());
            for n in 0..test_labels.len() {
                let inputs: Vec<&ProbabilityVector> =
                    contributions.iter().map(|(_, b)| &b.predictions()[n]).collect();
                rows.push(weighted_aggregate(&inputs, &weights)?);
            }
            let prediction_hash = prediction_digest(&rows);
            let batch = PredictionBatch::new(k, rows, test_labels.clone())?;
            coord.record_ensemble_prediction(owner, round, prediction_hash)?;
            Some(EnsembleRound {
                participants: contributions.iter().map(|(i, _)| *i).collect(),
                participant_count: coord.ensemble(round).map_or(0, |e| e.participant_count),
                prediction_hash,
                metrics: EvalMetrics::evaluate(&batch, ece_cfg)?,
            })
        };
        rounds.push(RoundReport {
            round,
            members,
            ensemble,
        });
    }

    let hospitals = cfg
        .hospitals
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let p = &participants[i];
            let addr = p.key.address();
            let record = coord.hospital(&addr);
            let rounds_participated = record.map_or(0, |h| h.rounds_participated);
            HospitalSummary {
                index: i,
                name: spec.name.clone(),
                tier: spec.tier,
                throughput: spec.throughput,
                address: addr,
                registration: registrations[i].clone(),
                attended_rounds: p.attended,
                accepted_rounds: p.accepted,
                rounds_participated,
                final_weight: coord.calculate_weight_view(&addr).ok().map(|w| w.0),
                final_bonus: crate::policy::participation_bonus(rounds_participated, &cfg.constants).0,
            }
        })
        .collect();

    let report = ScenarioReport {
        seed,
        policy: cfg.policy,
        poc_enabled: cfg.poc_enabled,
        hospitals,
        shards,
        label_skew: skew,
        events,
        rounds,
        audit_head: coord.audit_log().head(),
        state_digest: coord.state_digest(),
    };
    Ok(ScenarioRun {
        report,
        coordinator: coord,
    })
}
