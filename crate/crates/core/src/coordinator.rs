//! Round coordination state machine.
//!
//! Mirrors an on-chain coordinator contract: hospitals register with a signed
//! capacity benchmark, the owner opens rounds, registered hospitals submit
//! one metadata update per round, weights are read through a pure view, and
//! the owner records an opaque ensemble digest per round.
//!
//! Every accepted mutation becomes a [`CoordinatorEvent`] appended to a
//! hash-chained [`AuditLog`]. Rejected operations do not touch the state or
//! the log. Replaying the log through [`Coordinator::replay`] rebuilds the
//! exact state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{AuditError, AuditLog};
use crate::capacity::{assign_architecture, classify_capacity, ArchitectureId, CapacityClass};
use crate::identity::{hash_benchmark, recover_signer, sha256, Hash32, ParticipantAddress, SignedBenchmark};
use crate::policy::{ablated_weight, AblationVariant, FixedPoint, PolicyConstants, PolicyError, Reliability};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoordinatorError {
    #[error("caller is not the owner")]
    NotOwner,
    #[error("address {0} is already registered")]
    AlreadyRegistered(ParticipantAddress),
    #[error("address {0} is not registered")]
    NotRegistered(ParticipantAddress),
    #[error("benchmark hash does not match the packed report")]
    HashMismatch,
    #[error("benchmark signature does not recover to the caller")]
    SignatureMismatch,
    #[error("declared capacity {declared} does not match benchmarked capacity {measured}")]
    CapacityMismatch {
        declared: CapacityClass,
        measured: CapacityClass,
    },
    #[error("no round is open")]
    NoOpenRound,
    #[error("{0} already submitted in round {1}")]
    DuplicateSubmission(ParticipantAddress, u64),
    #[error("model type {got} does not match assigned architecture {expected}")]
    ModelTypeMismatch { expected: ArchitectureId, got: ArchitectureId },
    #[error("invalid reliability: {0}")]
    InvalidReliability(PolicyError),
    #[error("round {0} has no submissions")]
    NoSubmissions(u64),
    #[error("ensemble for round {0} already recorded")]
    AlreadyRecorded(u64),
}

impl CoordinatorError {
    /// Stable short name used in reports.
    pub fn code(&self) -> &'static str {
        match self {
            Self::NotOwner => "NotOwner",
            Self::AlreadyRegistered(_) => "AlreadyRegistered",
            Self::NotRegistered(_) => "NotRegistered",
            Self::HashMismatch => "HashMismatch",
            Self::SignatureMismatch => "SignatureMismatch",
            Self::CapacityMismatch { .. } => "CapacityMismatch",
            Self::NoOpenRound => "NoOpenRound",
            Self::DuplicateSubmission(..) => "DuplicateSubmission",
            Self::ModelTypeMismatch { .. } => "ModelTypeMismatch",
            Self::InvalidReliability(_) => "InvalidReliability",
            Self::NoSubmissions(_) => "NoSubmissions",
            Self::AlreadyRecorded(_) => "AlreadyRecorded",
        }
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Chain(#[from] AuditError),
    #[error("record {seq}: {reason}")]
    BadEvent { seq: u64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HospitalRecord {
    pub addr: ParticipantAddress,
    pub name: String,
    pub capacity: CapacityClass,
    pub is_registered: bool,
    pub poc_hash: Hash32,
    pub confidence: FixedPoint,
    pub ece: FixedPoint,
    pub rounds_participated: u64,
}

impl HospitalRecord {
    pub fn reliability(&self) -> Reliability {
        Reliability {
            confidence: self.confidence,
            ece: self.ece,
            rounds_participated: self.rounds_participated,
        }
    }
}

/// What a hospital sends for a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateRequest {
    pub model_hash: Hash32,
    pub confidence: FixedPoint,
    pub ece: FixedPoint,
    pub model_type: ArchitectureId,
}

/// An accepted update as stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSubmission {
    pub model_hash: Hash32,
    pub confidence: FixedPoint,
    pub ece: FixedPoint,
    pub timestamp: u64,
    pub model_type: ArchitectureId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub prediction_hash: Hash32,
    pub participant_count: u64,
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinatorConfig {
    /// Cross-check the declared tier against the benchmarked throughput at registration.
    pub poc_enabled: bool,
    pub constants: PolicyConstants,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        Self {
            poc_enabled: true,
            constants: PolicyConstants::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinatorState {
    pub owner: ParticipantAddress,
    pub config: CoordinatorConfig,
    pub current_round: u64,
    /// Logical clock; advances by one per accepted mutation.
    pub clock: u64,
    pub hospitals: BTreeMap<ParticipantAddress, HospitalRecord>,
    pub submissions: BTreeMap<u64, BTreeMap<ParticipantAddress, RoundSubmission>>,
    pub round_submitters: BTreeMap<u64, Vec<ParticipantAddress>>,
    pub ensembles: BTreeMap<u64, EnsembleRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event_type", content = "payload", rename_all = "snake_case")]
pub enum CoordinatorEvent {
    Deployed {
        owner: ParticipantAddress,
        config: CoordinatorConfig,
    },
    HospitalRegistered {
        addr: ParticipantAddress,
        name: String,
        capacity: CapacityClass,
        poc_hash: Hash32,
        timestamp: u64,
    },
    RoundStarted {
        round: u64,
        timestamp: u64,
    },
    UpdateSubmitted {
        round: u64,
        addr: ParticipantAddress,
        submission: RoundSubmission,
    },
    EnsembleRecorded {
        round: u64,
        record: EnsembleRecord,
    },
}

impl CoordinatorEvent {
    fn split(&self) -> (String, serde_json::Value) {
        let mut v = serde_json::to_value(self).expect("event serializes");
        let obj = v.as_object_mut().expect("adjacently tagged");
        let ty = obj
            .remove("event_type")
            .and_then(|t| t.as_str().map(str::to_owned))
            .expect("tag present");
        let payload = obj.remove("payload").expect("content present");
        (ty, payload)
    }

    fn join(event_type: &str, payload: &serde_json::Value) -> Result<Self, serde_json::Error> {
        serde_json::from_value(serde_json::json!({
            "event_type": event_type,
            "payload": payload,
        }))
    }
}

impl CoordinatorState {
    fn genesis(owner: ParticipantAddress, config: CoordinatorConfig) -> Self {
        Self {
            owner,
            config,
            current_round: 0,
            clock: 0,
            hospitals: BTreeMap::new(),
            submissions: BTreeMap::new(),
            round_submitters: BTreeMap::new(),
            ensembles: BTreeMap::new(),
        }
    }

    /// Applies an already-validated event. Shared by live operations and replay.
    fn apply(&mut self, event: &CoordinatorEvent) {
        match event {
            CoordinatorEvent::Deployed { .. } => {}
            CoordinatorEvent::HospitalRegistered {
                addr,
                name,
                capacity,
                poc_hash,
                timestamp,
            } => {
                self.clock = *timestamp;
                self.hospitals.insert(
                    *addr,
                    HospitalRecord {
                        addr: *addr,
                        name: name.clone(),
                        capacity: *capacity,
                        is_registered: true,
                        poc_hash: *poc_hash,
                        confidence: FixedPoint::ZERO,
                        ece: FixedPoint::ZERO,
                        rounds_participated: 0,
                    },
                );
            }
            CoordinatorEvent::RoundStarted { round, timestamp } => {
                self.clock = *timestamp;
                self.current_round = *round;
                self.round_submitters.insert(*round, Vec::new());
            }
            CoordinatorEvent::UpdateSubmitted { round, addr, submission } => {
                self.clock = submission.timestamp;
                self.submissions.entry(*round).or_default().insert(*addr, *submission);
                self.round_submitters.entry(*round).or_default().push(*addr);
                let h = self.hospitals.get_mut(addr).expect("validated: registered");
                h.confidence = submission.confidence;
                h.ece = submission.ece;
                h.rounds_participated += 1;
            }
            CoordinatorEvent::EnsembleRecorded { round, record } => {
                self.clock = record.timestamp;
                self.ensembles.insert(*round, *record);
            }
        }
    }
}

/// The coordinator: state plus its audit trail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coordinator {
    state: CoordinatorState,
    audit: AuditLog,
}

impl Coordinator {
    pub fn new(owner: ParticipantAddress, config: CoordinatorConfig) -> Self {
        let mut c = Self {
            state: CoordinatorState::genesis(owner, config),
            audit: AuditLog::new(),
        };
        c.commit(CoordinatorEvent::Deployed { owner, config });
        c
    }

    fn commit(&mut self, event: CoordinatorEvent) {
        self.state.apply(&event);
        let (ty, payload) = event.split();
        self.audit.append(&ty, payload);
    }

    fn tick(&self) -> u64 {
        self.state.clock + 1
    }

    pub fn state(&self) -> &CoordinatorState {
        &self.state
    }

    pub fn audit_log(&self) -> &AuditLog {
        &self.audit
    }

    pub fn owner(&self) -> ParticipantAddress {
        self.state.owner
    }

    pub fn current_round(&self) -> u64 {
        self.state.current_round
    }

    pub fn constants(&self) -> &PolicyConstants {
        &self.state.config.constants
    }

    pub fn hospital(&self, addr: &ParticipantAddress) -> Option<&HospitalRecord> {
        self.state.hospitals.get(addr)
    }

    pub fn round_submitters(&self, round: u64) -> &[ParticipantAddress] {
        self.state.round_submitters.get(&round).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn submission(&self, round: u64, addr: &ParticipantAddress) -> Option<&RoundSubmission> {
        self.state.submissions.get(&round).and_then(|m| m.get(addr))
    }

    pub fn ensemble(&self, round: u64) -> Option<&EnsembleRecord> {
        self.state.ensembles.get(&round)
    }

    /// SHA-256 over the canonical state serialization and the audit head.
    pub fn state_digest(&self) -> Hash32 {
        let mut buf = serde_json::to_vec(&self.state).expect("state serializes");
        buf.extend_from_slice(&self.audit.head().0);
        sha256(&buf)
    }

    pub fn register_hospital(
        &mut self,
        caller: ParticipantAddress,
        name: &str,
        declared_capacity: CapacityClass,
        signed: &SignedBenchmark,
    ) -> Result<(), CoordinatorError> {
        if self.state.hospitals.get(&caller).is_some_and(|h| h.is_registered) {
            return Err(CoordinatorError::AlreadyRegistered(caller));
        }
        match hash_benchmark(&signed.report) {
            Ok(h) if h == signed.benchmark_hash => {}
            _ => return Err(CoordinatorError::HashMismatch),
        }
        match recover_signer(&signed.benchmark_hash, &signed.signature) {
            Ok(addr) if addr == caller => {}
            _ => return Err(CoordinatorError::SignatureMismatch),
        }
        // the tier passed to the call must be the one that was signed
        if signed.report.declared_capacity != declared_capacity {
            return Err(CoordinatorError::CapacityMismatch {
                declared: declared_capacity,
                measured: signed.report.declared_capacity,
            });
        }
        if self.state.config.poc_enabled {
            let measured = classify_capacity(signed.report.throughput);
            if measured != declared_capacity {
                return Err(CoordinatorError::CapacityMismatch {
                    declared: declared_capacity,
                    measured,
                });
            }
        }
        let timestamp = self.tick();
        self.commit(CoordinatorEvent::HospitalRegistered {
            addr: caller,
            name: name.to_owned(),
            capacity: declared_capacity,
            poc_hash: signed.benchmark_hash,
            timestamp,
        });
        Ok(())
    }

    pub fn start_new_round(&mut self, caller: ParticipantAddress) -> Result<u64, CoordinatorError> {
        if caller != self.state.owner {
            return Err(CoordinatorError::NotOwner);
        }
        let round = self.state.current_round + 1;
        let timestamp = self.tick();
        self.commit(CoordinatorEvent::RoundStarted { round, timestamp });
        Ok(round)
    }

    pub fn submit_update(
        &mut self,
        caller: ParticipantAddress,
        update: &UpdateRequest,
    ) -> Result<(), CoordinatorError> {
        let round = self.state.current_round;
        if round == 0 {
            return Err(CoordinatorError::NoOpenRound);
        }
        let hospital = match self.state.hospitals.get(&caller) {
            Some(h) if h.is_registered => h,
            _ => return Err(CoordinatorError::NotRegistered(caller)),
        };
        if self.submission(round, &caller).is_some() {
            return Err(CoordinatorError::DuplicateSubmission(caller, round));
        }
        Reliability {
            confidence: update.confidence,
            ece: update.ece,
            rounds_participated: 0,
        }
        .check(&self.state.config.constants)
        .map_err(CoordinatorError::InvalidReliability)?;
        let expected = assign_architecture(hospital.capacity);
        if update.model_type != expected {
            return Err(CoordinatorError::ModelTypeMismatch {
                expected,
                got: update.model_type,
            });
        }
        let submission = RoundSubmission {
            model_hash: update.model_hash,
            confidence: update.confidence,
            ece: update.ece,
            timestamp: self.tick(),
            model_type: update.model_type,
        };
        self.commit(CoordinatorEvent::UpdateSubmitted {
            round,
            addr: caller,
            submission,
        });
        Ok(())
    }

    /// Read-only weight of a registered hospital under the full policy.
    pub fn calculate_weight_view(&self, addr: &ParticipantAddress) -> Result<FixedPoint, CoordinatorError> {
        self.weight_view(addr, AblationVariant::Full)
    }

    pub fn weight_view(
        &self,
        addr: &ParticipantAddress,
        variant: AblationVariant,
    ) -> Result<FixedPoint, CoordinatorError> {
        let h = match self.state.hospitals.get(addr) {
            Some(h) if h.is_registered => h,
            _ => return Err(CoordinatorError::NotRegistered(*addr)),
        };
        ablated_weight(variant, h.capacity, &h.reliability(), &self.state.config.constants)
            .map_err(CoordinatorError::InvalidReliability)
    }

    pub fn record_ensemble_prediction(
        &mut self,
        caller: ParticipantAddress,
        round: u64,
        prediction_hash: Hash32,
    ) -> Result<(), CoordinatorError> {
        if caller != self.state.owner {
            return Err(CoordinatorError::NotOwner);
        }
        if self.state.ensembles.contains_key(&round) {
            return Err(CoordinatorError::AlreadyRecorded(round));
        }
        let count = self.round_submitters(round).len() as u64;
        if count == 0 {
            return Err(CoordinatorError::NoSubmissions(round));
        }
        let record = EnsembleRecord {
            prediction_hash,
            participant_count: count,
            timestamp: self.tick(),
        };
        self.commit(CoordinatorEvent::EnsembleRecorded { round, record });
        Ok(())
    }

    pub fn verify_audit_chain(&self) -> bool {
        self.audit.verify().is_ok()
    }

    /// Rebuilds a coordinator from its audit log.
    pub fn replay(log: &AuditLog) -> Result<Self, ReplayError> {
        log.verify()?;
        let mut records = log.records().iter();
        let Some(first) = records.next() else {
            return Err(ReplayError::BadEvent {
                seq: 0,
                reason: "empty log has no deployment event".into(),
            });
        };
        let bad = |seq: u64, reason: String| ReplayError::BadEvent { seq, reason };
        let genesis = CoordinatorEvent::join(&first.event_type, &first.payload).map_err(|e| bad(0, e.to_string()))?;
        let CoordinatorEvent::Deployed { owner, config } = genesis else {
            return Err(bad(0, "first event must be deployed".into()));
        };
        let mut coordinator = Coordinator::new(owner, config);
        for r in records {
            let event = CoordinatorEvent::join(&r.event_type, &r.payload).map_err(|e| bad(r.seq, e.to_string()))?;
            if matches!(event, CoordinatorEvent::Deployed { .. }) {
                return Err(bad(r.seq, "duplicate deployment event".into()));
            }
            coordinator.commit(event);
        }
        if coordinator.audit != *log {
            return Err(bad(log.len() as u64, "replayed log diverges from input".into()));
        }
        Ok(coordinator)
    }
}
