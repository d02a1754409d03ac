//! Capacity-aware federated ensemble coordination.
//!
//! Hospitals benchmark their compute, sign the result and register with a
//! coordinator. The coordinator runs rounds, accepts one metadata-only update
//! per hospital per round, and exposes an integer-only weight for each
//! participant. Predictions are combined off-chain as a weighted average in
//! probability space, and the coordinator keeps a digest of each round's
//! ensemble output in a hash-chained audit log.
//!
//! Modules:
//!
//! - [`policy`]: fixed-point weight function and participation bonus
//! - [`identity`]: benchmark packing, hashing and recoverable signatures
//! - [`capacity`]: throughput benchmark, tiering and architecture assignment
//! - [`coordinator`] and [`audit`]: the round state machine and its log
//! - [`metrics`]: probability aggregation, accuracy, macro-F1, ECE
//! - [`sim`]: seeded multi-round scenarios, ablations and capacity spoofing
//! - [`cost`]: payload and gas accounting

pub mod audit;
pub mod capacity;
pub mod coordinator;
pub mod cost;
pub mod identity;
pub mod metrics;
pub mod policy;
pub mod sim;

pub use audit::{AuditLog, AuditRecord};
pub use capacity::{
    assign_architecture, classify_capacity, run_benchmark, ArchitectureFamily, ArchitectureId, BenchmarkWorkload,
    CapacityClass,
};
pub use coordinator::{
    Coordinator, CoordinatorConfig, CoordinatorError, CoordinatorState, EnsembleRecord, HospitalRecord,
    RoundSubmission, UpdateRequest,
};
pub use identity::{
    hash_benchmark, pack_benchmark, recover_signer, sign_benchmark, BenchmarkReport, Hash32, ParticipantAddress,
    Signature65, SignedBenchmark, SigningKey,
};
pub use metrics::{
    accuracy, expected_calibration_error, macro_f1, mean_confidence, to_fixed_point, weighted_aggregate, EceConfig,
    PredictionBatch, ProbabilityVector,
};
pub use policy::{
    ablated_weight, calculate_weight, capacity_multiplier, participation_bonus, AblationVariant, FixedPoint,
    PolicyConstants, Reliability,
};
