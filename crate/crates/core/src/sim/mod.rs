//! Seeded multi-round federation scenarios.
//!
//! Synthetic predictors with controllable accuracy and calibration stand in
//! for locally trained models. A scenario registers hospitals through the
//! full signed-benchmark pipeline, then for each round samples attendance,
//! derives `(C, E)` from validation predictions, submits to the coordinator,
//! reads back weights and aggregates test predictions.

mod partition;
mod predictor;
pub mod presets;
mod rng;
mod scenario;
mod spoof;

use thiserror::Error;

pub use partition::{dirichlet_partition, label_skew, largest_remainder, sample_dirichlet};
pub use predictor::{generate_predictions, SyntheticPredictor};
pub use rng::{stream_rng, stream_seed, TASK_STREAM};
pub use scenario::{
    run_scenario, Admission, AttendancePattern, EnsembleRound, HospitalSpec, HospitalSummary, MemberRound,
    MetricsRow, ProtocolEvent, RoundReport, ScenarioConfig, ScenarioReport, ScenarioRun, ShardSummary,
    SyntheticTask, WeightingMode,
};
pub use spoof::{run_spoofing_scenario, ArmReport, AttackerSpec, SpoofArm, SpoofConfig, SpoofReport};

use crate::coordinator::CoordinatorError;
use crate::identity::IdentityError;
use crate::metrics::MetricsError;
use crate::capacity::CapacityError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("label list is empty")]
    EmptyLabels,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
}

pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> SimError {
    SimError::InvalidConfig {
        field: field.into(),
        reason: reason.into(),
    }
}
