//! Batch runs over scenarios: sensitivity sweeps, long-run behaviour and
//! comparisons between structural variants of a model.

mod compare;
mod longrun;
mod scenario;
mod sweep;

use thiserror::Error;

use crate::inference::{EngineError, ModelError};
use crate::model_spec::{LookupError, TransformError};
use crate::observation::ObservationError;

pub use compare::{structure_robustness, DifferenceSeries};
pub use longrun::{longrun_report, LongrunReport, LongrunVariant, NeutralRateSweep, SweepRow};
pub use scenario::{run_scenario, Scenario};
pub use sweep::{
    apply_setting, checkpoint_csv, prior_sensitivity, run_sweep, zeta_sensitivity, SweepPoint, SweepSpec, SweepTarget,
    DEFAULT_CHECKPOINTS,
};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Observation(#[from] ObservationError),
    #[error(transparent)]
    Lookup(#[from] LookupError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("invalid sweep setting: {0}")]
    InvalidSetting(String),
    #[error("scenario timestamps must strictly increase (t = {0} repeats or goes back)")]
    ScenarioOrder(u64),
    #[error("state `{0}` has no counterpart in the other model")]
    UnmatchedState(String),
    #[error("the two models declare different observables")]
    ObservablesDiffer,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}
