//! Bayesian tracking of an individual's position along a staged escalation
//! process.
//!
//! The latent process is a semi-Markov chain over positions with an absorbing
//! neutral state ([`rdceg`]). Each active position is linked to a small set of
//! binary tasks whose joint probabilities are interpolated from two elicited
//! numbers ([`task_model`]). Routine observations are normalised and filtered
//! into per-task intensities scored by asymmetric logistic curves
//! ([`observation`]). The [`inference`] module runs the predict/update
//! recurrences, conditions on direct task evidence and keeps an immutable case
//! history; [`diagnostics`] drives scenarios, sensitivity sweeps and long-run
//! analyses over it.

pub mod diagnostics;
pub mod fixtures;
pub mod inference;
pub mod model_spec;
pub mod observation;
pub mod rdceg;
pub mod serde_float;
pub mod task_model;

pub use inference::{CaseState, EvidenceEvent, Model, PosteriorTimeline};
pub use model_spec::{parse_model, validate_model, ModelSpec, ValidationReport};
pub use rdceg::{StateDistribution, TransitionMatrix};
