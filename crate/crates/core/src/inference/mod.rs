//! Filtering over positions.
//!
//! A [`Model`] is a validated spec together with everything derived from it
//! once: the task conditional tables, the one-interval transition matrix and
//! its `k`-th power. [`predict`] and [`posterior_update`] are the two halves
//! of the recurrence; [`CaseState`] strings them together over a history of
//! timestamped observations and direct task evidence.

mod case;
mod timeline;
mod update;

use std::sync::Arc;

use thiserror::Error;

use crate::model_spec::{validate_model, FindingCode, LookupError, ModelSpec, Severity, ValidationReport};
use crate::observation::ObservationError;
use crate::rdceg::{build_transition_matrix, matrix_power, RdcegError, StateDistribution, TransitionMatrix};
use crate::task_model::{conditional_table, TaskConditionalTable, TaskModelError};

pub use case::{CaseEvent, CaseState, EvidenceEvent, LogOddsRow, StepInput, MAX_GAP};
pub use timeline::{PosteriorTimeline, TimelinePoint};
pub use update::{condition_on_tasks, posterior_update, predict, update, TaskClamp, UpdateOutcome};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model is invalid:\n{0}")]
    Invalid(ValidationReport),
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("timestamp {got} does not follow the last event at {last}")]
    OutOfOrder { last: u64, got: u64 },
    #[error("evidence timestamp {evidence} differs from the record timestamp {record}")]
    EvidenceTimestamp { record: u64, evidence: u64 },
    #[error("gap of {gap} periods exceeds the limit of {MAX_GAP}")]
    GapTooLarge { gap: u64 },
    #[error("every state has zero likelihood for the observed intensities")]
    FlatEvidence,
    #[error("the clamped tasks have zero probability under every state")]
    ContradictoryEvidence,
    #[error("evidence event clamps no task")]
    EmptyEvidence,
    #[error("{0}")]
    Lookup(#[from] LookupError),
    #[error("{0}")]
    Observation(#[from] ObservationError),
    #[error("{0}")]
    Matrix(#[from] RdcegError),
}

/// A validated model with its derived tables and matrices.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    tables: Vec<Option<TaskConditionalTable>>,
    base: TransitionMatrix,
    step: TransitionMatrix,
    union: Vec<usize>,
    weights: Vec<f64>,
    warnings: ValidationReport,
}

impl Model {
    /// Validates `spec` and builds its tables; any error-severity finding,
    /// including a table that cannot be normalised, rejects the model.
    pub fn new(spec: ModelSpec) -> Result<Self, ModelError> {
        let mut report = validate_model(&spec);
        if !report.is_valid() {
            return Err(ModelError::Invalid(report));
        }
        let mut tables = vec![None];
        for s in spec.active_states() {
            match conditional_table(&spec, s) {
                Ok(t) => tables.push(Some(t)),
                Err(TaskModelError::NoRoot { mass_lo, mass_hi, .. }) => {
                    report.push(
                        Severity::Error,
                        FindingCode::TableNoRoot,
                        format!("p_plus.{}", spec.states[s].id),
                        format!(
                            "no exponent normalises the task table (total mass {mass_lo} to {mass_hi} over the search bracket)"
                        ),
                    );
                    tables.push(None);
                }
                Err(e) => {
                    report.push(Severity::Error, FindingCode::StateNoTask, format!("task_state_incidence.{}", spec.states[s].id), e.to_string());
                    tables.push(None);
                }
            }
        }
        if !report.is_valid() {
            return Err(ModelError::Invalid(report));
        }
        let base = build_transition_matrix(&spec);
        let step = matrix_power(&base, spec.substeps_k.max(1)).expect("power is at least one");
        Ok(Self {
            union: spec.task_union(),
            weights: spec.effective_score_weights(),
            tables,
            base,
            step,
            warnings: report,
            spec,
        })
    }

    pub fn into_shared(self) -> Arc<Self> {
        Arc::new(self)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn table(&self, state: usize) -> Option<&TaskConditionalTable> {
        self.tables.get(state).and_then(Option::as_ref)
    }

    pub fn tables(&self) -> impl Iterator<Item = &TaskConditionalTable> {
        self.tables.iter().flatten()
    }

    /// One base interval.
    pub fn base_matrix(&self) -> &TransitionMatrix {
        &self.base
    }

    /// One observation interval (`substeps_k` base intervals).
    pub fn step_matrix(&self) -> &TransitionMatrix {
        &self.step
    }

    pub fn task_union(&self) -> &[usize] {
        &self.union
    }

    pub fn score_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Non-fatal findings from validation.
    pub fn warnings(&self) -> &ValidationReport {
        &self.warnings
    }

    pub fn prior(&self) -> StateDistribution {
        StateDistribution::new_unchecked(self.spec.priors.clone())
    }

    pub fn state_ids(&self) -> Vec<String> {
        self.spec.states.iter().map(|s| s.id.clone()).collect()
    }

    pub fn score(&self, dist: &StateDistribution) -> f64 {
        position_score(dist.probs(), &self.weights)
    }
}

/// Weighted escalation rank `Σ s_i p_i`.
pub fn position_score(probs: &[f64], weights: &[f64]) -> f64 {
    probs.iter().zip(weights).map(|(p, w)| p * w).sum()
}
