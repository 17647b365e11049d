//! Declarative escalation model description.
//!
//! A [`ModelSpec`] is the resolved, index-based form of a model document:
//! states (index 0 is always the neutral state), edges of the jump chain,
//! priors, the task layer with its incidence on states and observables,
//! likelihood parameters and holding probabilities. Documents are JSON
//! (see [`document`]); [`validate_model`] checks the numeric invariants and
//! [`coarsen`] / [`refine`] derive structural variants for robustness
//! studies.

mod document;
mod transform;
mod validate;

pub use document::{parse_model, ParseError, FORMAT_VERSION, EdgeDoc, IncidenceDoc, ModelDocument, ObservableDoc, StateDoc, TaskDoc};
pub use transform::{coarsen, refine, ChildSpec, RefineSpec, TransformError};
pub use validate::{validate_model, Finding, FindingCode, Severity, ValidationReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of the neutral (absorbing) state.
pub const NEUTRAL: usize = 0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDef {
    pub id: String,
    pub name: String,
}

impl StateDef {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
        }
    }
}

/// Jump-chain edge: probability of moving `from -> to` given that a
/// transition out of `from` occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDef {
    pub id: String,
    pub name: String,
    /// Task is only ever learned through direct evidence, never through
    /// routine observables.
    pub evidence_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableDef {
    pub id: String,
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// Tasks relevant to one state, in task declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StateTasks {
    pub members: Vec<(usize, Polarity)>,
}

impl StateTasks {
    pub fn task_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().map(|&(t, _)| t)
    }

    pub fn positive(&self) -> impl Iterator<Item = usize> + '_ {
        self.members
            .iter()
            .filter(|(_, p)| *p == Polarity::Positive)
            .map(|&(t, _)| t)
    }

    pub fn negative(&self) -> impl Iterator<Item = usize> + '_ {
        self.members
            .iter()
            .filter(|(_, p)| *p == Polarity::Negative)
            .map(|&(t, _)| t)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, task: usize) -> bool {
        self.members.iter().any(|&(t, _)| t == task)
    }
}

/// Shifted asymmetric logistic parameters for one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticParams {
    pub x0: f64,
    pub k0: f64,
    pub k1: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            x0: 1.0,
            k0: 1.0,
            k1: 5.0,
        }
    }
}

/// How per-task logistic scores combine into a task-set likelihood.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LikelihoodMode {
    /// Arithmetic mean of the per-task scores.
    #[default]
    Average,
    /// Product of the per-task scores (intensities independent given tasks).
    Product,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub states: Vec<StateDef>,
    pub edges: Vec<Edge>,
    pub priors: Vec<f64>,
    pub tasks: Vec<TaskDef>,
    /// Indexed by state; the neutral entry should be empty.
    pub incidence: Vec<StateTasks>,
    /// Indexed by task.
    pub neutral_task_probs: Vec<f64>,
    /// Indexed by state; the neutral entry is unused and kept at 0.
    pub p_plus: Vec<f64>,
    pub observables: Vec<ObservableDef>,
    /// Indexed by observable: the tasks each observable informs.
    pub observable_tasks: Vec<Vec<usize>>,
    /// Indexed by task.
    pub likelihood_params: Vec<LogisticParams>,
    pub likelihood_mode: LikelihoodMode,
    /// Per-period holding parameter, indexed by state; neutral is 0.
    pub holding: Vec<f64>,
    pub substeps_k: u32,
    pub score_weights: Option<Vec<f64>>,
    pub notes: Option<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum LookupError {
    #[error("unknown state `{0}`")]
    State(String),
    #[error("unknown task `{0}`")]
    Task(String),
    #[error("unknown observable `{0}`")]
    Observable(String),
}

impl ModelSpec {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn active_states(&self) -> std::ops::Range<usize> {
        1..self.states.len()
    }

    pub fn state_index(&self, id: &str) -> Result<usize, LookupError> {
        self.states
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| LookupError::State(id.to_string()))
    }

    pub fn task_index(&self, id: &str) -> Result<usize, LookupError> {
        self.tasks
            .iter()
            .position(|t| t.id == id)
            .ok_or_else(|| LookupError::Task(id.to_string()))
    }

    pub fn observable_index(&self, id: &str) -> Result<usize, LookupError> {
        self.observables
            .iter()
            .position(|o| o.id == id)
            .ok_or_else(|| LookupError::Observable(id.to_string()))
    }

    /// Explicit edge probability `from -> to`, 0 when no edge exists.
    pub fn edge_prob(&self, from: usize, to: usize) -> f64 {
        self.edges
            .iter()
            .filter(|e| e.from == from && e.to == to)
            .map(|e| e.prob)
            .sum()
    }

    /// Jump-chain probability of dropping into the neutral state from
    /// `state`: whatever the explicit edges leave over.
    pub fn implied_neutral_prob(&self, state: usize) -> f64 {
        if state == NEUTRAL {
            return 0.0;
        }
        let explicit: f64 = self
            .edges
            .iter()
            .filter(|e| e.from == state)
            .map(|e| e.prob)
            .sum();
        1.0 - explicit
    }

    /// Observables informing `task`, in declaration order.
    pub fn observables_for_task(&self, task: usize) -> Vec<usize> {
        self.observable_tasks
            .iter()
            .enumerate()
            .filter(|(_, ts)| ts.contains(&task))
            .map(|(o, _)| o)
            .collect()
    }

    /// Tasks relevant to at least one active state, ascending.
    pub fn task_union(&self) -> Vec<usize> {
        let mut seen = vec![false; self.tasks.len()];
        for st in self.incidence.iter().skip(1) {
            for t in st.task_ids() {
                seen[t] = true;
            }
        }
        seen.iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(t, _)| t)
            .collect()
    }

    /// Score weights, defaulting to escalation rank in declaration order.
    pub fn effective_score_weights(&self) -> Vec<f64> {
        match &self.score_weights {
            Some(w) => w.clone(),
            None => (0..self.states.len()).map(|i| i as f64).collect(),
        }
    }

    pub fn to_document(&self) -> ModelDocument {
        document::to_document(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model document serializes")
    }
}
