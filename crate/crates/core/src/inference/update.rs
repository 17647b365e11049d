use serde::{Deserialize, Serialize};

use super::{EngineError, Model};
use crate::model_spec::{LikelihoodMode, NEUTRAL};
use crate::observation::{log_sum_exp, IntensityVector, TaskLikelihoods};
use crate::rdceg::{RdcegError, StateDistribution};
use crate::task_model::{neutral_joint_mask, TaskConditionalTable};

/// Direct knowledge of task states, indexed by task; `None` is unclamped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskClamp(pub Vec<Option<bool>>);

impl TaskClamp {
    pub fn none(n_tasks: usize) -> Self {
        Self(vec![None; n_tasks])
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(Option::is_none)
    }

    pub fn get(&self, task: usize) -> Option<bool> {
        self.0[task]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub posterior: StateDistribution,
    /// `λ_i`: log ratio of the task-marginalised likelihood under state `i`
    /// to that under neutral, over state `i`'s task set. Zero for neutral.
    pub log_lr: Vec<f64>,
    /// Log probability of the intensities (and clamped tasks) under the
    /// predicted distribution, taking neutral as naive Bayes over the union
    /// of all task sets.
    pub log_evidence: f64,
}

/// `dist · M^k` for the model's observation interval.
pub fn predict(model: &Model, dist: &StateDistribution) -> Result<StateDistribution, RdcegError> {
    dist.propagate(model.step_matrix())
}

/// Log likelihood of the unclamped tasks' intensities for one configuration
/// of a state's task set.
fn config_log_lik(
    mode: LikelihoodMode,
    table: &TaskConditionalTable,
    mask: u32,
    lik: &TaskLikelihoods,
    clamp: &TaskClamp,
) -> f64 {
    let terms = table
        .members
        .iter()
        .enumerate()
        .filter(|(_, (t, _))| clamp.get(*t).is_none())
        .map(|(j, &(t, _))| lik.log(t, mask >> j & 1 == 1));
    match mode {
        LikelihoodMode::Product => terms.sum(),
        LikelihoodMode::Average => {
            let terms: Vec<f64> = terms.collect();
            if terms.is_empty() {
                0.0
            } else {
                log_sum_exp(terms.iter().copied()) - (terms.len() as f64).ln()
            }
        }
    }
}

fn consistent(table: &TaskConditionalTable, mask: u32, clamp: &TaskClamp) -> bool {
    table.members.iter().enumerate().all(|(j, &(t, _))| match clamp.get(t) {
        Some(v) => (mask >> j & 1 == 1) == v,
        None => true,
    })
}

/// `λ_i` for one active state.
fn state_log_lr(model: &Model, table: &TaskConditionalTable, lik: &TaskLikelihoods, clamp: &TaskClamp) -> f64 {
    let spec = model.spec();
    let mode = spec.likelihood_mode;
    let mut under_state = Vec::with_capacity(table.n_configs());
    let mut under_neutral = Vec::with_capacity(table.n_configs());
    for mask in 0..table.n_configs() as u32 {
        if !consistent(table, mask, clamp) {
            continue;
        }
        let l = config_log_lik(mode, table, mask, lik, clamp);
        under_state.push(table.prob(mask).ln() + l);
        under_neutral.push(neutral_joint_mask(&spec.neutral_task_probs, &table.members, mask).ln() + l);
    }
    log_sum_exp(under_state) - log_sum_exp(under_neutral)
}

/// Log likelihood under neutral over the union of task sets.
fn neutral_log_lik(model: &Model, lik: &TaskLikelihoods, clamp: &TaskClamp) -> f64 {
    let spec = model.spec();
    let mut clamped = 0.0;
    let mut free = Vec::new();
    for &t in model.task_union() {
        let p = spec.neutral_task_probs[t];
        match clamp.get(t) {
            Some(true) => clamped += p.ln(),
            Some(false) => clamped += (-p).ln_1p(),
            None => free.push(log_sum_exp([p.ln() + lik.log_on[t], (-p).ln_1p() + lik.log_off[t]])),
        }
    }
    let free = match spec.likelihood_mode {
        LikelihoodMode::Product => free.iter().sum(),
        LikelihoodMode::Average if free.is_empty() => 0.0,
        LikelihoodMode::Average => log_sum_exp(free.iter().copied()) - (free.len() as f64).ln(),
    };
    clamped + free
}

/// Bayes update of `prior` given per-task likelihoods and clamped tasks.
///
/// Each active state's task table is summed over the configurations
/// consistent with `clamp`; clamped tasks contribute their table factors
/// exactly and their intensities are ignored. All sums are taken in log
/// space.
pub fn posterior_update(
    model: &Model,
    prior: &StateDistribution,
    lik: &TaskLikelihoods,
    clamp: &TaskClamp,
) -> Result<UpdateOutcome, EngineError> {
    let spec = model.spec();
    if prior.len() != spec.n_states() {
        return Err(RdcegError::DimensionMismatch {
            expected: spec.n_states(),
            got: prior.len(),
        }
        .into());
    }
    let mut log_lr = vec![0.0; spec.n_states()];
    for s in spec.active_states() {
        let table = model.table(s).expect("active states have tables");
        log_lr[s] = state_log_lr(model, table, lik, clamp);
    }
    let log_w: Vec<f64> = prior
        .probs()
        .iter()
        .zip(&log_lr)
        .map(|(p, l)| if *p == 0.0 { f64::NEG_INFINITY } else { p.ln() + l })
        .collect();
    let total = log_sum_exp(log_w.iter().copied());
    if !total.is_finite() || log_w.iter().any(|w| w.is_nan()) {
        return Err(if clamp.is_empty() {
            EngineError::FlatEvidence
        } else {
            EngineError::ContradictoryEvidence
        });
    }
    let posterior = log_w.iter().map(|w| (w - total).exp()).collect();
    Ok(UpdateOutcome {
        posterior: StateDistribution::new_unchecked(posterior),
        log_evidence: neutral_log_lik(model, lik, clamp) + total,
        log_lr: {
            log_lr[NEUTRAL] = 0.0;
            log_lr
        },
    })
}

/// Update from filtered intensities alone.
pub fn update(model: &Model, dist: &StateDistribution, z: &IntensityVector) -> Result<StateDistribution, EngineError> {
    let lik = TaskLikelihoods::from_intensities(z, model.spec());
    posterior_update(model, dist, &lik, &TaskClamp::none(model.spec().n_tasks())).map(|o| o.posterior)
}

/// Update with clamped tasks and, optionally, intensities for the rest.
pub fn condition_on_tasks(
    model: &Model,
    dist: &StateDistribution,
    clamp: &TaskClamp,
    z: Option<&IntensityVector>,
) -> Result<StateDistribution, EngineError> {
    if clamp.is_empty() {
        return Err(EngineError::EmptyEvidence);
    }
    let spec = model.spec();
    let lik = match z {
        Some(z) => TaskLikelihoods::from_intensities(z, spec),
        None => TaskLikelihoods::flat(spec.n_tasks()),
    };
    posterior_update(model, dist, &lik, clamp).map(|o| o.posterior)
}
