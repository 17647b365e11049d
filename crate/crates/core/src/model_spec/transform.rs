//! Structural variants of a model: merging states into coarser positions and
//! splitting a position into finer ones.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{
    validate_model, Edge, ModelSpec, Polarity, StateDef, StateTasks, ValidationReport, NEUTRAL,
};

const FRACTION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("merge map has no entry for active state `{0}`")]
    NotTotal(String),
    #[error("state `{0}` cannot be merged with the neutral state")]
    NeutralMerge(String),
    #[error("task `{task}` is a positive indicator for one merged state and a negative indicator for another")]
    PolarityConflict { task: String },
    #[error("the neutral state cannot be split")]
    SplitNeutral,
    #[error("child prior fractions sum to {0}, expected 1")]
    FractionSum(f64),
    #[error("child `{0}` has a negative prior fraction")]
    NegativeFraction(String),
    #[error("task `{0}` of the split state is not assigned to any child")]
    OrphanedTask(String),
    #[error("child `{child}` lists task `{task}` which the split state does not carry")]
    ForeignTask { child: String, task: String },
    #[error("state id `{0}` is already in use")]
    DuplicateId(String),
    #[error("refined model fails validation:\n{0}")]
    Invalid(ValidationReport),
}

/// Weighted mean of `values` under non-negative `weights`; returns the common
/// value unchanged when all values agree, and the plain mean when the weights
/// carry no mass.
fn weighted_mean(weights: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), values.len());
    if values.windows(2).all(|w| w[0].to_bits() == w[1].to_bits()) {
        return values[0];
    }
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        weights.iter().zip(values).map(|(w, v)| w * v).sum::<f64>() / total
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Merges states according to `merge_map` (old active state id -> new state
/// id). States mapped to the same id become one position: priors add, task
/// sets unite, and edge, holding, p_plus and score parameters are averaged
/// with prior weights. Edges internal to a merged group are dropped and the
/// remaining row is rescaled so explicit and implied-neutral mass sum to one.
pub fn coarsen(spec: &ModelSpec, merge_map: &BTreeMap<String, String>) -> Result<ModelSpec, TransformError> {
    let neutral_id = spec.states[NEUTRAL].id.as_str();
    for key in merge_map.keys() {
        spec.state_index(key)
            .map_err(|_| TransformError::UnknownState(key.clone()))?;
    }
    if let Some(target) = merge_map.get(neutral_id) {
        if target != neutral_id {
            return Err(TransformError::NeutralMerge(neutral_id.to_string()));
        }
    }

    // group assignment: new index per old state, neutral stays 0
    let mut group_ids: Vec<String> = vec![neutral_id.to_string()];
    let mut group_of = vec![NEUTRAL; spec.n_states()];
    for s in spec.active_states() {
        let old = &spec.states[s].id;
        let new = merge_map
            .get(old)
            .ok_or_else(|| TransformError::NotTotal(old.clone()))?;
        if new == neutral_id {
            return Err(TransformError::NeutralMerge(old.clone()));
        }
        group_of[s] = match group_ids.iter().position(|g| g == new) {
            Some(g) => g,
            None => {
                group_ids.push(new.clone());
                group_ids.len() - 1
            }
        };
    }
    let n_groups = group_ids.len();
    let members: Vec<Vec<usize>> = (0..n_groups)
        .map(|g| (0..spec.n_states()).filter(|&s| group_of[s] == g).collect())
        .collect();

    let states = group_ids
        .iter()
        .zip(&members)
        .map(|(id, ms)| {
            let name = ms
                .iter()
                .find(|&&m| &spec.states[m].id == id)
                .map(|&m| spec.states[m].name.clone())
                .unwrap_or_else(|| id.clone());
            StateDef::new(id.clone(), name)
        })
        .collect::<Vec<_>>();

    let priors: Vec<f64> = members
        .iter()
        .map(|ms| ms.iter().map(|&m| spec.priors[m]).sum())
        .collect();

    let average = |g: usize, values: &[f64]| -> f64 {
        let ms = &members[g];
        let w: Vec<f64> = ms.iter().map(|&m| spec.priors[m]).collect();
        let v: Vec<f64> = ms.iter().map(|&m| values[m]).collect();
        weighted_mean(&w, &v)
    };

    let mut p_plus = vec![0.0; n_groups];
    let mut holding = vec![0.0; n_groups];
    let mut incidence = vec![StateTasks::default(); n_groups];
    for g in 1..n_groups {
        p_plus[g] = average(g, &spec.p_plus);
        holding[g] = average(g, &spec.holding);
        let mut polarity: BTreeMap<usize, Polarity> = BTreeMap::new();
        for &m in &members[g] {
            for &(t, p) in &spec.incidence[m].members {
                if let Some(prev) = polarity.insert(t, p) {
                    if prev != p {
                        return Err(TransformError::PolarityConflict {
                            task: spec.tasks[t].id.clone(),
                        });
                    }
                }
            }
        }
        incidence[g] = StateTasks {
            members: polarity.into_iter().collect(),
        };
    }

    // Row mass from group src into group dst, prior-weighted over src members.
    let flux = |src: usize, dst: usize| -> f64 {
        let w: Vec<f64> = members[src].iter().map(|&m| spec.priors[m]).collect();
        let v: Vec<f64> = members[src]
            .iter()
            .map(|&i| members[dst].iter().map(|&j| spec.edge_prob(i, j)).sum())
            .collect();
        weighted_mean(&w, &v)
    };

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for e in &spec.edges {
        let pair = (group_of[e.from], group_of[e.to]);
        if pair.0 != pair.1 && pair.0 != NEUTRAL && !pairs.contains(&pair) {
            pairs.push(pair);
        }
    }
    let internal: Vec<f64> = (0..n_groups)
        .map(|g| if g == NEUTRAL { 0.0 } else { flux(g, g) })
        .collect();
    let mut edges = Vec::new();
    for (src, dst) in pairs {
        let raw = flux(src, dst);
        let kept = 1.0 - internal[src];
        let prob = if internal[src] == 0.0 {
            raw
        } else if kept > 0.0 {
            raw / kept
        } else {
            0.0
        };
        if prob > 0.0 {
            edges.push(Edge { from: src, to: dst, prob });
        }
    }

    let score_weights = spec.score_weights.as_ref().map(|w| {
        (0..n_groups)
            .map(|g| if g == NEUTRAL { w[NEUTRAL] } else { average(g, w) })
            .collect()
    });

    Ok(ModelSpec {
        states,
        edges,
        priors,
        tasks: spec.tasks.clone(),
        incidence,
        neutral_task_probs: spec.neutral_task_probs.clone(),
        p_plus,
        observables: spec.observables.clone(),
        observable_tasks: spec.observable_tasks.clone(),
        likelihood_params: spec.likelihood_params.clone(),
        likelihood_mode: spec.likelihood_mode,
        holding,
        substeps_k: spec.substeps_k,
        score_weights,
        notes: spec.notes.clone(),
    })
}

/// One child of a split state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChildSpec {
    pub state: StateDef,
    /// Share of the parent's prior mass.
    pub fraction: f64,
    /// Parent tasks carried by this child.
    pub tasks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineSpec {
    pub split: String,
    pub children: Vec<ChildSpec>,
    /// Replacement for every edge touching the split state, given as
    /// `(from, to, prob)` over the refined state ids. When absent, incoming
    /// edges are divided among the children by prior fraction and each child
    /// inherits the parent's outgoing edges.
    pub edges: Option<Vec<(String, String, f64)>>,
}

/// Splits one active state into children.
pub fn refine(spec: &ModelSpec, refinement: &RefineSpec) -> Result<ModelSpec, TransformError> {
    let split = spec
        .state_index(&refinement.split)
        .map_err(|_| TransformError::UnknownState(refinement.split.clone()))?;
    if split == NEUTRAL {
        return Err(TransformError::SplitNeutral);
    }
    let children = &refinement.children;
    for c in children {
        if c.fraction < 0.0 || !c.fraction.is_finite() {
            return Err(TransformError::NegativeFraction(c.state.id.clone()));
        }
    }
    let total: f64 = children.iter().map(|c| c.fraction).sum();
    if (total - 1.0).abs() > FRACTION_TOL {
        return Err(TransformError::FractionSum(total));
    }
    for (k, c) in children.iter().enumerate() {
        let clash_existing = spec
            .states
            .iter()
            .enumerate()
            .any(|(i, s)| i != split && s.id == c.state.id);
        let clash_sibling = children[..k].iter().any(|o| o.state.id == c.state.id);
        if clash_existing || clash_sibling {
            return Err(TransformError::DuplicateId(c.state.id.clone()));
        }
    }

    let parent = &spec.incidence[split];
    let mut child_incidence = Vec::with_capacity(children.len());
    for c in children {
        let mut members = Vec::new();
        for task_id in &c.tasks {
            let t = spec
                .task_index(task_id)
                .map_err(|_| TransformError::UnknownTask(task_id.clone()))?;
            let &(_, polarity) = parent
                .members
                .iter()
                .find(|&&(m, _)| m == t)
                .ok_or_else(|| TransformError::ForeignTask {
                    child: c.state.id.clone(),
                    task: task_id.clone(),
                })?;
            if !members.iter().any(|&(m, _)| m == t) {
                members.push((t, polarity));
            }
        }
        members.sort_by_key(|&(t, _)| t);
        child_incidence.push(StateTasks { members });
    }
    for t in parent.task_ids() {
        if !child_incidence.iter().any(|ci| ci.contains(t)) {
            return Err(TransformError::OrphanedTask(spec.tasks[t].id.clone()));
        }
    }

    // old index -> new index for unsplit states; children occupy split..split+c
    let n_children = children.len();
    let remap = |i: usize| if i < split { i } else { i + n_children - 1 };
    let child_index = |k: usize| split + k;

    let mut states = Vec::with_capacity(spec.n_states() + n_children - 1);
    let mut priors = Vec::with_capacity(states.capacity());
    let mut incidence = Vec::with_capacity(states.capacity());
    let mut p_plus = Vec::with_capacity(states.capacity());
    let mut holding = Vec::with_capacity(states.capacity());
    let mut weights = spec.score_weights.as_ref().map(|_| Vec::new());
    for i in 0..spec.n_states() {
        if i == split {
            for (c, inc) in children.iter().zip(&child_incidence) {
                states.push(c.state.clone());
                priors.push(spec.priors[split] * c.fraction);
                incidence.push(inc.clone());
                p_plus.push(spec.p_plus[split]);
                holding.push(spec.holding[split]);
                if let (Some(w), Some(src)) = (weights.as_mut(), spec.score_weights.as_ref()) {
                    w.push(src[split]);
                }
            }
        } else {
            states.push(spec.states[i].clone());
            priors.push(spec.priors[i]);
            incidence.push(spec.incidence[i].clone());
            p_plus.push(spec.p_plus[i]);
            holding.push(spec.holding[i]);
            if let (Some(w), Some(src)) = (weights.as_mut(), spec.score_weights.as_ref()) {
                w.push(src[i]);
            }
        }
    }

    let mut edges = Vec::new();
    match &refinement.edges {
        None => {
            for e in &spec.edges {
                match (e.from == split, e.to == split) {
                    (false, false) => edges.push(Edge {
                        from: remap(e.from),
                        to: remap(e.to),
                        prob: e.prob,
                    }),
                    (false, true) => {
                        for (k, c) in children.iter().enumerate() {
                            edges.push(Edge {
                                from: remap(e.from),
                                to: child_index(k),
                                prob: e.prob * c.fraction,
                            });
                        }
                    }
                    (true, false) => {
                        for k in 0..n_children {
                            edges.push(Edge {
                                from: child_index(k),
                                to: remap(e.to),
                                prob: e.prob,
                            });
                        }
                    }
                    (true, true) => {}
                }
            }
        }
        Some(overrides) => {
            for e in spec.edges.iter().filter(|e| e.from != split && e.to != split) {
                edges.push(Edge {
                    from: remap(e.from),
                    to: remap(e.to),
                    prob: e.prob,
                });
            }
            let lookup = |id: &str| {
                states
                    .iter()
                    .position(|s| s.id == id)
                    .ok_or_else(|| TransformError::UnknownState(id.to_string()))
            };
            for (from, to, prob) in overrides {
                edges.push(Edge {
                    from: lookup(from)?,
                    to: lookup(to)?,
                    prob: *prob,
                });
            }
        }
    }

    let refined = ModelSpec {
        states,
        edges,
        priors,
        tasks: spec.tasks.clone(),
        incidence,
        neutral_task_probs: spec.neutral_task_probs.clone(),
        p_plus,
        observables: spec.observables.clone(),
        observable_tasks: spec.observable_tasks.clone(),
        likelihood_params: spec.likelihood_params.clone(),
        likelihood_mode: spec.likelihood_mode,
        holding,
        substeps_k: spec.substeps_k,
        score_weights: weights,
        notes: spec.notes.clone(),
    };
    let report = validate_model(&refined);
    if !report.is_valid() {
        return Err(TransformError::Invalid(report));
    }
    Ok(refined)
}
