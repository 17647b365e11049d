use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    Edge, LikelihoodMode, LogisticParams, ModelSpec, ObservableDef, Polarity, StateDef,
    StateTasks, TaskDef, NEUTRAL,
};

pub const FORMAT_VERSION: u32 = 1;

/// On-disk JSON form of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub states: Vec<StateDoc>,
    #[serde(default)]
    pub edges: Vec<EdgeDoc>,
    pub priors: BTreeMap<String, f64>,
    pub tasks: Vec<TaskDoc>,
    pub task_state_incidence: BTreeMap<String, IncidenceDoc>,
    pub neutral_task_probs: BTreeMap<String, f64>,
    pub p_plus: BTreeMap<String, f64>,
    #[serde(default)]
    pub observables: Vec<ObservableDoc>,
    #[serde(default)]
    pub observable_task_incidence: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub likelihood_params: BTreeMap<String, LogisticParams>,
    #[serde(default)]
    pub likelihood_mode: LikelihoodMode,
    pub holding_params: BTreeMap<String, f64>,
    #[serde(default = "default_substeps")]
    pub substeps_k: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_weights: Option<BTreeMap<String, f64>>,
}

fn default_substeps() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDoc {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDoc {
    pub from: String,
    pub to: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDoc {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub evidence_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncidenceDoc {
    #[serde(default)]
    pub positive: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub negative: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableDoc {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported document format {0} (expected {FORMAT_VERSION})")]
    UnsupportedFormat(u32),
    #[error("{path}: unknown {kind} `{id}`")]
    DanglingReference {
        kind: &'static str,
        id: String,
        path: String,
    },
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("{field}: missing entry for {kind} `{id}`")]
    MissingEntry {
        field: &'static str,
        kind: &'static str,
        id: String,
    },
    #[error("{field}: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },
}

/// Parses a JSON model document into a resolved [`ModelSpec`].
///
/// Numeric invariants are not checked here; run [`super::validate_model`]
/// on the result.
pub fn parse_model(text: &str) -> Result<ModelSpec, ParseError> {
    let doc: ModelDocument = serde_json::from_str(text).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    from_document(&doc)
}

fn index_ids<'a>(
    kind: &'static str,
    ids: impl Iterator<Item = &'a str>,
) -> Result<HashMap<&'a str, usize>, ParseError> {
    let mut map = HashMap::new();
    for (i, id) in ids.enumerate() {
        if map.insert(id, i).is_some() {
            return Err(ParseError::DuplicateId {
                kind,
                id: id.to_string(),
            });
        }
    }
    Ok(map)
}

fn resolve(
    map: &HashMap<&str, usize>,
    kind: &'static str,
    id: &str,
    path: impl FnOnce() -> String,
) -> Result<usize, ParseError> {
    map.get(id).copied().ok_or_else(|| ParseError::DanglingReference {
        kind,
        id: id.to_string(),
        path: path(),
    })
}

/// Looks up every key of a per-entity map, rejecting unknown keys.
fn check_keys<V>(
    field: &'static str,
    kind: &'static str,
    entries: &BTreeMap<String, V>,
    map: &HashMap<&str, usize>,
) -> Result<(), ParseError> {
    for key in entries.keys() {
        resolve(map, kind, key, || field.to_string())?;
    }
    Ok(())
}

pub(super) fn from_document(doc: &ModelDocument) -> Result<ModelSpec, ParseError> {
    if doc.format != FORMAT_VERSION {
        return Err(ParseError::UnsupportedFormat(doc.format));
    }
    if doc.states.is_empty() {
        return Err(ParseError::Invalid {
            field: "states",
            message: "at least the neutral state must be declared".into(),
        });
    }
    if doc.substeps_k == 0 {
        return Err(ParseError::Invalid {
            field: "substeps_k",
            message: "must be a positive integer".into(),
        });
    }

    let state_map = index_ids("state", doc.states.iter().map(|s| s.id.as_str()))?;
    let task_map = index_ids("task", doc.tasks.iter().map(|t| t.id.as_str()))?;
    let obs_map = index_ids("observable", doc.observables.iter().map(|o| o.id.as_str()))?;
    let n_states = doc.states.len();
    let n_tasks = doc.tasks.len();
    let neutral_id = doc.states[NEUTRAL].id.as_str();

    let states = doc
        .states
        .iter()
        .map(|s| StateDef {
            id: s.id.clone(),
            name: s.name.clone().unwrap_or_else(|| s.id.clone()),
        })
        .collect();

    let mut edges = Vec::with_capacity(doc.edges.len());
    for (i, e) in doc.edges.iter().enumerate() {
        let from = resolve(&state_map, "state", &e.from, || format!("edges[{i}].from"))?;
        let to = resolve(&state_map, "state", &e.to, || format!("edges[{i}].to"))?;
        edges.push(Edge {
            from,
            to,
            prob: e.prob,
        });
    }

    check_keys("priors", "state", &doc.priors, &state_map)?;
    let priors = doc
        .states
        .iter()
        .map(|s| {
            doc.priors
                .get(&s.id)
                .copied()
                .ok_or_else(|| ParseError::MissingEntry {
                    field: "priors",
                    kind: "state",
                    id: s.id.clone(),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let tasks = doc
        .tasks
        .iter()
        .map(|t| TaskDef {
            id: t.id.clone(),
            name: t.name.clone().unwrap_or_else(|| t.id.clone()),
            evidence_only: t.evidence_only,
        })
        .collect();

    check_keys("task_state_incidence", "state", &doc.task_state_incidence, &state_map)?;
    let mut incidence = vec![StateTasks::default(); n_states];
    for (state_id, inc) in &doc.task_state_incidence {
        let s = state_map[state_id.as_str()];
        let mut members = Vec::new();
        for (list, polarity) in [(&inc.positive, Polarity::Positive), (&inc.negative, Polarity::Negative)] {
            for task_id in list {
                let t = resolve(&task_map, "task", task_id, || {
                    format!("task_state_incidence.{state_id}")
                })?;
                if members.iter().any(|&(m, _)| m == t) {
                    return Err(ParseError::Invalid {
                        field: "task_state_incidence",
                        message: format!("task `{task_id}` listed twice for state `{state_id}`"),
                    });
                }
                members.push((t, polarity));
            }
        }
        members.sort_by_key(|&(t, _)| t);
        incidence[s] = StateTasks { members };
    }

    check_keys("neutral_task_probs", "task", &doc.neutral_task_probs, &task_map)?;
    let neutral_task_probs = doc
        .tasks
        .iter()
        .map(|t| {
            doc.neutral_task_probs
                .get(&t.id)
                .copied()
                .ok_or_else(|| ParseError::MissingEntry {
                    field: "neutral_task_probs",
                    kind: "task",
                    id: t.id.clone(),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let p_plus = per_active_state("p_plus", &doc.p_plus, doc, &state_map, neutral_id)?;
    let holding = per_active_state("holding_params", &doc.holding_params, doc, &state_map, neutral_id)?;

    let observables = doc
        .observables
        .iter()
        .map(|o| ObservableDef {
            id: o.id.clone(),
            name: o.name.clone().unwrap_or_else(|| o.id.clone()),
            mean: o.mean,
            sd: o.sd,
        })
        .collect();

    check_keys("observable_task_incidence", "observable", &doc.observable_task_incidence, &obs_map)?;
    let mut observable_tasks = vec![Vec::new(); doc.observables.len()];
    for (obs_id, task_ids) in &doc.observable_task_incidence {
        let o = obs_map[obs_id.as_str()];
        let mut resolved = Vec::with_capacity(task_ids.len());
        for task_id in task_ids {
            let t = resolve(&task_map, "task", task_id, || {
                format!("observable_task_incidence.{obs_id}")
            })?;
            if !resolved.contains(&t) {
                resolved.push(t);
            }
        }
        resolved.sort_unstable();
        observable_tasks[o] = resolved;
    }

    check_keys("likelihood_params", "task", &doc.likelihood_params, &task_map)?;
    let likelihood_params = doc
        .tasks
        .iter()
        .map(|t| doc.likelihood_params.get(&t.id).copied().unwrap_or_default())
        .collect();

    let score_weights = match &doc.score_weights {
        None => None,
        Some(w) => {
            check_keys("score_weights", "state", w, &state_map)?;
            Some(
                doc.states
                    .iter()
                    .map(|s| {
                        w.get(&s.id).copied().ok_or_else(|| ParseError::MissingEntry {
                            field: "score_weights",
                            kind: "state",
                            id: s.id.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            )
        }
    };

    debug_assert_eq!(neutral_task_probs.len(), n_tasks);
    Ok(ModelSpec {
        states,
        edges,
        priors,
        tasks,
        incidence,
        neutral_task_probs,
        p_plus,
        observables,
        observable_tasks,
        likelihood_params,
        likelihood_mode: doc.likelihood_mode,
        holding,
        substeps_k: doc.substeps_k,
        score_weights,
        notes: doc.notes.clone(),
    })
}

/// Resolves a map keyed by active state id into a per-state vector with the
/// neutral slot fixed at 0.
fn per_active_state(
    field: &'static str,
    entries: &BTreeMap<String, f64>,
    doc: &ModelDocument,
    state_map: &HashMap<&str, usize>,
    neutral_id: &str,
) -> Result<Vec<f64>, ParseError> {
    check_keys(field, "state", entries, state_map)?;
    if entries.contains_key(neutral_id) {
        return Err(ParseError::Invalid {
            field,
            message: format!("neutral state `{neutral_id}` takes no entry"),
        });
    }
    let mut out = vec![0.0; doc.states.len()];
    for (i, s) in doc.states.iter().enumerate().skip(1) {
        out[i] = entries
            .get(&s.id)
            .copied()
            .ok_or_else(|| ParseError::MissingEntry {
                field,
                kind: "state",
                id: s.id.clone(),
            })?;
    }
    Ok(out)
}

pub(super) fn to_document(spec: &ModelSpec) -> ModelDocument {
    let state_id = |i: usize| spec.states[i].id.clone();
    let task_id = |t: usize| spec.tasks[t].id.clone();

    let name_if_distinct = |id: &str, name: &str| (id != name).then(|| name.to_string());

    let mut task_state_incidence = BTreeMap::new();
    for (s, st) in spec.incidence.iter().enumerate() {
        if st.is_empty() {
            continue;
        }
        task_state_incidence.insert(
            state_id(s),
            IncidenceDoc {
                positive: st.positive().map(task_id).collect(),
                negative: st.negative().map(task_id).collect(),
            },
        );
    }

    let active = |values: &[f64]| -> BTreeMap<String, f64> {
        spec.active_states().map(|s| (state_id(s), values[s])).collect()
    };

    ModelDocument {
        format: FORMAT_VERSION,
        notes: spec.notes.clone(),
        states: spec
            .states
            .iter()
            .map(|s| StateDoc {
                id: s.id.clone(),
                name: name_if_distinct(&s.id, &s.name),
            })
            .collect(),
        edges: spec
            .edges
            .iter()
            .map(|e| EdgeDoc {
                from: state_id(e.from),
                to: state_id(e.to),
                prob: e.prob,
            })
            .collect(),
        priors: spec
            .states
            .iter()
            .zip(&spec.priors)
            .map(|(s, &p)| (s.id.clone(), p))
            .collect(),
        tasks: spec
            .tasks
            .iter()
            .map(|t| TaskDoc {
                id: t.id.clone(),
                name: name_if_distinct(&t.id, &t.name),
                evidence_only: t.evidence_only,
            })
            .collect(),
        task_state_incidence,
        neutral_task_probs: spec
            .tasks
            .iter()
            .zip(&spec.neutral_task_probs)
            .map(|(t, &p)| (t.id.clone(), p))
            .collect(),
        p_plus: active(&spec.p_plus),
        observables: spec
            .observables
            .iter()
            .map(|o| ObservableDoc {
                id: o.id.clone(),
                name: name_if_distinct(&o.id, &o.name),
                mean: o.mean,
                sd: o.sd,
            })
            .collect(),
        observable_task_incidence: spec
            .observables
            .iter()
            .zip(&spec.observable_tasks)
            .filter(|(_, ts)| !ts.is_empty())
            .map(|(o, ts)| (o.id.clone(), ts.iter().map(|&t| task_id(t)).collect()))
            .collect(),
        likelihood_params: spec
            .tasks
            .iter()
            .zip(&spec.likelihood_params)
            .map(|(t, &p)| (t.id.clone(), p))
            .collect(),
        likelihood_mode: spec.likelihood_mode,
        holding_params: active(&spec.holding),
        substeps_k: spec.substeps_k,
        score_weights: spec.score_weights.as_ref().map(|w| {
            spec.states
                .iter()
                .zip(w)
                .map(|(s, &v)| (s.id.clone(), v))
                .collect()
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "format": 1,
        "states": [{"id": "N"}, {"id": "A", "name": "Active"}],
        "edges": [],
        "priors": {"N": 0.5, "A": 0.5},
        "tasks": [{"id": "t1"}],
        "task_state_incidence": {"A": {"positive": ["t1"]}},
        "neutral_task_probs": {"t1": 0.02},
        "p_plus": {"A": 0.4},
        "observables": [{"id": "y1", "mean": 0, "sd": 1}],
        "observable_task_incidence": {"y1": ["t1"]},
        "holding_params": {"A": 0.01}
    }"#;

    #[test]
    fn defaults_are_applied() {
        let spec = parse_model(MINIMAL).unwrap();
        assert_eq!(spec.likelihood_mode, LikelihoodMode::Average);
        assert_eq!(spec.substeps_k, 1);
        assert_eq!(spec.effective_score_weights(), vec![0.0, 1.0]);
        assert_eq!(spec.likelihood_params[0], LogisticParams::default());
        assert_eq!(spec.states[0].name, "N");
        assert_eq!(spec.states[1].name, "Active");
    }

    #[test]
    fn missing_priors_names_the_field() {
        let text = MINIMAL.replace(r#""priors": {"N": 0.5, "A": 0.5},"#, "");
        let err = parse_model(&text).unwrap_err();
        match err {
            ParseError::Syntax { message, .. } => assert!(message.contains("priors"), "{message}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_field_is_rejected_with_position() {
        let text = MINIMAL.replace(r#""format": 1,"#, r#""format": 1, "colour": "red","#);
        match parse_model(&text).unwrap_err() {
            ParseError::Syntax { line, message, .. } => {
                assert!(message.contains("colour"));
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_and_duplicate_ids() {
        let text = MINIMAL.replace(r#""y1": ["t1"]"#, r#""y1": ["t9"]"#);
        assert!(matches!(
            parse_model(&text),
            Err(ParseError::DanglingReference { kind: "task", .. })
        ));
        let text = MINIMAL.replace(r#"[{"id": "t1"}]"#, r#"[{"id": "t1"}, {"id": "t1"}]"#);
        assert!(matches!(parse_model(&text), Err(ParseError::DuplicateId { kind: "task", .. })));
    }

    #[test]
    fn format_key_is_mandatory() {
        let text = MINIMAL.replace(r#""format": 1,"#, "");
        assert!(matches!(parse_model(&text), Err(ParseError::Syntax { .. })));
        let text = MINIMAL.replace(r#""format": 1,"#, r#""format": 2,"#);
        assert_eq!(parse_model(&text), Err(ParseError::UnsupportedFormat(2)));
    }

    #[test]
    fn neutral_holding_entry_is_rejected() {
        let text = MINIMAL.replace(r#"{"A": 0.01}"#, r#"{"N": 0.1, "A": 0.01}"#);
        assert!(matches!(parse_model(&text), Err(ParseError::Invalid { field: "holding_params", .. })));
    }

    #[test]
    fn serialize_then_parse_is_identity() {
        let spec = parse_model(MINIMAL).unwrap();
        let again = parse_model(&spec.to_json()).unwrap();
        assert_eq!(spec, again);
    }
}
