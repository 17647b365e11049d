use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::timeline::{log_odds, PosteriorTimeline, TimelinePoint};
use super::update::{posterior_update, TaskClamp};
use super::{EngineError, Model};
use crate::model_spec::ModelSpec;
use crate::observation::{record_likelihoods, ObservationRecord, RawObservation};
use crate::rdceg::StateDistribution;

/// Largest number of periods one step may advance over.
pub const MAX_GAP: u64 = 100_000;

fn binary_map<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, bool>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Bit {
        Int(u8),
        Bool(bool),
    }
    let raw: BTreeMap<String, Bit> = BTreeMap::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| match v {
            Bit::Bool(b) => Ok((k, b)),
            Bit::Int(0) => Ok((k, false)),
            Bit::Int(1) => Ok((k, true)),
            Bit::Int(n) => Err(serde::de::Error::custom(format!("task `{k}`: value {n} is not 0 or 1"))),
        })
        .collect()
}

fn binary_map_out<S: Serializer>(m: &BTreeMap<String, bool>, s: S) -> Result<S::Ok, S::Error> {
    let as_bits: BTreeMap<&String, u8> = m.iter().map(|(k, &v)| (k, v as u8)).collect();
    as_bits.serialize(s)
}

/// Direct information about task states at one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceEvent {
    pub t: u64,
    #[serde(deserialize_with = "binary_map", serialize_with = "binary_map_out")]
    pub tasks: BTreeMap<String, bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl EvidenceEvent {
    pub fn resolve(&self, spec: &ModelSpec) -> Result<TaskClamp, EngineError> {
        if self.tasks.is_empty() {
            return Err(EngineError::EmptyEvidence);
        }
        let mut clamp = TaskClamp::none(spec.n_tasks());
        for (id, &v) in &self.tasks {
            clamp.0[spec.task_index(id)?] = Some(v);
        }
        Ok(clamp)
    }
}

/// Everything that can arrive for one period: observable values, clamped
/// tasks, or both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepInput {
    pub t: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, Option<f64>>,
    #[serde(
        default,
        deserialize_with = "binary_map",
        serialize_with = "binary_map_out",
        skip_serializing_if = "BTreeMap::is_empty"
    )]
    pub tasks: BTreeMap<String, bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl StepInput {
    pub fn observation(&self) -> RawObservation {
        RawObservation {
            t: self.t,
            values: self.values.clone(),
        }
    }

    pub fn evidence(&self) -> Option<EvidenceEvent> {
        (!self.tasks.is_empty()).then(|| EvidenceEvent {
            t: self.t,
            tasks: self.tasks.clone(),
            note: self.note.clone(),
        })
    }
}

impl From<RawObservation> for StepInput {
    fn from(o: RawObservation) -> Self {
        Self {
            t: o.t,
            values: o.values,
            ..Self::default()
        }
    }
}

impl From<EvidenceEvent> for StepInput {
    fn from(e: EvidenceEvent) -> Self {
        Self {
            t: e.t,
            tasks: e.tasks,
            note: e.note,
            ..Self::default()
        }
    }
}

/// Entry of a case's filtration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CaseEvent {
    Observation { record: ObservationRecord },
    Evidence { event: EvidenceEvent },
    Annotation { t: u64, note: String },
}

impl CaseEvent {
    pub fn t(&self) -> u64 {
        match self {
            CaseEvent::Observation { record } => record.t,
            CaseEvent::Evidence { event } => event.t,
            CaseEvent::Annotation { t, .. } => *t,
        }
    }
}

/// Per-period log odds against neutral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogOddsRow {
    pub t: u64,
    #[serde(with = "crate::serde_float::vec")]
    pub rho: Vec<f64>,
    #[serde(with = "crate::serde_float::vec")]
    pub rho_star: Vec<f64>,
    #[serde(with = "crate::serde_float::vec")]
    pub lambda: Vec<f64>,
}

/// Immutable snapshot of one case: the current distribution, the ordered
/// event history and the timeline so far. Advancing returns a new value.
#[derive(Debug, Clone)]
pub struct CaseState {
    model: Arc<Model>,
    current: StateDistribution,
    last_step_t: Option<u64>,
    events: Vec<CaseEvent>,
    timeline: PosteriorTimeline,
}

impl CaseState {
    /// A case starting from the model's priors.
    pub fn new(model: Arc<Model>) -> Self {
        let prior = model.prior();
        Self::starting_from(model, prior)
    }

    pub fn starting_from(model: Arc<Model>, dist: StateDistribution) -> Self {
        let initial = TimelinePoint::initial(dist.probs().to_vec(), model.score(&dist));
        Self {
            timeline: PosteriorTimeline {
                states: model.state_ids(),
                initial,
                steps: Vec::new(),
            },
            current: dist,
            last_step_t: None,
            events: Vec::new(),
            model,
        }
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn current(&self) -> &StateDistribution {
        &self.current
    }

    pub fn events(&self) -> &[CaseEvent] {
        &self.events
    }

    pub fn timeline(&self) -> &PosteriorTimeline {
        &self.timeline
    }

    pub fn last_t(&self) -> Option<u64> {
        self.events.last().map(CaseEvent::t)
    }

    /// Predicts over the periods since the last step, then updates on the
    /// record's intensities and any clamped tasks.
    pub fn step(&self, record: &ObservationRecord, evidence: Option<&EvidenceEvent>) -> Result<CaseState, EngineError> {
        let t = record.t;
        if let Some(last) = self.last_t() {
            if t <= last {
                return Err(EngineError::OutOfOrder { last, got: t });
            }
        }
        if let Some(ev) = evidence {
            if ev.t != t {
                return Err(EngineError::EvidenceTimestamp { record: t, evidence: ev.t });
            }
        }
        let spec = self.model.spec();
        if record.values.len() != spec.observables.len() {
            return Err(crate::rdceg::RdcegError::DimensionMismatch {
                expected: spec.observables.len(),
                got: record.values.len(),
            }
            .into());
        }
        let clamp = match evidence {
            Some(ev) => ev.resolve(spec)?,
            None => TaskClamp::none(spec.n_tasks()),
        };
        let gap = self.last_step_t.map_or(1, |last| t - last);
        if gap > MAX_GAP {
            return Err(EngineError::GapTooLarge { gap });
        }
        let mut predicted = self.current.clone();
        for _ in 0..gap {
            predicted = predicted.propagate(self.model.step_matrix())?;
        }
        let lik = record_likelihoods(record, spec);
        let outcome = posterior_update(&self.model, &predicted, &lik, &clamp)?;

        let prior_log_odds = log_odds(predicted.probs());
        let log_odds = prior_log_odds
            .iter()
            .zip(&outcome.log_lr)
            .map(|(r, l)| if r.is_infinite() { *r } else { r + l })
            .collect();
        let point = TimelinePoint {
            t: Some(t),
            predicted: predicted.into_vec(),
            score: self.model.score(&outcome.posterior),
            posterior: outcome.posterior.probs().to_vec(),
            prior_log_odds,
            log_lr: outcome.log_lr,
            log_odds,
            evidence: evidence.is_some(),
        };

        let mut next = self.clone();
        next.current = outcome.posterior;
        next.last_step_t = Some(t);
        next.events.push(CaseEvent::Observation { record: record.clone() });
        if let Some(ev) = evidence {
            next.events.push(CaseEvent::Evidence { event: ev.clone() });
        }
        next.timeline.steps.push(point);
        Ok(next)
    }

    /// Resolves ids and steps.
    pub fn apply(&self, input: &StepInput) -> Result<CaseState, EngineError> {
        let record = input.observation().resolve(self.model.spec())?;
        self.step(&record, input.evidence().as_ref())
    }

    /// Records a free-text note without touching the distribution.
    pub fn annotate(&self, t: u64, note: impl Into<String>) -> Result<CaseState, EngineError> {
        if let Some(last) = self.last_t() {
            if t < last {
                return Err(EngineError::OutOfOrder { last, got: t });
            }
        }
        let mut next = self.clone();
        next.events.push(CaseEvent::Annotation { t, note: note.into() });
        Ok(next)
    }

    /// Runs `inputs` on a copy and returns only their timeline, starting
    /// from the current posterior.
    pub fn whatif(&self, inputs: &[StepInput]) -> Result<PosteriorTimeline, EngineError> {
        let mut scratch = self.clone();
        for input in inputs {
            scratch = scratch.apply(input)?;
        }
        Ok(PosteriorTimeline {
            states: self.timeline.states.clone(),
            initial: self.timeline.last().clone(),
            steps: scratch.timeline.steps[self.timeline.steps.len()..].to_vec(),
        })
    }

    pub fn log_odds_timeline(&self) -> Vec<LogOddsRow> {
        self.timeline
            .steps
            .iter()
            .map(|p| LogOddsRow {
                t: p.t.expect("steps carry timestamps"),
                rho: p.prior_log_odds.clone(),
                rho_star: p.log_odds.clone(),
                lambda: p.log_lr.clone(),
            })
            .collect()
    }
}
