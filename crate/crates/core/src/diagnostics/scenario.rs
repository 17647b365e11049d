use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::DiagnosticsError;
use crate::inference::{CaseState, EvidenceEvent, Model, PosteriorTimeline, StepInput};
use crate::observation::{parse_csv_stream, parse_jsonl_stream, RawObservation};

/// A labelled sequence of observations with optional direct evidence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    pub observations: Vec<RawObservation>,
    #[serde(default)]
    pub evidence: Vec<EvidenceEvent>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DiagnosticsError {
    DiagnosticsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

impl Scenario {
    pub fn from_csv(label: impl Into<String>, text: &str) -> Result<Self, DiagnosticsError> {
        Ok(Self {
            label: label.into(),
            observations: parse_csv_stream(text)?,
            evidence: Vec::new(),
        })
    }

    pub fn from_jsonl(label: impl Into<String>, text: &str) -> Result<Self, DiagnosticsError> {
        Ok(Self {
            label: label.into(),
            observations: parse_jsonl_stream(text)?,
            evidence: Vec::new(),
        })
    }

    /// Reads a `.csv` or `.jsonl` observation stream; the label is the file
    /// stem.
    pub fn load(path: &Path) -> Result<Self, DiagnosticsError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => Self::from_jsonl(label, &text),
            _ => Self::from_csv(label, &text),
        }
    }

    /// Reads a JSON array of evidence events.
    pub fn load_evidence(path: &Path) -> Result<Vec<EvidenceEvent>, DiagnosticsError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| io_err(path, e))
    }

    pub fn with_evidence(mut self, evidence: Vec<EvidenceEvent>) -> Self {
        self.evidence = evidence;
        self
    }

    /// One step input per distinct timestamp, observations and evidence of
    /// the same period merged.
    pub fn inputs(&self) -> Result<Vec<StepInput>, DiagnosticsError> {
        let mut by_t: BTreeMap<u64, StepInput> = BTreeMap::new();
        let mut last = None;
        for o in &self.observations {
            if last.is_some_and(|l| o.t <= l) {
                return Err(DiagnosticsError::ScenarioOrder(o.t));
            }
            last = Some(o.t);
            by_t.insert(o.t, StepInput::from(o.clone()));
        }
        for e in &self.evidence {
            let entry = by_t.entry(e.t).or_insert_with(|| StepInput {
                t: e.t,
                ..StepInput::default()
            });
            if !entry.tasks.is_empty() {
                return Err(DiagnosticsError::ScenarioOrder(e.t));
            }
            entry.tasks = e.tasks.clone();
            entry.note = e.note.clone();
        }
        Ok(by_t.into_values().collect())
    }
}

/// Steps a fresh case through every period of `scenario`.
pub fn run_scenario(model: &Arc<Model>, scenario: &Scenario) -> Result<PosteriorTimeline, DiagnosticsError> {
    let mut case = CaseState::new(Arc::clone(model));
    for input in scenario.inputs()? {
        case = case.apply(&input)?;
    }
    Ok(case.timeline().clone())
}
