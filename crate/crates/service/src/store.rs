//! Registered models and live cases, rebuilt from their journals on start.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use escalate_core::inference::{EngineError, EvidenceEvent, ModelError, StepInput, TimelinePoint};
use escalate_core::model_spec::{parse_model, ParseError};
use escalate_core::{CaseState, Model, ValidationReport};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::journal::{EntryBody, Journal, JournalEntry, JournalError};

const MODELS_JOURNAL: &str = "models.journal";
const CASES_DIR: &str = "cases";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("model document does not parse: {0}")]
    Parse(#[from] ParseError),
    #[error("model is invalid")]
    Invalid(ValidationReport),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown case `{0}`")]
    UnknownCase(String),
    #[error("sequence number {got} is stale or ahead (next is {expected})")]
    SeqConflict { expected: u64, got: u64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("replaying {path}: {message}")]
    Replay { path: String, message: String },
}

impl From<ModelError> for StoreError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Invalid(r) => StoreError::Invalid(r),
        }
    }
}

/// Content-derived id of a model: a digest of its canonical JSON.
pub fn model_id(canonical: &str) -> String {
    let digest = Sha256::digest(canonical.as_bytes());
    format!("m-{}", &hex::encode(digest)[..16])
}

#[derive(Debug, Clone)]
pub struct RegisteredModel {
    pub id: String,
    pub model: Arc<Model>,
    /// Canonical document text.
    pub document: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseSummary {
    pub case_id: String,
    pub model_id: String,
    pub created_ms: u64,
    /// Sequence number the next accepted entry will carry.
    pub next_seq: u64,
    pub last_t: Option<u64>,
    pub events: usize,
    pub states: Vec<String>,
    pub current: TimelinePoint,
}

/// Response to an accepted ingest.
#[derive(Debug, Clone, Serialize)]
pub struct Ingested {
    pub case_id: String,
    pub seq: u64,
    pub states: Vec<String>,
    pub point: TimelinePoint,
}

/// One case: its current state and the journal that reproduces it.
#[derive(Debug)]
pub struct CaseSlot {
    pub id: String,
    pub model_id: String,
    pub created_ms: u64,
    pub state: CaseState,
    journal: Journal,
}

impl CaseSlot {
    pub fn summary(&self) -> CaseSummary {
        CaseSummary {
            case_id: self.id.clone(),
            model_id: self.model_id.clone(),
            created_ms: self.created_ms,
            next_seq: self.journal.next_seq(),
            last_t: self.state.last_t(),
            events: self.state.events().len(),
            states: self.state.model().state_ids(),
            current: self.state.timeline().last().clone(),
        }
    }

    fn check_seq(&self, seq: Option<u64>) -> Result<(), StoreError> {
        match seq {
            Some(got) if got != self.journal.next_seq() => Err(StoreError::SeqConflict {
                expected: self.journal.next_seq(),
                got,
            }),
            _ => Ok(()),
        }
    }

    /// Computes the next state, journals the entry, then makes the new
    /// state current. Nothing changes if either of the first two fails.
    fn commit(&mut self, next: CaseState, body: EntryBody) -> Result<Ingested, StoreError> {
        let entry = self.journal.append(body)?;
        self.state = next;
        Ok(Ingested {
            case_id: self.id.clone(),
            seq: entry.seq,
            states: self.state.model().state_ids(),
            point: self.state.timeline().last().clone(),
        })
    }

    pub fn observe(&mut self, input: StepInput, seq: Option<u64>) -> Result<Ingested, StoreError> {
        self.check_seq(seq)?;
        let next = self.state.apply(&input)?;
        self.commit(next, EntryBody::Observation(input))
    }

    pub fn evidence(&mut self, event: EvidenceEvent, seq: Option<u64>) -> Result<Ingested, StoreError> {
        self.check_seq(seq)?;
        event.resolve(self.state.model().spec())?;
        let next = self.state.apply(&StepInput::from(event.clone()))?;
        self.commit(next, EntryBody::Evidence(event))
    }

    pub fn annotate(&mut self, t: u64, note: String, seq: Option<u64>) -> Result<Ingested, StoreError> {
        self.check_seq(seq)?;
        let next = self.state.annotate(t, note.clone())?;
        self.commit(next, EntryBody::Annotation { t, note })
    }
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    models: RwLock<HashMap<String, RegisteredModel>>,
    models_journal: Mutex<Journal>,
    cases: RwLock<HashMap<String, Arc<tokio::sync::Mutex<CaseSlot>>>>,
    next_case: AtomicU64,
}

fn replay_error(path: &Path, message: impl std::fmt::Display) -> StoreError {
    StoreError::Replay {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

fn build_model(text: &str) -> Result<(Model, String), StoreError> {
    let spec = parse_model(text)?;
    let canonical = spec.to_json();
    Ok((Model::new(spec)?, canonical))
}

impl Store {
    /// Opens the data directory, replaying every journal in it.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        let cases_dir = dir.join(CASES_DIR);
        std::fs::create_dir_all(&cases_dir).map_err(|e| replay_error(&cases_dir, e))?;

        let models_path = dir.join(MODELS_JOURNAL);
        let (models_journal, entries) = Journal::open(&models_path)?;
        let mut models = HashMap::new();
        for e in entries {
            let EntryBody::ModelRegistered { model_id: id, document } = e.entry else {
                return Err(replay_error(&models_path, format!("entry {} is not a model registration", e.seq)));
            };
            let (model, _) = build_model(&document).map_err(|err| replay_error(&models_path, err))?;
            let model = model.into_shared();
            models.insert(id.clone(), RegisteredModel { id, model, document });
        }

        let mut case_files: Vec<(u64, PathBuf)> = std::fs::read_dir(&cases_dir)
            .map_err(|e| replay_error(&cases_dir, e))?
            .filter_map(|entry| {
                let path = entry.ok()?.path();
                let n = path.file_name()?.to_str()?.strip_prefix("case-")?.strip_suffix(".journal")?.parse().ok()?;
                Some((n, path))
            })
            .collect();
        case_files.sort();
        let next_case = case_files.last().map_or(1, |(n, _)| n + 1);

        let mut cases = HashMap::new();
        for (_, path) in case_files {
            let (journal, entries) = Journal::open(&path)?;
            match replay_case(&path, journal, entries, &models)? {
                Some(slot) => {
                    cases.insert(slot.id.clone(), Arc::new(tokio::sync::Mutex::new(slot)));
                }
                None => tracing::warn!(path = %path.display(), "skipping case journal with no creation entry"),
            }
        }
        tracing::info!(models = models.len(), cases = cases.len(), dir = %dir.display(), "store opened");
        Ok(Store {
            dir,
            models: RwLock::new(models),
            models_journal: Mutex::new(models_journal),
            cases: RwLock::new(cases),
            next_case: AtomicU64::new(next_case),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Validates and stores a model document; returns its id and whether
    /// it was new.
    pub fn register_model(&self, text: &str) -> Result<(RegisteredModel, bool), StoreError> {
        let (model, canonical) = build_model(text)?;
        let id = model_id(&canonical);
        if let Some(existing) = self.model(&id) {
            return Ok((existing, false));
        }
        let mut journal = self.models_journal.lock().expect("models journal lock");
        if let Some(existing) = self.model(&id) {
            return Ok((existing, false));
        }
        journal.append(EntryBody::ModelRegistered {
            model_id: id.clone(),
            document: canonical.clone(),
        })?;
        let registered = RegisteredModel {
            id: id.clone(),
            model: model.into_shared(),
            document: canonical,
        };
        self.models
            .write()
            .expect("models lock")
            .insert(id, registered.clone());
        Ok((registered, true))
    }

    pub fn model(&self, id: &str) -> Option<RegisteredModel> {
        self.models.read().expect("models lock").get(id).cloned()
    }

    pub fn create_case(&self, model_id: &str) -> Result<CaseSummary, StoreError> {
        let registered = self
            .model(model_id)
            .ok_or_else(|| StoreError::UnknownModel(model_id.to_string()))?;
        let n = self.next_case.fetch_add(1, Ordering::SeqCst);
        let case_id = format!("case-{n}");
        let mut journal = Journal::create(&self.dir.join(CASES_DIR).join(format!("{case_id}.journal")))?;
        let created = journal.append(EntryBody::CaseCreated {
            case_id: case_id.clone(),
            model_id: model_id.to_string(),
        })?;
        let slot = CaseSlot {
            id: case_id.clone(),
            model_id: model_id.to_string(),
            created_ms: created.received_ms,
            state: CaseState::new(registered.model),
            journal,
        };
        let summary = slot.summary();
        self.cases
            .write()
            .expect("cases lock")
            .insert(case_id, Arc::new(tokio::sync::Mutex::new(slot)));
        Ok(summary)
    }

    pub fn case(&self, id: &str) -> Result<Arc<tokio::sync::Mutex<CaseSlot>>, StoreError> {
        self.cases
            .read()
            .expect("cases lock")
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownCase(id.to_string()))
    }
}

fn replay_case(
    path: &Path,
    journal: Journal,
    entries: Vec<JournalEntry>,
    models: &HashMap<String, RegisteredModel>,
) -> Result<Option<CaseSlot>, StoreError> {
    let mut entries = entries.into_iter();
    let Some(first) = entries.next() else {
        return Ok(None);
    };
    let EntryBody::CaseCreated { case_id, model_id } = first.entry else {
        return Err(replay_error(path, "first entry is not a case creation"));
    };
    let model = models
        .get(&model_id)
        .ok_or_else(|| replay_error(path, format!("unknown model `{model_id}`")))?;
    let mut state = CaseState::new(Arc::clone(&model.model));
    for e in entries {
        let step = match e.entry {
            EntryBody::Observation(input) => state.apply(&input),
            EntryBody::Evidence(event) => state.apply(&StepInput::from(event)),
            EntryBody::Annotation { t, note } => state.annotate(t, note),
            other => return Err(replay_error(path, format!("unexpected entry {} ({other:?})", e.seq))),
        };
        state = step.map_err(|err| replay_error(path, format!("entry {}: {err}", e.seq)))?;
    }
    Ok(Some(CaseSlot {
        id: case_id,
        model_id,
        created_ms: first.received_ms,
        state,
        journal,
    }))
}
