//! HTTP routes over the [`Store`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use escalate_core::diagnostics::{longrun_report, LongrunVariant, NeutralRateSweep};
use escalate_core::inference::{EngineError, EvidenceEvent, StepInput};
use escalate_core::model_spec::Finding;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::store::{Store, StoreError};

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub findings: Option<Vec<Finding>>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code,
                message: message.into(),
                findings: None,
            },
        }
    }

    fn schema(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "SCHEMA", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::Parse(_) => ApiError::new(StatusCode::BAD_REQUEST, "MODEL_PARSE", message),
            StoreError::Invalid(report) => {
                let mut err = ApiError::new(StatusCode::BAD_REQUEST, "MODEL_INVALID", message);
                err.body.findings = Some(report.findings);
                err
            }
            StoreError::UnknownModel(_) => ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_MODEL", message),
            StoreError::UnknownCase(_) => ApiError::new(StatusCode::NOT_FOUND, "UNKNOWN_CASE", message),
            StoreError::SeqConflict { .. } => ApiError::new(StatusCode::CONFLICT, "SEQUENCE_CONFLICT", message),
            StoreError::Engine(EngineError::OutOfOrder { .. }) => {
                ApiError::new(StatusCode::CONFLICT, "OUT_OF_ORDER", message)
            }
            StoreError::Engine(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "UNPROCESSABLE", message),
            StoreError::Journal(_) | StoreError::Replay { .. } => {
                tracing::error!(%message, "storage failure");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "STORAGE", message)
            }
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parses a JSON body, taking out the optional `seq` field first.
fn body_with_seq<T: DeserializeOwned>(bytes: &[u8]) -> ApiResult<(T, Option<u64>)> {
    let mut value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| ApiError::schema(e.to_string()))?;
    let seq = match value.as_object_mut().and_then(|o| o.remove("seq")) {
        None | Some(serde_json::Value::Null) => None,
        Some(v) => Some(v.as_u64().ok_or_else(|| ApiError::schema("seq must be a non-negative integer"))?),
    };
    let parsed = serde_json::from_value(value).map_err(|e| ApiError::schema(e.to_string()))?;
    Ok((parsed, seq))
}

fn body<T: DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::schema(e.to_string()))
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/models", post(register_model))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/longrun", get(longrun))
        .route("/cases", post(create_case))
        .route("/cases/{id}", get(get_case))
        .route("/cases/{id}/observations", post(observe))
        .route("/cases/{id}/evidence", post(evidence))
        .route("/cases/{id}/annotations", post(annotate))
        .route("/cases/{id}/timeline", get(timeline))
        .route("/cases/{id}/whatif", post(whatif))
        .with_state(store)
}

#[derive(Serialize)]
struct ModelCreated {
    model_id: String,
    created: bool,
    states: Vec<String>,
    warnings: Vec<Finding>,
}

async fn register_model(State(store): State<Arc<Store>>, bytes: Bytes) -> ApiResult<Response> {
    let text = std::str::from_utf8(&bytes).map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "MODEL_PARSE", "body is not UTF-8"))?;
    let (m, created) = store.register_model(text)?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    let out = ModelCreated {
        model_id: m.id,
        created,
        states: m.model.state_ids(),
        warnings: m.model.warnings().findings.clone(),
    };
    Ok((status, Json(out)).into_response())
}

async fn get_model(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    let m = store.model(&id).ok_or(StoreError::UnknownModel(id))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], m.document).into_response())
}

#[derive(Deserialize)]
struct LongrunQuery {
    horizon: Option<usize>,
    #[serde(default)]
    mobilised_absorbing: bool,
    absorbing_state: Option<String>,
    sweep: Option<String>,
}

async fn longrun(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Query(q): Query<LongrunQuery>,
) -> ApiResult<Response> {
    let m = store.model(&id).ok_or(StoreError::UnknownModel(id))?;
    let spec = m.model.spec();
    let variant = if q.mobilised_absorbing {
        let state = match &q.absorbing_state {
            Some(s) => spec.state_index(s).map_err(|e| ApiError::schema(e.to_string()))?,
            None => spec.n_states() - 1,
        };
        LongrunVariant::MobilisedAbsorbing { state }
    } else {
        LongrunVariant::SingleAbsorbing
    };
    let sweep = q
        .sweep
        .as_deref()
        .map(str::parse::<NeutralRateSweep>)
        .transpose()
        .map_err(|e| ApiError::schema(e.to_string()))?;
    let horizon = q.horizon.unwrap_or(1000);
    let spec = spec.clone();
    let report = tokio::task::spawn_blocking(move || longrun_report(&spec, horizon, variant, sweep))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))?
        .map_err(|e| ApiError::schema(e.to_string()))?;
    Ok(Json(report).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewCase {
    model_id: String,
}

async fn create_case(State(store): State<Arc<Store>>, bytes: Bytes) -> ApiResult<Response> {
    let req: NewCase = body(&bytes)?;
    let summary = store.create_case(&req.model_id)?;
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn get_case(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    let slot = store.case(&id)?;
    let summary = slot.lock().await.summary();
    Ok(Json(summary).into_response())
}

async fn observe(State(store): State<Arc<Store>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let slot = store.case(&id)?;
    let (input, seq): (StepInput, _) = body_with_seq(&bytes)?;
    let out = slot.lock().await.observe(input, seq)?;
    Ok(Json(out).into_response())
}

async fn evidence(State(store): State<Arc<Store>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let slot = store.case(&id)?;
    let (event, seq): (EvidenceEvent, _) = body_with_seq(&bytes)?;
    let out = slot.lock().await.evidence(event, seq)?;
    Ok(Json(out).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Note {
    t: u64,
    note: String,
}

async fn annotate(State(store): State<Arc<Store>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let slot = store.case(&id)?;
    let (note, seq): (Note, _) = body_with_seq(&bytes)?;
    let out = slot.lock().await.annotate(note.t, note.note, seq)?;
    Ok(Json(out).into_response())
}

#[derive(Deserialize)]
struct Range {
    from: Option<u64>,
    to: Option<u64>,
}

async fn timeline(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Query(range): Query<Range>,
) -> ApiResult<Response> {
    let slot = store.case(&id)?;
    let tl = slot.lock().await.state.timeline().slice(range.from, range.to);
    Ok(Json(tl).into_response())
}

async fn whatif(State(store): State<Arc<Store>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Response> {
    let slot = store.case(&id)?;
    let inputs: Vec<StepInput> = body(&bytes)?;
    let state = slot.lock().await.state.clone();
    let tl = state
        .whatif(&inputs)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "UNPROCESSABLE", e.to_string()))?;
    Ok(Json(tl).into_response())
}
