use super::{Ack, Directive, ObserverRecord, ObserverState, ServiceError, StudyOptions, StudyState, StudyStore};
use crate::study::{write_responses, StudyManifest};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::Arc;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::UnknownStudy(_) | ServiceError::UnknownObserver(_) => StatusCode::NOT_FOUND,
            ServiceError::OutOfPhase { .. }
            | ServiceError::Outstanding(_)
            | ServiceError::Stale { .. }
            | ServiceError::BreakNotOver(_)
            | ServiceError::AlreadyRegistered(_)
            | ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::InvalidChoice(_) => StatusCode::BAD_REQUEST,
            ServiceError::EmptyManifest(_) | ServiceError::DanglingAsset(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

type Shared = Arc<StudyStore>;
type ApiResult<T> = Result<Json<T>, ServiceError>;

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateStudy {
    pub manifest: StudyManifest,
    pub assets_dir: PathBuf,
    #[serde(default)]
    pub options: Option<StudyOptions>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub study_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Submission {
    pub triplet_id: String,
    pub choice: String,
    #[serde(default)]
    pub latency_ms: Option<u64>,
}

#[derive(Debug, Deserialize)]
pub struct ExportQuery {
    #[serde(default)]
    pub include_training: bool,
}

async fn create(State(store): State<Shared>, Json(req): Json<CreateStudy>) -> Result<(StatusCode, Json<Created>), ServiceError> {
    let study_id = store.create_study(req.manifest, &req.assets_dir, req.options.unwrap_or_default())?;
    Ok((StatusCode::CREATED, Json(Created { study_id })))
}

async fn study_state(State(store): State<Shared>, Path(id): Path<String>) -> ApiResult<StudyState> {
    store.with(&id, |s| Ok(Json(s.state().clone())))
}

async fn register(State(store): State<Shared>, Path(id): Path<String>, Json(record): Json<ObserverRecord>) -> ApiResult<ObserverState> {
    store.with(&id, |s| s.register(record).map(Json))
}

async fn next(State(store): State<Shared>, Path((id, oid)): Path<(String, String)>) -> ApiResult<Directive> {
    store.with(&id, |s| s.next(&oid).map(Json))
}

async fn current(State(store): State<Shared>, Path((id, oid)): Path<(String, String)>) -> ApiResult<Directive> {
    store.with(&id, |s| s.current(&oid).map(Json))
}

async fn resume(State(store): State<Shared>, Path((id, oid)): Path<(String, String)>) -> ApiResult<Directive> {
    store.with(&id, |s| s.end_break(&oid).map(Json))
}

async fn respond(
    State(store): State<Shared>,
    Path((id, oid)): Path<(String, String)>,
    Json(sub): Json<Submission>,
) -> ApiResult<Ack> {
    store.with(&id, |s| s.submit(&oid, &sub.triplet_id, &sub.choice, sub.latency_ms).map(Json))
}

async fn export(State(store): State<Shared>, Path(id): Path<String>, Query(q): Query<ExportQuery>) -> Result<Response, ServiceError> {
    let responses = store.with(&id, |s| s.export(q.include_training))?;
    let mut body = Vec::new();
    write_responses(&mut body, &responses).map_err(|e| ServiceError::Io(std::io::Error::other(e.to_string())))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn asset(State(store): State<Shared>, Path((id, rel)): Path<(String, String)>) -> Result<Response, ServiceError> {
    let path = store.with(&id, |s| Ok(s.asset_path(&rel)))?;
    let Some(path) = path else {
        return Ok((StatusCode::NOT_FOUND, "no such asset").into_response());
    };
    let mime = match path.extension().and_then(|e| e.to_str()) {
        Some("png") => "image/png",
        Some("ppm") => "image/x-portable-pixmap",
        _ => "application/octet-stream",
    };
    let bytes = tokio::fs::read(&path).await?;
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

pub fn router(store: Arc<StudyStore>) -> Router {
    Router::new()
        .route("/studies", post(create))
        .route("/studies/{id}", get(study_state))
        .route("/studies/{id}/observers", post(register))
        .route("/studies/{id}/observers/{oid}/next", get(next))
        .route("/studies/{id}/observers/{oid}/current", get(current))
        .route("/studies/{id}/observers/{oid}/resume", post(resume))
        .route("/studies/{id}/observers/{oid}/responses", post(respond))
        .route("/studies/{id}/export", get(export))
        .route("/assets/{id}/{*path}", get(asset))
        .with_state(store)
}
