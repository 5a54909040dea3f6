//! HTTP and JSON interface.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | `GET` | `/health` | | `ok` |
//! | `GET` | `/studies/{id}` | | cohort status and accuracy so far |
//! | `POST` | `/studies/{id}/sessions` | | `201` with the new session and its kind |
//! | `GET` | `/studies/{id}/export` | `?include_screened=true` | CSV of test answers |
//! | `GET` | `/sessions/{sid}/phase` | | the current screen |
//! | `POST` | `/sessions/{sid}/advance` | `{"survey": {..}}` in the exit survey | the new phase |
//! | `POST` | `/sessions/{sid}/comprehension` | `{"answers": {id: answer}}` | grading |
//! | `POST` | `/sessions/{sid}/responses` | `{"item", "answer", "elapsed_ms"}` | acknowledgement |
//!
//! Errors come back as `{"error": message}` with status 404 for unknown
//! ids, 409 for requests that clash with the session's state or a full
//! cohort, 422 for malformed or out-of-protocol requests and 500 for storage
//! failures.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sim2real::{ExplainerKind, SummaryStat};

use crate::error::StudyError;
use crate::export::{accuracy_by_kind, export_csv};
use crate::study::{Phase, Study};

/// All studies served by one process. Each study sits behind its own lock so
/// studies never wait on each other.
#[derive(Clone, Default)]
pub struct AppState {
    studies: Arc<BTreeMap<String, Arc<Mutex<Study>>>>,
}

impl AppState {
    pub fn new(studies: Vec<Study>) -> Result<Self, StudyError> {
        let mut map = BTreeMap::new();
        for s in studies {
            let id = s.id().to_string();
            if map.insert(id.clone(), Arc::new(Mutex::new(s))).is_some() {
                return Err(StudyError::Config(format!("study id `{id}` is used twice")));
            }
        }
        Ok(Self { studies: Arc::new(map) })
    }

    pub fn study(&self, id: &str) -> Option<Arc<Mutex<Study>>> {
        self.studies.get(id).cloned()
    }

    fn by_study(&self, id: &str) -> Result<Arc<Mutex<Study>>, StudyError> {
        self.study(id)
            .ok_or_else(|| StudyError::NotFound(format!("study `{id}`")))
    }

    fn by_session(&self, sid: &str) -> Result<Arc<Mutex<Study>>, StudyError> {
        self.studies
            .values()
            .find(|s| s.lock().expect("study lock").has_session(sid))
            .cloned()
            .ok_or_else(|| StudyError::NotFound(format!("session `{sid}`")))
    }
}

/// JSON error reply.
pub struct ApiError(pub StudyError);

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            StudyError::NotFound(_) => StatusCode::NOT_FOUND,
            StudyError::Conflict(_) | StudyError::Closed(_) => StatusCode::CONFLICT,
            StudyError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.0.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs `f` on the locked study on the blocking pool, since commands wait
/// for the disk.
async fn with_study<T, F>(study: Arc<Mutex<Study>>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut Study) -> Result<T, StudyError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || {
        let mut guard = study.lock().expect("study lock");
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError(StudyError::Invalid(format!("request aborted: {e}"))))?
    .map_err(ApiError)
}

fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError(StudyError::Invalid(format!("bad JSON body: {e}"))))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdvanceBody {
    #[serde(default)]
    survey: BTreeMap<String, String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComprehensionBody {
    answers: BTreeMap<String, String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResponseBody {
    item: String,
    answer: u8,
    #[serde(default)]
    elapsed_ms: u64,
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    #[serde(default)]
    include_screened: bool,
}

#[derive(Debug, Serialize)]
struct PhaseReply {
    phase: Phase,
}

#[derive(Debug, Serialize)]
struct StudyStatus {
    id: String,
    cohort: usize,
    sessions: usize,
    per_kind: BTreeMap<ExplainerKind, usize>,
    accuracy: BTreeMap<ExplainerKind, SummaryStat>,
}

/// Builds the router.
pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/studies/{id}", get(status))
        .route("/studies/{id}/sessions", post(create_session))
        .route("/studies/{id}/export", get(export))
        .route("/sessions/{sid}/phase", get(phase))
        .route("/sessions/{sid}/advance", post(advance))
        .route("/sessions/{sid}/comprehension", post(comprehension))
        .route("/sessions/{sid}/responses", post(respond))
        .with_state(state)
}

async fn status(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let study = app.by_study(&id)?;
    let s = study.lock().expect("study lock");
    Ok(Json(StudyStatus {
        id: s.id().to_string(),
        cohort: s.config().cohort(),
        sessions: s.sessions().count(),
        per_kind: s.counts(),
        accuracy: accuracy_by_kind(&s),
    }))
}

async fn create_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let study = app.by_study(&id)?;
    let created = with_study(study, |s| s.create_session()).await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn export(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> ApiResult<impl IntoResponse> {
    let study = app.by_study(&id)?;
    let csv = export_csv(&study.lock().expect("study lock"), q.include_screened);
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv))
}

async fn phase(State(app): State<AppState>, Path(sid): Path<String>) -> ApiResult<impl IntoResponse> {
    let study = app.by_session(&sid)?;
    let payload = study.lock().expect("study lock").payload(&sid)?;
    Ok(Json(payload))
}

async fn advance(State(app): State<AppState>, Path(sid): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let body: AdvanceBody = parse_body(&body)?;
    let study = app.by_session(&sid)?;
    let phase = with_study(study, move |s| s.advance(&sid, body.survey)).await?;
    Ok(Json(PhaseReply { phase }))
}

async fn comprehension(
    State(app): State<AppState>,
    Path(sid): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let body: ComprehensionBody = parse_body(&body)?;
    let study = app.by_session(&sid)?;
    let result = with_study(study, move |s| s.submit_comprehension(&sid, body.answers)).await?;
    Ok(Json(result))
}

async fn respond(State(app): State<AppState>, Path(sid): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let body: ResponseBody = parse_body(&body)?;
    let study = app.by_session(&sid)?;
    let ack = with_study(study, move |s| {
        s.submit_response(&sid, &body.item, body.answer, body.elapsed_ms)
    })
    .await?;
    Ok(Json(ack))
}
