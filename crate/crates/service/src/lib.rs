//! HTTP service that runs kitchen games for players, shows each one the tip
//! of a randomly assigned study condition, and stores every finished round
//! as a JSONL trace.

pub mod session;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use kitchen_api::{CreateSession, ErrorBody, FinishResponse, SessionView, SubmitAssignments, TipResponse};
use kitchen_core::eval::{Condition, Configuration};
use kitchen_core::mdp::derive_seed;
use kitchen_core::trace::{append_jsonl, TraceRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio::sync::{Mutex, RwLock};
use uuid::Uuid;

use session::{CommitOutcome, Session, SessionError};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Drives session ids and condition draws.
    pub seed: u64,
    /// Where per-session trace files go. Traces are kept in memory only when unset.
    pub traces_dir: Option<PathBuf>,
    pub default_configuration: Configuration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { seed: 0, traces_dir: None, default_configuration: Configuration::Normal }
    }
}

struct Entry {
    session: Session,
    traces: Vec<TraceRecord>,
    written: usize,
}

struct Inner {
    config: ServiceConfig,
    created: AtomicU64,
    sessions: RwLock<HashMap<Uuid, Arc<Mutex<Entry>>>>,
}

/// Shared service state. Each session sits behind its own lock, so requests
/// for one session run in arrival order while different sessions proceed
/// independently.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self(Arc::new(Inner { config, created: AtomicU64::new(0), sessions: RwLock::new(HashMap::new()) }))
    }

    /// Traces of the finished rounds of `id`, in play order.
    pub async fn traces(&self, id: Uuid) -> Option<Vec<TraceRecord>> {
        let entry = self.0.sessions.read().await.get(&id).cloned()?;
        let e = entry.lock().await;
        Some(e.traces.clone())
    }

    async fn entry(&self, id: &str) -> Result<Arc<Mutex<Entry>>, ApiError> {
        let unknown = || ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id:?}"));
        let id: Uuid = id.parse().map_err(|_| unknown())?;
        self.0.sessions.read().await.get(&id).cloned().ok_or_else(unknown)
    }
}

/// Error responses: a status plus `{code, message, reason?}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { code: code.into(), message: message.into(), reason: None } }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match e {
            SessionError::Finished => StatusCode::CONFLICT,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        let mut err = ApiError::new(status, e.code(), e.to_string());
        err.body.reason = e.reason().map(String::from);
        err
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(serde_json::json!({"status": "ok"})) }))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/assignments", post(submit_assignments))
        .route("/sessions/{id}/commit", post(commit))
        .route("/sessions/{id}/tip", get(get_tip))
        .route("/sessions/{id}/finish", post(finish))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .with_state(state)
}

async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let Json(req) = body?;
    let inner = &state.0;
    let configuration = req.configuration.unwrap_or(inner.config.default_configuration);
    let conditions = configuration.conditions();
    let n = inner.created.fetch_add(1, Ordering::SeqCst);
    let condition: Condition = match &req.condition {
        Some(label) => conditions.iter().find(|c| &c.label == label).cloned().ok_or_else(|| {
            ApiError::new(StatusCode::BAD_REQUEST, "unknown_condition", format!("no condition {label:?}"))
        })?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(inner.config.seed, &[n]));
            conditions[rng.random_range(0..conditions.len())].clone()
        }
    };
    let id = Uuid::from_u64_pair(derive_seed(inner.config.seed, &[n, 1]), derive_seed(inner.config.seed, &[n, 2]));
    let tips = (0..configuration.rounds().len())
        .map(|r| configuration.shared_tip(r).or_else(|| condition.tip.clone()))
        .collect();
    let session = Session::new(id, configuration, condition.label.clone(), tips, req.client);
    let view = session.view();
    tracing::info!(session = %id, %configuration, condition = %condition.label, "session created");
    let entry = Entry { session, traces: Vec::new(), written: 0 };
    inner.sessions.write().await.insert(id, Arc::new(Mutex::new(entry)));
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<SessionView> {
    let entry = state.entry(&id).await?;
    let e = entry.lock().await;
    Ok(Json(e.session.view()))
}

async fn submit_assignments(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<SubmitAssignments>, JsonRejection>,
) -> ApiResult<SessionView> {
    let Json(req) = body?;
    let entry = state.entry(&id).await?;
    let mut e = entry.lock().await;
    e.session.submit(&req.assignments, req.replace)?;
    Ok(Json(e.session.view()))
}

async fn commit(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<SessionView> {
    let entry = state.entry(&id).await?;
    let mut e = entry.lock().await;
    if let CommitOutcome::RoundOver(record) = e.session.commit()? {
        if persist(&state.0.config, &record).await {
            e.written += 1;
        }
        e.traces.push(*record);
    }
    Ok(Json(e.session.view()))
}

async fn persist(config: &ServiceConfig, record: &TraceRecord) -> bool {
    let Some(dir) = config.traces_dir.clone() else {
        return false;
    };
    let record = record.clone();
    let path = dir.join(format!("{}.jsonl", record.session_id));
    let result = tokio::task::spawn_blocking(move || {
        std::fs::create_dir_all(&dir)?;
        append_jsonl(&path, &record)
    })
    .await;
    match result {
        Ok(Ok(())) => true,
        Ok(Err(e)) => {
            tracing::error!(error = %e, "failed to write trace");
            false
        }
        Err(e) => {
            tracing::error!(error = %e, "trace writer panicked");
            false
        }
    }
}

async fn get_tip(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<TipResponse> {
    let entry = state.entry(&id).await?;
    let e = entry.lock().await;
    Ok(Json(TipResponse { round: e.session.round(), tip: e.session.tip_view() }))
}

async fn finish(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<FinishResponse> {
    let entry = state.entry(&id).await?;
    let mut e = entry.lock().await;
    let abandoned_round = e.session.finish();
    Ok(Json(FinishResponse {
        session_id: e.session.id,
        rounds: e.session.history().to_vec(),
        traces_written: e.written,
        abandoned_round,
    }))
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: std::net::SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    serve_on(tokio::net::TcpListener::bind(addr).await?, config).await
}

/// Serves on an already bound listener, e.g. one on an ephemeral port.
pub async fn serve_on(listener: tokio::net::TcpListener, config: ServiceConfig) -> std::io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(AppState::new(config))).await
}
