//! JSON-over-HTTP front end. Handlers share one read-only engine; audit
//! appends are serialized inside the store and each session allows one
//! generation in flight.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tracing::{info, warn};

use regrag_core::generation::Turn;

use crate::engine::{Engine, QueryFlags};
use crate::error::{ErrorClass, ServiceError};

#[derive(Debug)]
pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0.class() {
            ErrorClass::Validation => StatusCode::BAD_REQUEST,
            ErrorClass::NotFound => StatusCode::NOT_FOUND,
            ErrorClass::BackendUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ErrorClass::Index | ErrorClass::Other => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let fields = match &self.0 {
            ServiceError::InvalidInput(errs) => json!(errs.0),
            _ => json!([]),
        };
        if status.is_server_error() {
            warn!(error = %self.0, "request failed");
        }
        let body = json!({"error": {"kind": self.0.kind(), "message": self.0.to_string(), "fields": fields}});
        (status, Json(body)).into_response()
    }
}

fn bad_json(rejection: JsonRejection) -> ApiError {
    ApiError(ServiceError::Validation(rejection.body_text()))
}

struct Session {
    history: Vec<Turn>,
    last_used: Instant,
    gate: Arc<tokio::sync::Mutex<()>>,
}

/// Conversation histories keyed by session id. Kept in memory only and
/// dropped once idle for longer than the TTL.
pub struct Sessions {
    ttl: Duration,
    map: Mutex<HashMap<String, Session>>,
}

impl Sessions {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            map: Mutex::new(HashMap::new()),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, Session>> {
        self.map.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Gate and history snapshot for `id`, creating the session if needed.
    fn checkout(&self, id: &str) -> (Arc<tokio::sync::Mutex<()>>, Vec<Turn>) {
        let now = Instant::now();
        let mut map = self.lock();
        map.retain(|_, s| now.duration_since(s.last_used) <= self.ttl);
        let s = map.entry(id.to_string()).or_insert_with(|| Session {
            history: Vec::new(),
            last_used: now,
            gate: Arc::new(tokio::sync::Mutex::new(())),
        });
        s.last_used = now;
        (Arc::clone(&s.gate), s.history.clone())
    }

    fn record(&self, id: &str, turn: Turn) {
        if let Some(s) = self.lock().get_mut(id) {
            s.history.push(turn);
            s.last_used = Instant::now();
        }
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub sessions: Arc<Sessions>,
}

impl AppState {
    pub fn new(engine: Arc<Engine>) -> Self {
        let ttl = Duration::from_secs(engine.config().session_ttl_secs);
        Self {
            engine,
            sessions: Arc::new(Sessions::new(ttl)),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub question: String,
    #[serde(default)]
    pub session_id: Option<String>,
    #[serde(default)]
    pub flags: QueryFlags,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorsRequest {
    pub op: Value,
    #[serde(default)]
    pub indicators: Vec<String>,
    #[serde(default)]
    pub runs: Option<usize>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/query", post(query))
        .route("/indicators", post(indicators))
        .route("/audit/{id}", get(audit))
        .route("/chunks/{id}", get(chunk))
        .with_state(state)
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(ServiceError::Internal(e.to_string())))?
        .map_err(ApiError)
}

async fn health(State(st): State<AppState>) -> Json<Value> {
    let corpus = st.engine.retriever().corpus();
    Json(json!({
        "status": "ok",
        "chunks": corpus.len(),
        "corpus_fingerprint": corpus.fingerprint(),
    }))
}

async fn query(
    State(st): State<AppState>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let Json(req) = body.map_err(bad_json)?;
    let session = req.session_id.clone();
    let (gate, history) = match &session {
        Some(id) => {
            let (gate, history) = st.sessions.checkout(id);
            (Some(gate), history)
        }
        None => (None, Vec::new()),
    };
    let _guard = match &gate {
        Some(g) => Some(g.lock().await),
        None => None,
    };
    let engine = Arc::clone(&st.engine);
    let question = req.question.clone();
    let flags = req.flags.clone();
    let resp = blocking(move || engine.answer(&question, &flags, &history, None)).await?;
    if let Some(id) = &session {
        st.sessions.record(
            id,
            Turn {
                question: req.question,
                answer: resp.answer.clone(),
            },
        );
    }
    info!(audit_id = %resp.audit_id, evidence = resp.included_ids.len(), "query answered");
    Ok(Json(serde_json::to_value(resp).map_err(|e| ApiError(ServiceError::Internal(e.to_string())))?))
}

async fn indicators(
    State(st): State<AppState>,
    body: Result<Json<IndicatorsRequest>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let Json(req) = body.map_err(bad_json)?;
    let engine = Arc::clone(&st.engine);
    let resp = blocking(move || engine.indicators(&req.op, &req.indicators, req.runs)).await?;
    info!(audit_id = %resp.audit_id, "indicators computed");
    Ok(Json(serde_json::to_value(resp).map_err(|e| ApiError(ServiceError::Internal(e.to_string())))?))
}

async fn audit(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let engine = Arc::clone(&st.engine);
    let record = blocking(move || {
        engine
            .audit()
            .get(&id)?
            .ok_or_else(|| ServiceError::NotFound(format!("audit record {id}")))
    })
    .await?;
    Ok(Json(serde_json::to_value(record).map_err(|e| ApiError(ServiceError::Internal(e.to_string())))?))
}

async fn chunk(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let c = st
        .engine
        .chunk(&id)
        .ok_or_else(|| ApiError(ServiceError::NotFound(format!("chunk {id}"))))?;
    Ok(Json(serde_json::to_value(c).map_err(|e| ApiError(ServiceError::Internal(e.to_string())))?))
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: AppState, addr: &str) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServiceError::Config(format!("cannot bind {addr}: {e}")))?;
    info!(%addr, "listening");
    axum::serve(listener, router(state))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))
}
