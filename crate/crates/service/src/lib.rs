//! HTTP front end for map-building and script-replay sessions.
//!
//! Every mutation loads the session document, applies one core operation
//! and writes the document back, holding that session's lock throughout.
//! Different sessions never share a lock or a file.

mod error;
pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use nnm_core::{
    Clock, Embedder, Frame, GenerationBackend, LayoutParams, MapGraph, NodeId, PendingFragment, PromptTemplate, RetryPolicy,
    Script, SessionDocument, SimilarTopic, StepDirection, StepOutcome,
};
use serde::{Deserialize, Serialize};

pub use error::ApiError;
pub use store::{Store, StoreError};

/// Longest animation step a single frame request may advance.
pub const MAX_FRAME_DT: Duration = Duration::from_millis(100);

pub struct AppState {
    pub store: Store,
    pub backend: Arc<dyn GenerationBackend>,
    pub embedder: Arc<dyn Embedder>,
    pub clock: Arc<dyn Clock>,
    pub retry: RetryPolicy,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    last_frame: Mutex<HashMap<String, DateTime<Utc>>>,
}

impl AppState {
    pub fn new(store: Store, backend: Arc<dyn GenerationBackend>, embedder: Arc<dyn Embedder>, clock: Arc<dyn Clock>) -> Self {
        Self {
            store,
            backend,
            embedder,
            clock,
            retry: RetryPolicy::default(),
            locks: Mutex::new(HashMap::new()),
            last_frame: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn lock_for(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.locks
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry(id.to_owned())
            .or_default()
            .clone()
    }

    /// Seconds since this session's previous frame, capped.
    fn frame_dt(&self, id: &str, now: DateTime<Utc>) -> f64 {
        let mut last = self.last_frame.lock().unwrap_or_else(|e| e.into_inner());
        let dt = last
            .insert(id.to_owned(), now)
            .and_then(|prev| (now - prev).to_std().ok())
            .unwrap_or_default();
        dt.min(MAX_FRAME_DT).as_secs_f64()
    }
}

type Shared = Arc<AppState>;

/// Runs `f` against the stored document under the session lock and saves
/// the result. A failing `f` leaves the stored document untouched.
async fn mutate<T, F>(state: &Shared, id: String, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut SessionDocument, &AppState) -> Result<T, ApiError> + Send + 'static,
{
    let lock = state.lock_for(&id);
    let _guard = lock.lock_owned().await;
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let mut doc = state.store.load(&id)?;
        let out = f(&mut doc, &state)?;
        state.store.save(&doc)?;
        Ok(out)
    })
    .await?
}

async fn read<T, F>(state: &Shared, id: String, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&SessionDocument, &AppState) -> Result<T, ApiError> + Send + 'static,
{
    let state = state.clone();
    tokio::task::spawn_blocking(move || f(&state.store.load(&id)?, &state)).await?
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).put(put_session))
        .route("/sessions/{id}/prompt", post(submit_prompt))
        .route("/sessions/{id}/fragments/{fid}/assign", post(assign_fragment))
        .route("/sessions/{id}/layout", post(run_layout))
        .route("/sessions/{id}/similar", post(similar))
        .route("/sessions/{id}/script", put(load_script))
        .route("/sessions/{id}/script/step", post(step_script))
        .route("/sessions/{id}/frame", get(frame))
        .route("/sessions/{id}/trajectory.csv", get(trajectory_csv))
        .route("/sessions/{id}/export.gml", get(export_gml))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: Shared) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, data_dir = %state.store.dir().display(), "listening");
    axum::serve(listener, router(state)).await
}

async fn create_session(State(state): State<Shared>) -> Result<(StatusCode, Json<SessionDocument>), ApiError> {
    let id = uuid::Uuid::new_v4().simple().to_string();
    let doc = SessionDocument::new(id, state.clock.now());
    let store = state.store.clone();
    let saved = doc.clone();
    tokio::task::spawn_blocking(move || store.save(&saved)).await??;
    Ok((StatusCode::CREATED, Json(doc)))
}

async fn get_session(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<SessionDocument>, ApiError> {
    read(&state, id, |doc, _| Ok(doc.clone())).await.map(Json)
}

/// Stores a whole document, creating the session if needed.
async fn put_session(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Json(doc): Json<SessionDocument>,
) -> Result<Json<SessionDocument>, ApiError> {
    if doc.session_id != id {
        return Err(ApiError::bad_request(format!("document is for session {:?}", doc.session_id)));
    }
    if doc.schema_version != nnm_core::session::SESSION_SCHEMA_VERSION {
        return Err(ApiError::bad_request(format!("unsupported schema_version {}", doc.schema_version)));
    }
    doc.graph.validate().map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let lock = state.lock_for(&id);
    let _guard = lock.lock_owned().await;
    let store = state.store.clone();
    let saved = doc.clone();
    tokio::task::spawn_blocking(move || store.save(&saved)).await??;
    Ok(Json(doc))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptRequest {
    pub template: String,
    pub seed: String,
    #[serde(default)]
    pub seed_group: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PendingList {
    pub pending: Vec<PendingFragment>,
}

async fn submit_prompt(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<PromptRequest>,
) -> Result<Json<PendingList>, ApiError> {
    let template = PromptTemplate::new(req.template).map_err(|e| ApiError::bad_request(e.to_string()))?;
    mutate(&state, id, move |doc, st| {
        let pending = doc.submit_prompt(
            &template,
            &req.seed,
            req.seed_group.as_deref(),
            &st.backend,
            &st.retry,
            st.clock.now(),
        )?;
        Ok(PendingList { pending: pending.to_vec() })
    })
    .await
    .map(Json)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssignRequest {
    pub node: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssignResponse {
    pub node_id: NodeId,
}

async fn assign_fragment(
    State(state): State<Shared>,
    Path((id, fid)): Path<(String, u64)>,
    Json(req): Json<AssignRequest>,
) -> Result<Json<AssignResponse>, ApiError> {
    mutate(&state, id, move |doc, st| {
        let node_id = doc.assign_fragment(fid, &req.node, st.clock.now())?;
        Ok(AssignResponse { node_id })
    })
    .await
    .map(Json)
}

async fn run_layout(
    State(state): State<Shared>,
    Path(id): Path<String>,
    params: Option<Json<LayoutParams>>,
) -> Result<Json<MapGraph>, ApiError> {
    let params = params.map(|Json(p)| p).unwrap_or_default();
    mutate(&state, id, move |doc, st| {
        doc.run_layout(&params, st.clock.now())?;
        Ok(doc.graph.clone())
    })
    .await
    .map(Json)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarRequest {
    pub text: String,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    5
}

async fn similar(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<SimilarRequest>,
) -> Result<Json<Vec<SimilarTopic>>, ApiError> {
    read(&state, id, move |doc, st| Ok(doc.similar(&req.text, req.k, &st.embedder)?))
        .await
        .map(Json)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptLoaded {
    pub steps: usize,
}

async fn load_script(State(state): State<Shared>, Path(id): Path<String>, body: String) -> Result<Json<ScriptLoaded>, ApiError> {
    let script = Script::from_json(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    mutate(&state, id, move |doc, st| {
        let steps = script.len();
        doc.load_script(script, st.clock.now());
        Ok(ScriptLoaded { steps })
    })
    .await
    .map(Json)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRequest {
    pub direction: StepDirection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepResponse {
    pub outcome: StepOutcome,
    pub cursor: usize,
}

async fn step_script(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<StepRequest>,
) -> Result<Json<StepResponse>, ApiError> {
    mutate(&state, id, move |doc, st| {
        let outcome = doc.step_script(req.direction, &st.embedder, st.clock.now())?;
        let cursor = doc.evaluation.as_ref().map_or(0, |e| e.cursor);
        Ok(StepResponse { outcome, cursor })
    })
    .await
    .map(Json)
}

async fn frame(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<Frame>, ApiError> {
    mutate(&state, id.clone(), move |doc, st| Ok(doc.frame(st.frame_dt(&id, st.clock.now()))))
        .await
        .map(Json)
}

async fn trajectory_csv(State(state): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let csv = read(&state, id, |doc, _| Ok(doc.trajectory_csv())).await?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv))
}

async fn export_gml(State(state): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let gml = read(&state, id, |doc, _| Ok(doc.export_gml())).await?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], gml))
}
