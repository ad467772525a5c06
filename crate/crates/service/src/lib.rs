//! HTTP façade over the workspace engine.
//!
//! Every request and response body is a [`WireEnvelope`] in canonical JSON.
//! Sessions live in memory; mutations on one session are serialized by its
//! lock, and a failed request never changes session state.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, RwLock};
use zonekit_core::pipeline::{Engine, PipelineConfig, PipelineError};
use zonekit_core::recommender::{FixtureFile, Goal, HttpProvider, HttpProviderConfig, MockProvider, Provider};
use zonekit_core::wire::{
    self, ErrorBody, EventAck, EventBatch, OpRequest, OpResult, RecommendBody, ResolveResult, WireDocument, WireEnvelope, WireError,
    WorkspaceCreated, WorkspaceSnapshot,
};
use zonekit_core::workspace::{ProposalStatus, Resolution, Workspace, WorkspaceError, WorkspaceInit, WorkspaceState};

/// Service configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub pipeline: PipelineConfig,
    pub provider: ProviderSettings,
    /// Write a snapshot file per session after every mutation.
    pub snapshot_dir: Option<PathBuf>,
    pub default_engine: Engine,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            pipeline: PipelineConfig::default(),
            provider: ProviderSettings::default(),
            snapshot_dir: None,
            default_engine: Engine::Mock,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderSettings {
    Mock {
        #[serde(default)]
        fixtures: Option<PathBuf>,
    },
    Http(HttpProviderConfig),
}

impl Default for ProviderSettings {
    fn default() -> Self {
        ProviderSettings::Mock { fixtures: None }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// `ZONEKIT_BIND` and the provider variables override the file.
    pub fn with_env(mut self) -> Self {
        if let Ok(b) = std::env::var("ZONEKIT_BIND") {
            self.bind = b;
        }
        match &mut self.provider {
            ProviderSettings::Http(c) => *c = c.clone().with_env(),
            ProviderSettings::Mock { .. } => {
                if let Some(c) = HttpProviderConfig::from_env() {
                    self.provider = ProviderSettings::Http(c);
                }
            }
        }
        self
    }

    pub fn build_provider(&self) -> anyhow::Result<Arc<dyn Provider>> {
        Ok(match &self.provider {
            ProviderSettings::Mock { fixtures: None } => Arc::new(MockProvider::bundled()),
            ProviderSettings::Mock { fixtures: Some(p) } => {
                let text = std::fs::read_to_string(p)?;
                let file: FixtureFile = wire::parse_body(&text)?;
                Arc::new(MockProvider::new(file))
            }
            ProviderSettings::Http(c) => Arc::new(HttpProvider::new(c.clone())?),
        })
    }
}

type Session = Arc<Mutex<Workspace>>;

pub struct AppState {
    sessions: RwLock<HashMap<String, Session>>,
    provider: Arc<dyn Provider>,
    config: ServiceConfig,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    pub fn new(config: ServiceConfig, provider: Arc<dyn Provider>) -> SharedState {
        Arc::new(Self { sessions: RwLock::new(HashMap::new()), provider, config })
    }

    async fn session(&self, id: &str) -> Result<Session, ApiError> {
        self.sessions.read().await.get(id).cloned().ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no workspace {id}")))
    }

    fn persist(&self, state: &WorkspaceState) {
        let Some(dir) = &self.config.snapshot_dir else { return };
        let snap = WorkspaceSnapshot { revision: state.revision, state: state.clone() };
        let path = dir.join(format!("{}.json", state.id));
        match wire::encode(&snap, None) {
            Ok(text) => {
                if let Err(e) = std::fs::write(&path, text + "\n") {
                    tracing::warn!("snapshot {}: {e}", path.display());
                }
            }
            Err(e) => tracing::warn!("snapshot {}: {e}", path.display()),
        }
    }
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/v1/workspaces", post(create_workspace))
        .route("/v1/workspaces/:id", get(get_workspace))
        .route("/v1/workspaces/:id/recommend", post(recommend))
        .route("/v1/workspaces/:id/resolve", post(resolve))
        .route("/v1/workspaces/:id/events", post(ingest_events))
        .route("/v1/workspaces/:id/ops", post(apply_op))
        .route("/v1/workspaces/:id/undo", post(undo))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { code: code.into(), message: message.into(), path: None } }
    }
}

impl From<WireError> for ApiError {
    fn from(e: WireError) -> Self {
        let mut err = ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string());
        if let WireError::Field { path, message } = e {
            err.body.message = message;
            err.body.path = Some(path);
        }
        err
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let (status, code) = if e.is_timeout() {
            (StatusCode::GATEWAY_TIMEOUT, "provider_timeout")
        } else if e.is_provider() {
            (StatusCode::BAD_GATEWAY, "provider_error")
        } else if matches!(e, PipelineError::Config(_)) {
            (StatusCode::INTERNAL_SERVER_ERROR, "config")
        } else {
            (StatusCode::UNPROCESSABLE_ENTITY, "pipeline")
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<WorkspaceError> for ApiError {
    fn from(e: WorkspaceError) -> Self {
        use WorkspaceError as W;
        let (status, code) = match &e {
            W::UnknownZone(_) | W::UnknownWindow(_) => (StatusCode::NOT_FOUND, "not_found"),
            W::Occupied(_) | W::DuplicateZone(_) | W::DuplicateWindow(_) => (StatusCode::CONFLICT, "conflict"),
            W::PendingExists(_) | W::NoPending | W::ProposalMismatch { .. } | W::StaleProposal(_) => (StatusCode::CONFLICT, "proposal_state"),
            W::StaleRevision { .. } => (StatusCode::CONFLICT, "stale_revision"),
            W::NothingToUndo => (StatusCode::CONFLICT, "nothing_to_undo"),
            W::Pipeline(p) => return ApiError::from(p.clone()),
            _ => (StatusCode::BAD_REQUEST, "invalid"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        envelope(self.status, &self.body)
    }
}

fn envelope<D: WireDocument>(status: StatusCode, body: &D) -> Response {
    match wire::encode(body, None) {
        Ok(text) => (status, [(header::CONTENT_TYPE, "application/json")], text).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

fn decode<D: WireDocument>(text: &str) -> Result<D, ApiError> {
    Ok(WireEnvelope::parse(text)?.decode()?)
}

fn snapshot(state: &WorkspaceState) -> WorkspaceSnapshot {
    WorkspaceSnapshot { revision: state.revision, state: state.clone() }
}

async fn create_workspace(State(app): State<SharedState>, body: String) -> Result<Response, ApiError> {
    let init: WorkspaceInit = decode(&body)?;
    let mut sessions = app.sessions.write().await;
    let id = match &init.id {
        Some(id) if sessions.contains_key(id) => {
            return Err(ApiError::new(StatusCode::CONFLICT, "conflict", format!("workspace {id} already exists")));
        }
        Some(id) => id.clone(),
        None => uuid::Uuid::new_v4().to_string(),
    };
    let state = WorkspaceState::from_init(&init, &id).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid", e.to_string()))?;
    app.persist(&state);
    let created = WorkspaceCreated { id: id.clone(), revision: state.revision };
    sessions.insert(id, Arc::new(Mutex::new(Workspace::new(state))));
    Ok(envelope(StatusCode::CREATED, &created))
}

async fn get_workspace(State(app): State<SharedState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = app.session(&id).await?;
    let ws = session.lock().await;
    Ok(envelope(StatusCode::OK, &snapshot(ws.state())))
}

async fn recommend(State(app): State<SharedState>, Path(id): Path<String>, body: String) -> Result<Response, ApiError> {
    let req: RecommendBody = decode(&body)?;
    let goal = Goal::typed(req.goal).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid", e.to_string()))?;
    let engine = req.engine.unwrap_or(app.config.default_engine);
    let session = app.session(&id).await?;
    let mut ws = session.lock().await;
    if let Some(p) = &ws.state().pending {
        if p.status != ProposalStatus::Failed {
            return Err(WorkspaceError::PendingExists(p.id.clone()).into());
        }
    }
    let base = ws.state().clone();
    let proposal_id = base.next_proposal_id();

    if req.run_async {
        // Mark pending now, fill the proposal in when the pipeline finishes.
        let mut marked = base.clone();
        marked.pending = Some(zonekit_core::workspace::Proposal {
            id: proposal_id.clone(),
            status: ProposalStatus::Pending,
            base_revision: base.revision,
            body: None,
            error: None,
        });
        marked.revision = base.revision + 1;
        ws.commit(marked);
        let pending = ws.state().pending.clone().expect("just set");
        app.persist(ws.state());
        drop(ws);
        let app2 = app.clone();
        tokio::spawn(async move {
            let provider = app2.provider.clone();
            let config = app2.config.pipeline.clone();
            let result = tokio::task::spawn_blocking(move || base.run_pipeline(&goal, engine, Some(provider.as_ref()), &config))
                .await
                .map_err(|e| e.to_string())
                .and_then(|r| r.map_err(|e| e.to_string()));
            let mut ws = session.lock().await;
            let current = ws.state();
            if current.pending.as_ref().map(|p| (&p.id, p.status)) == Some((&proposal_id, ProposalStatus::Pending)) {
                let base_revision = current.pending.as_ref().map_or(0, |p| p.base_revision);
                let next = current.with_proposal(proposal_id, base_revision, result);
                ws.commit(next);
                app2.persist(ws.state());
            }
        });
        return Ok(envelope(StatusCode::ACCEPTED, &pending));
    }

    let provider = app.provider.clone();
    let config = app.config.pipeline.clone();
    let run_state = base.clone();
    let body = tokio::task::spawn_blocking(move || run_state.run_pipeline(&goal, engine, Some(provider.as_ref()), &config))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let next = base.with_proposal(proposal_id, base.revision, Ok(body));
    let proposal = next.pending.clone().expect("just set");
    ws.commit(next);
    app.persist(ws.state());
    Ok(envelope(StatusCode::OK, &proposal))
}

async fn resolve(State(app): State<SharedState>, Path(id): Path<String>, body: String) -> Result<Response, ApiError> {
    let resolution: Resolution = decode(&body)?;
    let session = app.session(&id).await?;
    let mut ws = session.lock().await;
    let (next, record) = ws.state().resolve_proposal(&resolution)?;
    ws.commit(next);
    app.persist(ws.state());
    let state = ws.state().clone();
    Ok(envelope(StatusCode::OK, &ResolveResult { revision: state.revision, state, record }))
}

async fn ingest_events(State(app): State<SharedState>, Path(id): Path<String>, body: String) -> Result<Response, ApiError> {
    let batch: EventBatch = decode(&body)?;
    let session = app.session(&id).await?;
    let mut ws = session.lock().await;
    let (next, stored) = ws.state().ingest_events(&batch.events)?;
    ws.commit(next);
    let ack = EventAck { stored, total: ws.state().log.len(), revision: ws.revision() };
    app.persist(ws.state());
    Ok(envelope(StatusCode::OK, &ack))
}

async fn apply_op(State(app): State<SharedState>, Path(id): Path<String>, body: String) -> Result<Response, ApiError> {
    let req: OpRequest = decode(&body)?;
    let session = app.session(&id).await?;
    let mut ws = session.lock().await;
    if let Some(expected) = req.expected_revision {
        if expected != ws.revision() {
            return Err(WorkspaceError::StaleRevision { expected, actual: ws.revision() }.into());
        }
    }
    let effects = ws.apply(&req.op, &app.config.pipeline)?;
    app.persist(ws.state());
    let state = ws.state().clone();
    Ok(envelope(StatusCode::OK, &OpResult { revision: state.revision, effects, state }))
}

async fn undo(State(app): State<SharedState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = app.session(&id).await?;
    let mut ws = session.lock().await;
    ws.undo()?;
    app.persist(ws.state());
    Ok(envelope(StatusCode::OK, &snapshot(ws.state())))
}
