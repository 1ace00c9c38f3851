//! HTTP/JSON API over diagnosis sessions.
//!
//! | method | path                         | body                                   |
//! |--------|------------------------------|----------------------------------------|
//! | POST   | `/sessions`                  | `{config?, initial_evidence?}`         |
//! | GET    | `/sessions/{id}`             |                                        |
//! | POST   | `/sessions/{id}/answer`      | `{finding, value: bool \| null}`       |
//! | POST   | `/sessions/{id}/override`    | `{finding, value: bool \| null}`       |
//! | POST   | `/sessions/{id}/diagnose`    |                                        |
//! | GET    | `/sessions/{id}/transcript`  | JSON lines                             |
//! | GET    | `/network/findings`          |                                        |
//! | GET    | `/network/diseases`          |                                        |
//!
//! Findings may be named or given by id. A `null` answer skips the question;
//! a `null` override clears the finding. Every session view carries the step
//! count, the current decision, and the stop reason once diagnosed.
//!
//! The network is loaded once and shared read-only. Each session sits behind
//! its own FIFO mutex, so requests to one session apply in arrival order while
//! different sessions proceed independently. Inference runs on the blocking
//! pool.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ddx_core::session::{Decision, Diagnosis, Session, SessionConfig, SessionState, Status, StopReason};
use ddx_core::{Error as CoreError, Evidence, FindingId, QmrNetwork};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

#[derive(Debug, Clone, Default)]
pub struct ServiceOptions {
    /// Permissive CORS for a UI served from another origin.
    pub cors: bool,
    /// Static assets served for any path the API does not handle.
    pub static_dir: Option<PathBuf>,
    /// Each session's transcript is rewritten to `<dir>/<id>.jsonl` after every change.
    pub transcript_dir: Option<PathBuf>,
    /// Used for fields a create request leaves out.
    pub defaults: SessionConfig,
}

struct Entry {
    created_at: u64,
    state: SessionState,
}

struct AppState {
    net: Arc<QmrNetwork>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    options: ServiceOptions,
}

pub fn router(net: Arc<QmrNetwork>, options: ServiceOptions) -> Router {
    let cors = options.cors;
    let static_dir = options.static_dir.clone();
    let state = Arc::new(AppState { net, sessions: RwLock::new(HashMap::new()), options });
    let mut app = Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/answer", post(answer))
        .route("/sessions/{id}/override", post(override_finding))
        .route("/sessions/{id}/diagnose", post(diagnose))
        .route("/sessions/{id}/transcript", get(transcript))
        .route("/network/findings", get(list_findings))
        .route("/network/diseases", get(list_diseases))
        .with_state(state);
    if let Some(dir) = static_dir {
        app = app.fallback_service(tower_http::services::ServeDir::new(dir));
    }
    if cors {
        app = app.layer(tower_http::cors::CorsLayer::permissive());
    }
    app
}

/// Serve until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    Conflict(String),
    Unprocessable(String),
    Internal(String),
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::SessionClosed | CoreError::AlreadyObserved(_) | CoreError::BudgetExhausted { .. } => {
                ApiError::Conflict(msg)
            }
            CoreError::UnknownFindingId(_)
            | CoreError::UnknownFindingName(_)
            | CoreError::UnknownDiseaseId(_)
            | CoreError::UnknownDiseaseName(_)
            | CoreError::ConflictingEvidence(_)
            | CoreError::InvalidConfig(_)
            | CoreError::KOutOfRange { .. } => ApiError::Unprocessable(msg),
            _ => ApiError::Internal(msg),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::Unprocessable(e.body_text())
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
    code: &'static str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, error) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, "not_found", m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, "conflict", m),
            ApiError::Unprocessable(m) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid", m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", m),
        };
        (status, Json(ErrorBody { error, code })).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// A finding by name or by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FindingRef {
    Id(usize),
    Name(String),
}

impl FindingRef {
    fn resolve(&self, net: &QmrNetwork) -> Result<FindingId, CoreError> {
        match self {
            FindingRef::Id(i) if net.contains_finding(FindingId(*i)) => Ok(FindingId(*i)),
            FindingRef::Id(i) => Err(CoreError::UnknownFindingId(FindingId(*i))),
            FindingRef::Name(n) => net.finding_id(n.trim()).ok_or_else(|| CoreError::UnknownFindingName(n.clone())),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvidenceRequest {
    pub positive: Vec<FindingRef>,
    pub negative: Vec<FindingRef>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CreateRequest {
    /// Fields left out fall back to the server defaults.
    pub config: Option<serde_json::Value>,
    pub initial_evidence: EvidenceRequest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FindingUpdate {
    pub finding: FindingRef,
    /// `null`: skip (answer) or clear (override).
    pub value: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedFinding {
    pub id: FindingId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedDisease {
    pub id: usize,
    pub name: String,
    pub prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub id: usize,
    pub name: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DecisionView {
    Suggest { finding: FindingId, name: String, utility: f64 },
    Diagnose { reason: StopReason },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceView {
    pub positive: Vec<NamedFinding>,
    pub negative: Vec<NamedFinding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisView {
    pub ranked: Vec<RankedEntry>,
    pub reason: StopReason,
    pub steps: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub status: Status,
    pub step: usize,
    pub max_steps: usize,
    pub config: SessionConfig,
    pub evidence: EvidenceView,
    pub skipped: Vec<NamedFinding>,
    /// All diseases, most probable first.
    pub posterior: Vec<RankedEntry>,
    pub degenerate: bool,
    /// What the engine proposes next; absent once diagnosed.
    pub decision: Option<DecisionView>,
    pub stop_reason: Option<StopReason>,
    pub diagnosis: Option<DiagnosisView>,
}

fn named(net: &QmrNetwork, f: FindingId) -> NamedFinding {
    NamedFinding { id: f, name: net.finding_name(f).to_string() }
}

fn view(net: &QmrNetwork, id: &str, entry: &Entry) -> SessionView {
    let st = &entry.state;
    let post = ddx_core::posterior(net, &st.evidence).expect("session evidence is valid");
    let rank = |d: ddx_core::DiseaseId, prob: f64| RankedEntry { id: d.index(), name: net.disease_name(d).to_string(), prob };
    let decision = match (st.status, st.pending) {
        (Status::Active, Some(Decision::Suggest(s))) => {
            Some(DecisionView::Suggest { finding: s.finding, name: net.finding_name(s.finding).to_string(), utility: s.utility })
        }
        (Status::Active, Some(Decision::Diagnose { reason })) => Some(DecisionView::Diagnose { reason }),
        _ => None,
    };
    let diagnosis = st.diagnosis.as_ref().map(|d: &Diagnosis| DiagnosisView {
        ranked: d.ranked.iter().map(|r| rank(r.disease, r.prob)).collect(),
        reason: d.reason,
        steps: d.steps,
        degenerate: d.posterior.degenerate,
    });
    SessionView {
        session_id: id.to_string(),
        created_at: entry.created_at,
        status: st.status,
        step: st.step,
        max_steps: st.config.max_steps,
        config: st.config,
        evidence: EvidenceView {
            positive: st.evidence.positive().iter().map(|&f| named(net, f)).collect(),
            negative: st.evidence.negative().iter().map(|&f| named(net, f)).collect(),
        },
        skipped: st.declined.iter().map(|&f| named(net, f)).collect(),
        posterior: post.ranking().into_iter().map(|(d, p)| rank(d, p)).collect(),
        degenerate: post.degenerate,
        decision,
        stop_reason: diagnosis.as_ref().map(|d| d.reason),
        diagnosis,
    }
}

fn merged_config(defaults: &SessionConfig, patch: Option<serde_json::Value>) -> Result<SessionConfig, ApiError> {
    let Some(patch) = patch else { return Ok(*defaults) };
    let mut base = serde_json::to_value(defaults).expect("config serializes");
    merge_json(&mut base, patch);
    let cfg: SessionConfig = serde_json::from_value(base).map_err(|e| ApiError::Unprocessable(format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn merge_json(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                merge_json(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl AppState {
    fn entry(&self, id: &str) -> ApiResult<Arc<Mutex<Entry>>> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no session {id:?}")))
    }

    fn persist(&self, id: &str, state: &SessionState) {
        let Some(dir) = &self.options.transcript_dir else { return };
        let mut buf = Vec::new();
        let written = ddx_core::session::write_transcript(&mut buf, &state.transcript)
            .and_then(|_| std::fs::write(dir.join(format!("{id}.jsonl")), buf));
        if let Err(e) = written {
            tracing::warn!(session = id, error = %e, "could not write transcript");
        }
    }
}

/// Apply `op` to one session under its lock, on the blocking pool. The stored
/// state only changes when `op` succeeds; the next decision is computed
/// afterwards for active sessions.
async fn with_session<F>(app: Arc<AppState>, id: String, op: F) -> ApiResult<SessionView>
where
    F: FnOnce(&mut Session<'_>) -> Result<(), ApiError> + Send + 'static,
{
    let entry = app.entry(&id)?;
    let mut guard = entry.lock_owned().await;
    tokio::task::spawn_blocking(move || {
        let net = app.net.clone();
        let mut s = Session::resume(&net, guard.state.clone())?;
        let before = s.transcript().len();
        op(&mut s)?;
        if s.is_active() {
            s.next_suggestion()?;
        }
        let changed = s.transcript().len() != before;
        guard.state = s.into_state();
        if changed {
            app.persist(&id, &guard.state);
        }
        Ok(view(&net, &id, &guard))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Result<Json<CreateRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let Json(req) = body?;
    let cfg = merged_config(&app.options.defaults, req.config)?;
    let net = &app.net;
    let resolve = |refs: &[FindingRef]| refs.iter().map(|r| r.resolve(net)).collect::<Result<Vec<_>, _>>();
    let ev = Evidence::from_sets(resolve(&req.initial_evidence.positive)?, resolve(&req.initial_evidence.negative)?)?;
    let state = Session::create(net, cfg, ev)?.into_state();
    let id = uuid::Uuid::new_v4().simple().to_string();
    app.sessions
        .write()
        .expect("session map lock")
        .insert(id.clone(), Arc::new(Mutex::new(Entry { created_at: now(), state })));
    tracing::info!(session = %id, "created");
    let view = with_session(app, id, |_| Ok(())).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    with_session(app, id, |_| Ok(())).await.map(Json)
}

async fn answer(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<FindingUpdate>, JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    let Json(req) = body?;
    with_session(app, id, move |s| {
        let f = req.finding.resolve(s.network())?;
        match req.value {
            Some(v) => s.answer(f, v)?,
            None => s.skip(f)?,
        }
        Ok(())
    })
    .await
    .map(Json)
}

async fn override_finding(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<FindingUpdate>, JsonRejection>,
) -> ApiResult<Json<SessionView>> {
    let Json(req) = body?;
    with_session(app, id, move |s| {
        let f = req.finding.resolve(s.network())?;
        Ok(s.override_finding(f, req.value)?)
    })
    .await
    .map(Json)
}

async fn diagnose(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    with_session(app, id, |s| {
        s.finalize()?;
        Ok(())
    })
    .await
    .map(Json)
}

async fn transcript(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let entry = app.entry(&id)?;
    let guard = entry.lock().await;
    let mut buf = Vec::new();
    ddx_core::session::write_transcript(&mut buf, &guard.state.transcript).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], buf).into_response())
}

async fn list_findings(State(app): State<Arc<AppState>>) -> Json<Vec<NamedFinding>> {
    Json(app.net.findings().iter().map(|f| NamedFinding { id: f.id, name: f.name.clone() }).collect())
}

async fn list_diseases(State(app): State<Arc<AppState>>) -> Json<Vec<NamedDisease>> {
    Json(app.net.diseases().iter().map(|d| NamedDisease { id: d.id.index(), name: d.name.clone(), prior: d.prior }).collect())
}
