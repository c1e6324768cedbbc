//! HTTP service for recording demonstrations on the synthetic sites.
//!
//! A session wraps one environment episode. The companion UI reads the
//! marked layout, posts actions, and finishes the session; a successful
//! session is written as a human-annotated demonstration file.
//!
//! | method | path | result |
//! |---|---|---|
//! | GET | `/corpus` | site and task listing |
//! | POST | `/sessions` | `{session_id, observation}`, 201 or 404 |
//! | GET | `/sessions/{id}/observation` | current observation, 200 or 404 |
//! | POST | `/sessions/{id}/action` | observation plus `{terminated, success}`; 409 once terminated, 422 on an invalid action |
//! | POST | `/sessions/{id}/finish` | `{status, path}`; the path is null unless the session succeeded |

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use adaptagent::demostore::{save, validate, Annotator, TrajectoryRecord, DEMO_EXTENSION};
use adaptagent::domkit::DEFAULT_K;
use adaptagent::layout::DEFAULT_VIEWPORT;
use adaptagent::observation::{observe, Observation};
use adaptagent::webenv::{reset, step, Action, Corpus, EnvState, SiteSpec, Task};
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const DEFAULT_TTL: Duration = Duration::from_secs(30 * 60);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SessionStatus {
    Active,
    Succeeded,
    Abandoned,
}

#[derive(Debug, Clone)]
pub struct RecorderConfig {
    /// Directory receiving finished demonstrations.
    pub out_dir: PathBuf,
    pub ttl: Duration,
}

impl RecorderConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RecorderConfig {
            out_dir: out_dir.into(),
            ttl: DEFAULT_TTL,
        }
    }
}

#[derive(Debug)]
struct Session {
    session_id: String,
    site_id: String,
    task_id: String,
    state: EnvState,
    actions: Vec<Action>,
    status: SessionStatus,
    demo_path: Option<PathBuf>,
    touched: Instant,
}

type SessionHandle = Arc<Mutex<Session>>;

/// Shared service state: the immutable corpus and the live sessions.
#[derive(Clone)]
pub struct AppState {
    corpus: Arc<Corpus>,
    config: Arc<RecorderConfig>,
    sessions: Arc<Mutex<HashMap<String, SessionHandle>>>,
}

impl AppState {
    pub fn new(corpus: Corpus, config: RecorderConfig) -> Self {
        AppState {
            corpus: Arc::new(corpus),
            config: Arc::new(config),
            sessions: Arc::default(),
        }
    }

    fn lookup(&self, session_id: &str) -> Result<SessionHandle, ApiError> {
        let mut sessions = self.sessions.lock().expect("session table");
        let ttl = self.config.ttl;
        // Expired sessions are dropped lazily; a session busy with a request
        // is never expired from under it.
        sessions.retain(|_, s| s.try_lock().map_or(true, |s| s.touched.elapsed() < ttl));
        sessions
            .get(session_id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownSession", session_id))
    }

    fn task(&self, site_id: &str, task_id: &str) -> Result<(&SiteSpec, &Task), ApiError> {
        self.corpus
            .site(site_id)
            .and_then(|site| site.task(task_id).map(|task| (site, task)))
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownTask", format!("{site_id}/{task_id}")))
    }

    fn observe(&self, session: &Session) -> Result<Observation, ApiError> {
        let (site, task) = self.task(&session.site_id, &session.task_id)?;
        observe(site, &session.state, &task.instruction, DEFAULT_K, DEFAULT_VIEWPORT)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "ObservationFailed", e))
    }
}

/// JSON error body `{error, message}` with a status code.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    name: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, name: &'static str, message: impl ToString) -> Self {
        ApiError {
            status,
            name,
            message: message.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.name, "message": self.message }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BadRequest", rejection.body_text())
    }
}

/// Claims the session for one mutation; a second concurrent request gets 409.
fn claim(handle: &SessionHandle) -> Result<std::sync::MutexGuard<'_, Session>, ApiError> {
    handle
        .try_lock()
        .map_err(|_| ApiError::new(StatusCode::CONFLICT, "SessionBusy", "another request is in flight"))
}

#[derive(Debug, Serialize)]
struct TaskEntry<'a> {
    task_id: &'a str,
    instruction: &'a str,
    oracle_len: u32,
}

#[derive(Debug, Serialize)]
struct SiteEntry<'a> {
    site_id: &'a str,
    domain_id: &'a str,
    tasks: Vec<TaskEntry<'a>>,
}

async fn list_corpus(State(app): State<AppState>) -> Json<serde_json::Value> {
    let sites: Vec<SiteEntry> = app
        .corpus
        .sites()
        .map(|s| SiteEntry {
            site_id: &s.site_id,
            domain_id: &s.domain_id,
            tasks: s
                .tasks
                .iter()
                .map(|t| TaskEntry {
                    task_id: &t.task_id,
                    instruction: &t.instruction,
                    oracle_len: t.oracle_len,
                })
                .collect(),
        })
        .collect();
    Json(json!({ "corpus_digest": format!("{:016x}", app.corpus.digest()), "sites": sites }))
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub site_id: String,
    pub task_id: String,
}

#[derive(Debug, Serialize)]
struct SessionView {
    session_id: String,
    site_id: String,
    task_id: String,
    instruction: String,
    status: SessionStatus,
    terminated: bool,
    success: bool,
    steps_taken: usize,
    observation: Observation,
}

fn view(app: &AppState, session: &Session) -> Result<SessionView, ApiError> {
    let (_, task) = app.task(&session.site_id, &session.task_id)?;
    Ok(SessionView {
        session_id: session.session_id.clone(),
        site_id: session.site_id.clone(),
        task_id: session.task_id.clone(),
        instruction: task.instruction.clone(),
        status: session.status,
        terminated: session.state.terminated,
        success: session.state.success,
        steps_taken: session.actions.len(),
        observation: app.observe(session)?,
    })
}

async fn create_session(
    State(app): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let Json(req) = body?;
    let (site, task) = app.task(&req.site_id, &req.task_id)?;
    let state = reset(site, task).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.name(), &e))?;
    let session = Session {
        session_id: uuid::Uuid::new_v4().simple().to_string(),
        site_id: site.site_id.clone(),
        task_id: task.task_id.clone(),
        state,
        actions: Vec::new(),
        status: SessionStatus::Active,
        demo_path: None,
        touched: Instant::now(),
    };
    let body = view(&app, &session)?;
    app.sessions
        .lock()
        .expect("session table")
        .insert(session.session_id.clone(), Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(body)))
}

async fn get_observation(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let handle = app.lookup(&id)?;
    let mut session = handle.lock().expect("session");
    session.touched = Instant::now();
    Ok(Json(view(&app, &session)?))
}

async fn post_action(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Action>, JsonRejection>,
) -> Result<Json<SessionView>, ApiError> {
    let Json(action) = body?;
    let handle = app.lookup(&id)?;
    let mut session = claim(&handle)?;
    session.touched = Instant::now();
    if session.state.terminated || session.status != SessionStatus::Active {
        return Err(ApiError::new(StatusCode::CONFLICT, "AlreadyTerminated", "episode already terminated"));
    }
    let (site, task) = app.task(&session.site_id, &session.task_id)?;
    let next = step(&session.state, site, task, &action)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.name(), &e))?;
    if next.success {
        session.status = SessionStatus::Succeeded;
    }
    session.state = next;
    session.actions.push(action);
    Ok(Json(view(&app, &session)?))
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct FinishResponse {
    pub session_id: String,
    pub status: SessionStatus,
    pub path: Option<PathBuf>,
}

async fn finish(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<FinishResponse>, ApiError> {
    let handle = app.lookup(&id)?;
    let mut session = claim(&handle)?;
    session.touched = Instant::now();
    match session.status {
        SessionStatus::Succeeded if session.demo_path.is_none() => {
            let path = persist(&app, &session)?;
            session.demo_path = Some(path);
        }
        SessionStatus::Active => session.status = SessionStatus::Abandoned,
        _ => {}
    }
    Ok(Json(FinishResponse {
        session_id: session.session_id.clone(),
        status: session.status,
        path: session.demo_path.clone(),
    }))
}

fn persist(app: &AppState, session: &Session) -> Result<PathBuf, ApiError> {
    let internal = |name, e: &dyn ToString| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, name, e.to_string());
    let (site, task) = app.task(&session.site_id, &session.task_id)?;
    let created_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let record = TrajectoryRecord::from_actions(site, task, &session.actions, Annotator::Human, created_at)
        .map_err(|e| internal("RecordFailed", &e))?;
    let check = validate(&record, &app.corpus).map_err(|e| internal("RecordFailed", &e))?;
    if !check.is_ok() {
        return Err(internal("InvalidDemonstration", &check.failures.join("; ")));
    }
    std::fs::create_dir_all(&app.config.out_dir).map_err(|e| internal("StoreFailed", &e))?;
    let path = app
        .config
        .out_dir
        .join(format!("{}-{}.{DEMO_EXTENSION}", task.task_id, session.session_id));
    save(&record, &path).map_err(|e| internal("StoreFailed", &e))?;
    Ok(path)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/corpus", get(list_corpus))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/observation", get(get_observation))
        .route("/sessions/{id}/action", post(post_action))
        .route("/sessions/{id}/finish", post(finish))
        .with_state(state)
}

/// Serves the recorder on `addr` until the process exits.
pub async fn serve(corpus: Corpus, config: RecorderConfig, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(AppState::new(corpus, config))).await
}
