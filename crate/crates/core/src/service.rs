//! Local JSON-over-HTTP API for interactive stepwise sessions.
//!
//! Sessions live in memory. Reads may run concurrently; commits and undos
//! on one session are serialized and must quote the revision the client
//! last saw.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bundle::{bundle_key, Bundle};
use crate::cohort::GroupDefinition;
use crate::design::{AgeBanding, Formula};
use crate::error::Error;
use crate::metrics::MetricReport;
use crate::stepwise::{
    propose_steps, trace_to_dot, DecisionTrace, Pool, SelectionPolicy, StepAction, StepDeltas,
    StepState, TraceEntry, Workspace,
};

pub const API_VERSION_HEADER: &str = "fairstep-api";
pub const API_VERSION: &str = "1";

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidStep(_)
            | Error::InvalidFormula(_)
            | Error::InvalidPolicy(_)
            | Error::InvalidGroup(_)
            | Error::UnknownHcc(_)
            | Error::UnknownColumn(_)
            | Error::UnknownGroup(_)
            | Error::DuplicateVariable(_)
            | Error::RemoveIntercept
            | Error::InvalidFolds(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::File { .. } | Error::Ingest { .. } | Error::InvalidMaps(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(r.status(), r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

struct Snapshot {
    state: StepState,
    report: MetricReport,
}

struct Session {
    workspace: Workspace,
    pool: Pool,
    policy: SelectionPolicy,
    hint_policies: Vec<SelectionPolicy>,
    state: StepState,
    report: MetricReport,
    trace: DecisionTrace,
    undo: Vec<Snapshot>,
    revision: u64,
    fits: usize,
}

/// Shared server state: loaded bundles and open sessions.
#[derive(Clone, Default)]
pub struct AppState {
    inner: Arc<Inner>,
}

#[derive(Default)]
struct Inner {
    default_bundle: Mutex<Option<Arc<Bundle>>>,
    bundles: Mutex<HashMap<PathBuf, Arc<Bundle>>>,
    sessions: RwLock<HashMap<String, Arc<RwLock<Session>>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    /// State whose sessions use `bundle` when a request names none.
    pub fn with_default_bundle(bundle: Bundle) -> Self {
        let s = Self::default();
        *s.inner.default_bundle.lock().expect("lock") = Some(Arc::new(bundle));
        s
    }

    fn bundle(&self, path: Option<&str>) -> Result<Arc<Bundle>, ApiError> {
        let Some(path) = path else {
            return self
                .inner
                .default_bundle
                .lock()
                .expect("lock")
                .clone()
                .ok_or_else(|| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no bundle given and no default bundle"));
        };
        let key = bundle_key(Path::new(path));
        if let Some(b) = self.inner.bundles.lock().expect("lock").get(&key) {
            return Ok(b.clone());
        }
        let b = Arc::new(Bundle::load(&key)?);
        self.inner.bundles.lock().expect("lock").insert(key, b.clone());
        Ok(b)
    }

    fn session(&self, id: &str) -> Result<Arc<RwLock<Session>>, ApiError> {
        self.inner
            .sessions
            .read()
            .expect("lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    /// Bundle directory; the server default when absent.
    #[serde(default)]
    pub bundle: Option<String>,
    pub baseline: Formula,
    pub groups: Vec<GroupDefinition>,
    pub policy: SelectionPolicy,
    /// Candidate blocks; one block per payment HCC when absent.
    #[serde(default)]
    pub pool: Option<Pool>,
    /// Extra policies whose verdicts are shown on each candidate.
    #[serde(default)]
    pub hint_policies: Vec<SelectionPolicy>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub revision: u64,
    pub formula: Formula,
    pub report: MetricReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Hint {
    pub policy: String,
    pub accept: bool,
    pub reason: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Candidate {
    pub action: StepAction,
    pub report_after: MetricReport,
    pub deltas: StepDeltas,
    pub hints: Vec<Hint>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CandidatesView {
    pub session_id: String,
    pub revision: u64,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Deserialize)]
pub struct CommitStep {
    pub action: StepAction,
    pub revision: u64,
}

#[derive(Debug, Default, Deserialize)]
pub struct UndoRequest {
    #[serde(default)]
    pub revision: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CommitView {
    pub session_id: String,
    pub revision: u64,
    pub formula: Formula,
    pub report: MetricReport,
    pub entry: TraceEntry,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TraceView {
    pub session_id: String,
    pub revision: u64,
    pub trace: DecisionTrace,
}

fn view(id: &str, s: &Session) -> SessionView {
    SessionView {
        session_id: id.to_string(),
        revision: s.revision,
        formula: s.state.formula.clone(),
        report: s.report.clone(),
    }
}

fn hints(s: &Session, action: &StepAction, after: &MetricReport, deltas: &StepDeltas) -> Result<Vec<Hint>, Error> {
    std::iter::once(&s.policy)
        .chain(&s.hint_policies)
        .map(|p| {
            let (accept, reason) = p.decide(action, &s.report, after, deltas)?;
            Ok(Hint {
                policy: p.label(),
                accept,
                reason,
            })
        })
        .collect()
}

async fn create_session(
    State(app): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let Json(req) = body?;
    let bundle = app.bundle(req.bundle.as_deref())?;
    req.policy.validate()?;
    for p in &req.hint_policies {
        p.validate()?;
        if p.evaluation_mode != req.policy.evaluation_mode {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "hint policies must share the session's evaluation mode",
            ));
        }
    }
    for g in &req.groups {
        g.validate(&bundle.maps)?;
    }
    let banding = AgeBanding::default();
    req.baseline.validate_cells(&banding)?;
    let pool = match req.pool {
        Some(p) => p,
        None => Pool::singletons(&bundle.maps.payment_hccs)?,
    };
    let extra: Vec<_> = pool
        .variables()
        .filter(|v| !req.baseline.contains(v))
        .cloned()
        .collect();
    let universe = req.baseline.with_appended(&extra)?;
    let baseline = req.baseline.clone();
    let policy = req.policy.clone();
    let groups = req.groups.clone();
    let session = tokio::task::spawn_blocking(move || -> Result<Session, Error> {
        let mut workspace = Workspace::from_records(&bundle.records, &universe, &bundle.maps, &banding, &groups)?;
        workspace.prepare(policy.evaluation_mode)?;
        let state = workspace.state(&baseline, policy.evaluation_mode)?;
        let report = workspace.report(&state)?;
        Ok(Session {
            workspace,
            pool,
            trace: DecisionTrace::new(baseline, Some(policy.clone())),
            policy,
            hint_policies: req.hint_policies,
            state,
            report,
            undo: Vec::new(),
            revision: 0,
            fits: 1,
        })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let id = format!("s{}", app.inner.next_id.fetch_add(1, Ordering::Relaxed) + 1);
    let v = view(&id, &session);
    app.inner
        .sessions
        .write()
        .expect("lock")
        .insert(id, Arc::new(RwLock::new(session)));
    Ok((StatusCode::CREATED, Json(v)))
}

async fn get_formula(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<SessionView> {
    let s = app.session(&id)?;
    let s = s.read().expect("lock");
    Ok(Json(view(&id, &s)))
}

async fn get_candidates(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<CandidatesView> {
    let s = app.session(&id)?;
    let s = s.read().expect("lock");
    let mut candidates = Vec::new();
    for action in propose_steps(&s.state.formula, &s.pool) {
        let eval = s.workspace.evaluate_step(&s.state, &s.report, &action)?;
        candidates.push(Candidate {
            hints: hints(&s, &action, &eval.report, &eval.deltas)?,
            action,
            report_after: eval.report,
            deltas: eval.deltas,
        });
    }
    Ok(Json(CandidatesView {
        session_id: id,
        revision: s.revision,
        candidates,
    }))
}

async fn commit_step(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<CommitStep>, JsonRejection>,
) -> ApiResult<CommitView> {
    let session = app.session(&id)?;
    let Json(req) = body?;
    let mut s = session.write().expect("lock");
    if req.revision != s.revision {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("stale revision {} (current {})", req.revision, s.revision),
        ));
    }
    let eval = s.workspace.evaluate_step(&s.state, &s.report, &req.action)?;
    let (would, why) = s.policy.decide(&req.action, &s.report, &eval.report, &eval.deltas)?;
    s.fits += 1;
    let entry = TraceEntry {
        step: s.trace.entries.len(),
        action: req.action,
        formula_before: s.state.formula.clone(),
        formula_after: eval.state.formula.clone(),
        report_before: s.report.clone(),
        report_after: eval.report.clone(),
        deltas: eval.deltas,
        accepted: true,
        reason: format!(
            "committed by analyst; {} would {}: {why}",
            s.policy.label(),
            if would { "accept" } else { "reject" }
        ),
        fits_evaluated: s.fits,
    };
    let previous = Snapshot {
        state: std::mem::replace(&mut s.state, eval.state),
        report: std::mem::replace(&mut s.report, eval.report),
    };
    s.undo.push(previous);
    s.trace.entries.push(entry.clone());
    s.revision += 1;
    Ok(Json(CommitView {
        session_id: id,
        revision: s.revision,
        formula: s.state.formula.clone(),
        report: s.report.clone(),
        entry,
    }))
}

async fn undo(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Option<Json<UndoRequest>>,
) -> ApiResult<SessionView> {
    let session = app.session(&id)?;
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let mut s = session.write().expect("lock");
    if let Some(r) = req.revision {
        if r != s.revision {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("stale revision {r} (current {})", s.revision),
            ));
        }
    }
    let Some(prev) = s.undo.pop() else {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "nothing to undo"));
    };
    s.state = prev.state;
    s.report = prev.report;
    s.trace.entries.pop();
    s.revision += 1;
    Ok(Json(view(&id, &s)))
}

async fn get_trace(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<TraceView> {
    let s = app.session(&id)?;
    let s = s.read().expect("lock");
    Ok(Json(TraceView {
        session_id: id,
        revision: s.revision,
        trace: s.trace.clone(),
    }))
}

async fn get_trace_dot(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<String, ApiError> {
    let s = app.session(&id)?;
    let s = s.read().expect("lock");
    Ok(trace_to_dot(&s.trace))
}

async fn version_header(mut res: Response) -> Response {
    res.headers_mut()
        .insert(API_VERSION_HEADER, HeaderValue::from_static(API_VERSION));
    res
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/formula", get(get_formula))
        .route("/sessions/{id}/candidates", get(get_candidates))
        .route("/sessions/{id}/steps", post(commit_step))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/trace", get(get_trace))
        .route("/sessions/{id}/trace/dot", get(get_trace_dot))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "no such endpoint") })
        .layer(axum::middleware::map_response(version_header))
        .with_state(state)
}

/// Serves on `addr` until the process is stopped.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
