//! HTTP front end for interactive labeling. One learner session runs at a
//! time on its own thread; it parks on a label exchange while a request is
//! pending and the labeler answers over HTTP.
//!
//! Endpoints are listed in `API.md` next to this crate's manifest.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Notify;

use skyblock::datamodel::{GroundTruth, Record};
use skyblock::index::BlockingIndex;
use skyblock::learner::{learn, Algorithm, Progress};
use skyblock::oracle::{AnswerError, AnswerOutcome, Label, LabelExchange, OracleSession, PendingRequest};
use skyblock::report::RunReport;
use skyblock::scheme::SchemePoint;

const DEFAULT_WAIT_MS: u64 = 25_000;
const MAX_WAIT_MS: u64 = 60_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    AwaitingLabel,
    Done,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRequest {
    #[serde(flatten)]
    pub algorithm: Algorithm,
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub attribute: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordView {
    pub id: String,
    pub values: Vec<Field>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub request_id: u64,
    pub left: RecordView,
    pub right: RecordView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointView {
    pub scheme: String,
    pub pc: f64,
    pub pq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub algorithm: String,
    pub rounds: usize,
    pub labels_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub id: String,
    pub status: Status,
    pub budget: usize,
    pub used: usize,
    pub pending: Option<LabelRequest>,
    pub points: Vec<PointView>,
    pub trace: TraceSummary,
    /// Why a finished run has no result, if it has none.
    pub error: Option<String>,
    /// Full report once the run is done or aborted.
    pub report: Option<RunReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitLabel {
    pub request_id: u64,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub request_id: u64,
    /// `accepted` or `duplicate`.
    pub outcome: String,
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    (
        status,
        Json(ErrorBody {
            error: code.to_string(),
            message: message.into(),
        }),
    )
        .into_response()
}

#[derive(Default)]
struct Progressive {
    finished: Option<Status>,
    used: usize,
    points: Vec<SchemePoint>,
    rounds: usize,
    labels_used: usize,
    error: Option<String>,
    report: Option<RunReport>,
}

struct Session {
    id: String,
    algorithm: &'static str,
    budget: usize,
    exchange: Arc<LabelExchange>,
    state: Mutex<Progressive>,
    changed: Notify,
}

impl Session {
    fn status(&self) -> Status {
        if let Some(s) = self.state.lock().expect("session lock").finished {
            return s;
        }
        if self.exchange.pending().is_some() {
            Status::AwaitingLabel
        } else {
            Status::Running
        }
    }
}

/// Dataset, optional ground truth for exact metrics in the final report,
/// and where finished sessions write their label logs.
pub struct ServiceConfig {
    pub index: Arc<BlockingIndex>,
    pub truth: Option<Arc<GroundTruth>>,
    pub log_dir: Option<PathBuf>,
}

struct Inner {
    config: ServiceConfig,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
    active: Mutex<Option<Arc<Session>>>,
    next_id: Mutex<u64>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self(Arc::new(Inner {
            config,
            sessions: Mutex::new(HashMap::new()),
            active: Mutex::new(None),
            next_id: Mutex::new(0),
        }))
    }

    fn session(&self, id: &str) -> Option<Arc<Session>> {
        self.0.sessions.lock().expect("sessions lock").get(id).cloned()
    }

    fn record_view(&self, r: &Record) -> RecordView {
        let schema = self.0.config.index.dataset().schema();
        RecordView {
            id: r.id.clone(),
            values: schema
                .iter()
                .zip(&r.values)
                .map(|(a, v)| Field {
                    attribute: a.clone(),
                    value: v.clone(),
                })
                .collect(),
        }
    }

    fn label_request(&self, p: &PendingRequest) -> LabelRequest {
        let (l, r) = self.0.config.index.dataset().pair_records(p.key);
        LabelRequest {
            request_id: p.id,
            left: self.record_view(l),
            right: self.record_view(r),
        }
    }

    fn snapshot(&self, s: &Session) -> SessionSnapshot {
        let status = s.status();
        let pending = s.exchange.pending().map(|p| self.label_request(&p));
        let st = s.state.lock().expect("session lock");
        let preds = self.0.config.index.predicates();
        SessionSnapshot {
            id: s.id.clone(),
            status,
            budget: s.budget,
            used: st.used,
            pending: if status == Status::AwaitingLabel { pending } else { None },
            points: st
                .points
                .iter()
                .map(|p| PointView {
                    scheme: p.scheme.render(preds),
                    pc: p.pc,
                    pq: p.pq,
                })
                .collect(),
            trace: TraceSummary {
                algorithm: s.algorithm.to_string(),
                rounds: st.rounds,
                labels_used: st.labels_used,
            },
            error: st.error.clone(),
            report: st.report.clone(),
        }
    }

    fn start(&self, req: StartRequest) -> Result<Arc<Session>, Response> {
        req.algorithm
            .validate()
            .map_err(|e| error(StatusCode::BAD_REQUEST, "invalid_config", e.to_string()))?;
        let mut active = self.0.active.lock().expect("active lock");
        if let Some(a) = active.as_ref() {
            if a.state.lock().expect("session lock").finished.is_none() {
                return Err(error(
                    StatusCode::CONFLICT,
                    "session_active",
                    format!("session {} is still running", a.id),
                ));
            }
        }
        let id = {
            let mut n = self.0.next_id.lock().expect("id lock");
            *n += 1;
            n.to_string()
        };
        let session = Arc::new(Session {
            id: id.clone(),
            algorithm: req.algorithm.name(),
            budget: req.budget,
            exchange: Arc::new(LabelExchange::new()),
            state: Mutex::new(Progressive::default()),
            changed: Notify::new(),
        });
        {
            let weak = Arc::downgrade(&session);
            session.exchange.set_listener(move || {
                if let Some(s) = weak.upgrade() {
                    s.changed.notify_waiters();
                }
            });
        }
        self.0
            .sessions
            .lock()
            .expect("sessions lock")
            .insert(id.clone(), session.clone());
        *active = Some(session.clone());
        drop(active);

        let app = self.clone();
        let s = session.clone();
        std::thread::spawn(move || app.run_learner(s, req));
        Ok(session)
    }

    fn run_learner(&self, s: Arc<Session>, req: StartRequest) {
        let cfg = &self.0.config;
        let mut oracle = OracleSession::interactive(s.exchange.clone(), req.budget);
        let mut observer = |p: &Progress| {
            let mut st = s.state.lock().expect("session lock");
            st.points = p.points.clone();
            st.rounds = p.round;
            st.labels_used = p.labels_used;
            drop(st);
            s.changed.notify_waiters();
        };
        let result = learn(&cfg.index, &mut oracle, &req.algorithm, req.seed, Some(&mut observer));
        if let Some(dir) = &cfg.log_dir {
            let path = dir.join(format!("session-{}.log", s.id));
            if let Ok(f) = std::fs::File::create(path) {
                let _ = oracle.write_log(f);
            }
        }
        let mut st = s.state.lock().expect("session lock");
        match result {
            Ok(r) => {
                st.finished = Some(if r.aborted { Status::Aborted } else { Status::Done });
                st.points = r.points.clone();
                st.rounds = r.rounds;
                st.labels_used = r.labels_used;
                match RunReport::new(&cfg.index, &r, req.seed, req.budget, cfg.truth.as_deref()) {
                    Ok(report) => st.report = Some(report),
                    Err(e) => st.error = Some(e.to_string()),
                }
            }
            Err(e) => {
                st.finished = Some(if s.exchange.is_closed() { Status::Aborted } else { Status::Done });
                st.error = Some(e.to_string());
            }
        }
        drop(st);
        s.exchange.close();
        s.changed.notify_waiters();
    }
}

#[derive(Debug, Deserialize)]
struct WaitQuery {
    wait_ms: Option<u64>,
}

async fn start_session(State(app): State<AppState>, Json(req): Json<StartRequest>) -> Response {
    match app.start(req) {
        Ok(s) => (StatusCode::CREATED, Json(app.snapshot(&s))).into_response(),
        Err(r) => r,
    }
}

fn unknown_session(id: &str) -> Response {
    error(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id}"))
}

async fn get_snapshot(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    match app.session(&id) {
        Some(s) => Json(app.snapshot(&s)).into_response(),
        None => unknown_session(&id),
    }
}

async fn next_request(State(app): State<AppState>, Path(id): Path<String>, Query(q): Query<WaitQuery>) -> Response {
    let Some(s) = app.session(&id) else {
        return unknown_session(&id);
    };
    let wait = Duration::from_millis(q.wait_ms.unwrap_or(DEFAULT_WAIT_MS).min(MAX_WAIT_MS));
    let deadline = tokio::time::Instant::now() + wait;
    loop {
        let notified = s.changed.notified();
        tokio::pin!(notified);
        notified.as_mut().enable();
        if matches!(s.status(), Status::Done | Status::Aborted) {
            return StatusCode::NO_CONTENT.into_response();
        }
        if let Some(p) = s.exchange.pending() {
            return Json(app.label_request(&p)).into_response();
        }
        if tokio::time::timeout_at(deadline, notified).await.is_err() {
            return StatusCode::NO_CONTENT.into_response();
        }
    }
}

async fn submit_label(State(app): State<AppState>, Path(id): Path<String>, Json(body): Json<SubmitLabel>) -> Response {
    let Some(s) = app.session(&id) else {
        return unknown_session(&id);
    };
    // answers for one session are applied one at a time
    let mut st = s.state.lock().expect("session lock");
    match s.exchange.answer(body.request_id, body.label) {
        Ok(outcome) => {
            if outcome == AnswerOutcome::Accepted {
                st.used += 1;
            }
            let ack = SubmitAck {
                request_id: body.request_id,
                outcome: match outcome {
                    AnswerOutcome::Accepted => "accepted",
                    AnswerOutcome::Duplicate => "duplicate",
                }
                .to_string(),
                used: st.used,
            };
            Json(ack).into_response()
        }
        Err(e @ AnswerError::Unknown(_)) => error(StatusCode::NOT_FOUND, "unknown_request", e.to_string()),
        Err(e @ AnswerError::Stale(_)) => error(StatusCode::GONE, "stale_request", e.to_string()),
        Err(e @ AnswerError::Conflict(_)) => error(StatusCode::CONFLICT, "conflicting_label", e.to_string()),
    }
}

async fn abort_session(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    let Some(s) = app.session(&id) else {
        return unknown_session(&id);
    };
    if s.status() == Status::Done {
        return error(StatusCode::CONFLICT, "session_done", format!("session {id} already finished"));
    }
    s.exchange.close();
    // the learner returns promptly once the exchange is closed
    let deadline = tokio::time::Instant::now() + Duration::from_secs(10);
    loop {
        let notified = s.changed.notified();
        tokio::pin!(notified);
        notified.as_mut().enable();
        if matches!(s.status(), Status::Done | Status::Aborted) {
            break;
        }
        if tokio::time::timeout_at(deadline, notified).await.is_err() {
            break;
        }
    }
    Json(app.snapshot(&s)).into_response()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(start_session))
        .route("/sessions/{id}", get(get_snapshot))
        .route("/sessions/{id}/request", get(next_request))
        .route("/sessions/{id}/labels", post(submit_label))
        .route("/sessions/{id}/abort", post(abort_session))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
