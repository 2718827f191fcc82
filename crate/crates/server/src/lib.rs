//! HTTP and WebSocket front end for an arginote hub, plus the `arginote` CLI.
//!
//! Every response body is canonical JSON, so repeated reads between two
//! mutations are byte-identical and embedded solution documents hash the same
//! on both sides of the wire.

pub mod cli;
mod error;
mod stream;

use std::collections::BTreeMap;
use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use arginote_core::analytics::AnalysisReport;
use arginote_core::canonical;
use arginote_core::engine::{Command, Event, EventBody, HubError};
use arginote_core::{Challenge, Hub, MemberId, PaperDraft, PaperId, PaperKind, SessionId, SolutionPayload, TeamId, Violation};
use axum::body::{Body, Bytes};
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

pub use error::{ApiError, ErrorBody};
pub use stream::{CLOSE_LAGGED, CLOSE_PROTOCOL, CLOSE_UNKNOWN_TEAM};

pub const DEFAULT_HEARTBEAT: Duration = Duration::from_secs(15);

/// Room for JSON framing around a payload. Bodies up to twice the payload cap
/// reach the validator, so oversized payloads are reported as violations.
const BODY_OVERHEAD: usize = 64 * 1024;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Challenges sessions can be created from, by id.
    pub challenges: BTreeMap<String, Challenge>,
    pub heartbeat: Duration,
}

impl ServerConfig {
    pub fn new(challenges: impl IntoIterator<Item = Challenge>) -> Self {
        Self {
            challenges: challenges.into_iter().map(|c| (c.id.clone(), c)).collect(),
            heartbeat: DEFAULT_HEARTBEAT,
        }
    }

    pub fn heartbeat(mut self, every: Duration) -> Self {
        self.heartbeat = every;
        self
    }
}

#[derive(Clone)]
pub struct AppState {
    hub: Arc<Hub>,
    config: Arc<ServerConfig>,
}

impl AppState {
    pub fn hub(&self) -> &Arc<Hub> {
        &self.hub
    }
}

/// The full route table.
pub fn app(hub: Arc<Hub>, config: ServerConfig) -> Router {
    let body_limit = hub.engine().limits().payload_max_bytes.saturating_mul(2).saturating_add(BODY_OVERHEAD);
    let state = AppState { hub, config: Arc::new(config) };
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{sid}/teams", post(create_team))
        .route("/v1/sessions/{sid}/analytics", get(analytics))
        .route("/v1/sessions/{sid}/export", get(export))
        .route("/v1/teams/{tid}/members", post(join_team))
        .route("/v1/teams/{tid}/papers", post(submit_paper))
        .route("/v1/teams/{tid}/workspace", get(workspace))
        .route("/v1/teams/{tid}/stream", get(stream::subscribe))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(state)
}

/// Serves `app` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}

pub(crate) fn canonical_json<T: Serialize>(status: StatusCode, body: &T) -> Response {
    match canonical::to_canonical_string(body) {
        Ok(text) => (status, [(header::CONTENT_TYPE, "application/json")], text).into_response(),
        Err(e) => {
            tracing::error!(error = %e, "response not representable");
            (StatusCode::INTERNAL_SERVER_ERROR, "response not representable").into_response()
        }
    }
}

fn parse_body<T: DeserializeOwned>(body: Result<Bytes, BytesRejection>) -> Result<T, ApiError> {
    let bytes = body.map_err(|rejection| {
        let status = rejection.status();
        let code = if status == StatusCode::PAYLOAD_TOO_LARGE { "PayloadTooLarge" } else { "MalformedRequest" };
        ApiError::new(status, code, rejection.body_text())
    })?;
    serde_json::from_slice(&bytes).map_err(|e| ApiError::malformed(e.to_string()))
}

/// Runs a command off the async executor; appends fsync.
async fn execute(state: &AppState, cmd: Command) -> Result<Vec<Arc<Event>>, HubError> {
    let hub = state.hub.clone();
    tokio::task::spawn_blocking(move || hub.execute(cmd)).await.expect("hub task panicked")
}

fn created<T: Serialize>(body: &T) -> Response {
    canonical_json(StatusCode::CREATED, body)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSessionRequest {
    challenge_id: String,
    #[serde(default)]
    request_id: Option<String>,
}

#[derive(Serialize)]
struct SessionCreated {
    session_id: SessionId,
    seq: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    request_id: Option<String>,
}

async fn create_session(State(state): State<AppState>, body: Result<Bytes, BytesRejection>) -> Result<Response, ApiError> {
    let req: CreateSessionRequest = parse_body(body)?;
    let rid = req.request_id;
    let challenge = state
        .config
        .challenges
        .get(&req.challenge_id)
        .cloned()
        .ok_or_else(|| {
            ApiError::new(StatusCode::NOT_FOUND, "UnknownChallenge", format!("unknown challenge {:?}", req.challenge_id))
                .with_request_id(rid.clone())
        })?;
    let events = execute(&state, Command::CreateSession { challenge })
        .await
        .map_err(|e| ApiError::from(e).with_request_id(rid.clone()))?;
    let EventBody::SessionCreated { session_id, .. } = &events[0].body else { unreachable!() };
    Ok(created(&SessionCreated { session_id: session_id.clone(), seq: events[0].seq, request_id: rid }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateTeamRequest {
    name: String,
    #[serde(default)]
    request_id: Option<String>,
}

#[derive(Serialize)]
struct TeamCreated {
    team_id: TeamId,
    seq: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    request_id: Option<String>,
}

async fn create_team(
    State(state): State<AppState>,
    Path(sid): Path<String>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Response, ApiError> {
    let req: CreateTeamRequest = parse_body(body)?;
    let rid = req.request_id;
    let events = execute(&state, Command::CreateTeam { session: SessionId::new(sid), name: req.name })
        .await
        .map_err(|e| ApiError::from(e).with_request_id(rid.clone()))?;
    let EventBody::TeamCreated { team_id, .. } = &events[0].body else { unreachable!() };
    Ok(created(&TeamCreated { team_id: team_id.clone(), seq: events[0].seq, request_id: rid }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JoinTeamRequest {
    display_name: String,
    #[serde(default)]
    request_id: Option<String>,
}

#[derive(Serialize)]
struct MemberJoined {
    member_id: MemberId,
    seq: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    request_id: Option<String>,
}

async fn join_team(
    State(state): State<AppState>,
    Path(tid): Path<String>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Response, ApiError> {
    let req: JoinTeamRequest = parse_body(body)?;
    let rid = req.request_id;
    let events = execute(&state, Command::JoinTeam { team: TeamId::new(tid), display_name: req.display_name })
        .await
        .map_err(|e| ApiError::from(e).with_request_id(rid.clone()))?;
    let EventBody::MemberJoined { member_id, .. } = &events[0].body else { unreachable!() };
    Ok(created(&MemberJoined { member_id: member_id.clone(), seq: events[0].seq, request_id: rid }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitPaperRequest {
    author: MemberId,
    title: String,
    kind: PaperKind,
    #[serde(default)]
    argument: String,
    /// Kept as raw text so out-of-range numbers surface as a violation.
    #[serde(default)]
    payload: Option<Box<RawValue>>,
    #[serde(default)]
    citations: Vec<PaperId>,
    #[serde(default)]
    is_final: bool,
    #[serde(default)]
    request_id: Option<String>,
}

#[derive(Serialize)]
struct PaperAccepted {
    paper_id: PaperId,
    seq: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<arginote_core::Score>,
    #[serde(skip_serializing_if = "Option::is_none")]
    request_id: Option<String>,
}

async fn submit_paper(
    State(state): State<AppState>,
    Path(tid): Path<String>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Response, ApiError> {
    let req: SubmitPaperRequest = parse_body(body)?;
    let rid = req.request_id;
    let payload = match req.payload {
        None => None,
        Some(raw) => Some(
            SolutionPayload::from_json_str(raw.get())
                .map_err(|_| ApiError::invalid(vec![Violation::NonFiniteNumber]).with_request_id(rid.clone()))?,
        ),
    };
    let draft = PaperDraft {
        title: req.title,
        kind: req.kind,
        argument: req.argument,
        payload,
        citations: req.citations,
        is_final: req.is_final,
    };
    let events = execute(&state, Command::SubmitPaper { team: TeamId::new(tid), author: req.author, draft })
        .await
        .map_err(|e| ApiError::from(e).with_request_id(rid.clone()))?;
    let EventBody::PaperSubmitted { paper } = &events[0].body else { unreachable!() };
    Ok(created(&PaperAccepted { paper_id: paper.id.clone(), seq: events[0].seq, score: paper.score, request_id: rid }))
}

#[derive(Serialize)]
struct Workspace<'a> {
    papers: &'a [arginote_core::MiniPaper],
    edges: Vec<(PaperId, PaperId)>,
}

async fn workspace(State(state): State<AppState>, Path(tid): Path<String>) -> Result<Response, ApiError> {
    let team = TeamId::from(tid.as_str());
    let unknown = || ApiError::new(StatusCode::NOT_FOUND, "UnknownTeam", format!("unknown team {team}"));
    let session = state.hub.session_of(&team).ok_or_else(unknown)?;
    state
        .hub
        .with_state(&session, |s| {
            s.team(&team).map(|t| canonical_json(StatusCode::OK, &Workspace { papers: t.papers(), edges: t.graph().edges() }))
        })
        .flatten()
        .ok_or_else(unknown)
}

fn unknown_session(sid: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "UnknownSession", format!("unknown session {sid}"))
}

async fn analytics(State(state): State<AppState>, Path(sid): Path<String>) -> Result<Response, ApiError> {
    let report = state
        .hub
        .with_state(&SessionId::from(sid.as_str()), AnalysisReport::from_state)
        .ok_or_else(|| unknown_session(&sid))?;
    Ok(canonical_json(StatusCode::OK, &report))
}

async fn export(State(state): State<AppState>, Path(sid): Path<String>) -> Result<Response, ApiError> {
    let bytes = state.hub.export(&SessionId::from(sid.as_str())).ok_or_else(|| unknown_session(&sid))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from(bytes)).into_response())
}
