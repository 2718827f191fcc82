//! The authoritative session state machine.
//!
//! Commands are validated against the current [`SessionState`] and turned into
//! events; state is only ever changed by folding events, both when commands
//! are accepted and when a log is replayed.

mod hub;
mod log;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::evaluator::{Challenge, EvalError, EvaluatorRegistry};
use crate::graph::CitationGraph;
use crate::ids::{MemberId, PaperId, SessionId, TeamId};
use crate::model::{validate_draft, Limits, MiniPaper, PaperDraft, PaperKind, Violation, Workspace};

pub use hub::{
    Clock, DirectoryStores, Hub, HubError, ManualClock, MemoryStores, StoreFactory, Subscription,
    SystemClock, DEFAULT_SUBSCRIBER_CAPACITY,
};
pub use log::{
    encode_event, encode_events, parse_log, replay_bytes, FileLogStore, LogStore, MemoryLogStore,
    StorageError,
};

pub const NAME_MAX_CHARS: usize = 200;

/// A client request. Carries no server-assigned fields.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    CreateSession { challenge: Challenge },
    CreateTeam { session: SessionId, name: String },
    JoinTeam { team: TeamId, display_name: String },
    SubmitPaper { team: TeamId, author: MemberId, draft: PaperDraft },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub at: u64,
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventBody {
    SessionCreated { session_id: SessionId, challenge: Challenge },
    TeamCreated { team_id: TeamId, name: String },
    MemberJoined { team_id: TeamId, member_id: MemberId, display_name: String },
    PaperSubmitted { paper: MiniPaper },
}

impl Event {
    /// The team an event belongs to, if any.
    pub fn team(&self) -> Option<&TeamId> {
        match &self.body {
            EventBody::SessionCreated { .. } => None,
            EventBody::TeamCreated { team_id, .. } | EventBody::MemberJoined { team_id, .. } => Some(team_id),
            EventBody::PaperSubmitted { paper } => Some(&paper.team),
        }
    }
}

/// Why a command was refused. A refused command leaves no trace in the log.
#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    Invalid(Vec<Violation>),
    Evaluation(EvalError),
    UnknownSession(SessionId),
    UnknownTeam(TeamId),
    UnknownMember(MemberId),
    SessionExists(SessionId),
    NoSessionReserved,
    InvalidName(String),
}

impl Rejection {
    pub fn code(&self) -> &'static str {
        match self {
            Rejection::Invalid(_) => "ValidationFailed",
            Rejection::Evaluation(e) => e.code(),
            Rejection::UnknownSession(_) => "UnknownSession",
            Rejection::UnknownTeam(_) => "UnknownTeam",
            Rejection::UnknownMember(_) => "UnknownMember",
            Rejection::SessionExists(_) => "SessionExists",
            Rejection::NoSessionReserved => "NoSessionReserved",
            Rejection::InvalidName(_) => "InvalidName",
        }
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            Rejection::Invalid(v) => v,
            _ => &[],
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Invalid(v) => {
                let parts: Vec<String> = v.iter().map(ToString::to_string).collect();
                write!(f, "draft rejected: {}", parts.join("; "))
            }
            Rejection::Evaluation(e) => e.fmt(f),
            Rejection::UnknownSession(id) => write!(f, "unknown session {id}"),
            Rejection::UnknownTeam(id) => write!(f, "unknown team {id}"),
            Rejection::UnknownMember(id) => write!(f, "{id} is not a member of this team"),
            Rejection::SessionExists(id) => write!(f, "session {id} already exists"),
            Rejection::NoSessionReserved => write!(f, "no session id has been reserved for this log"),
            Rejection::InvalidName(detail) => f.write_str(detail),
        }
    }
}

impl std::error::Error for Rejection {}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("corrupt log at {location}: {reason}")]
pub struct CorruptLog {
    pub location: String,
    pub reason: String,
}

impl CorruptLog {
    pub(crate) fn at_seq(seq: u64, reason: impl Into<String>) -> Self {
        Self { location: format!("seq {seq}"), reason: reason.into() }
    }

    pub(crate) fn at_line(line: usize, reason: impl Into<String>) -> Self {
        Self { location: format!("line {line}"), reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionMeta {
    pub id: SessionId,
    pub challenge: Challenge,
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Member {
    pub id: MemberId,
    pub display_name: String,
    pub seq: u64,
    pub joined_at: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeamState {
    pub id: TeamId,
    pub name: String,
    pub seq: u64,
    pub created_at: u64,
    members: BTreeMap<MemberId, Member>,
    papers: Vec<MiniPaper>,
    graph: CitationGraph,
    final_paper: Option<PaperId>,
}

impl TeamState {
    /// Members in join order.
    pub fn members(&self) -> Vec<&Member> {
        let mut members: Vec<&Member> = self.members.values().collect();
        members.sort_by_key(|m| m.seq);
        members
    }

    pub fn is_member(&self, id: &MemberId) -> bool {
        self.members.contains_key(id)
    }

    /// Papers in seq order.
    pub fn papers(&self) -> &[MiniPaper] {
        &self.papers
    }

    pub fn graph(&self) -> &CitationGraph {
        &self.graph
    }

    pub fn final_paper(&self) -> Option<&PaperId> {
        self.final_paper.as_ref()
    }
}

/// Session state derived from an event prefix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionState {
    reserved: Option<SessionId>,
    session: Option<SessionMeta>,
    teams: BTreeMap<TeamId, TeamState>,
    team_order: Vec<TeamId>,
    paper_index: BTreeMap<PaperId, TeamId>,
    member_index: BTreeMap<MemberId, TeamId>,
    last_seq: u64,
    last_at: u64,
}

struct TeamWorkspace<'a> {
    state: &'a SessionState,
    team: &'a TeamState,
    prospective: Option<PaperId>,
}

impl Workspace for TeamWorkspace<'_> {
    fn team(&self) -> &TeamId {
        &self.team.id
    }

    fn paper_team(&self, id: &PaperId) -> Option<&TeamId> {
        self.state.paper_index.get(id)
    }

    fn has_final_paper(&self) -> bool {
        self.team.final_paper.is_some()
    }

    fn prospective_id(&self) -> Option<PaperId> {
        self.prospective.clone()
    }
}

impl SessionState {
    /// An empty state whose `CreateSession` command will use `id`.
    pub fn reserve(id: SessionId) -> Self {
        Self { reserved: Some(id), ..Self::default() }
    }

    pub fn session(&self) -> Option<&SessionMeta> {
        self.session.as_ref()
    }

    pub fn session_id(&self) -> Option<&SessionId> {
        self.session.as_ref().map(|s| &s.id).or(self.reserved.as_ref())
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn last_at(&self) -> u64 {
        self.last_at
    }

    /// Teams in creation order.
    pub fn teams(&self) -> impl Iterator<Item = &TeamState> {
        self.team_order.iter().map(|id| &self.teams[id])
    }

    pub fn team(&self, id: &TeamId) -> Option<&TeamState> {
        self.teams.get(id)
    }

    pub fn paper(&self, id: &PaperId) -> Option<&MiniPaper> {
        let team = self.teams.get(self.paper_index.get(id)?)?;
        team.papers.iter().find(|p| &p.id == id)
    }

    pub fn paper_count(&self) -> usize {
        self.paper_index.len()
    }

    /// Folds one event into the state, checking every log invariant.
    pub fn apply(&mut self, event: &Event) -> Result<(), CorruptLog> {
        let seq = event.seq;
        let corrupt = |reason: String| CorruptLog::at_seq(seq, reason);
        if seq != self.last_seq + 1 {
            return Err(corrupt(format!("expected seq {}, found {seq}", self.last_seq + 1)));
        }
        if event.at < self.last_at {
            return Err(corrupt(format!("timestamp {} precedes {}", event.at, self.last_at)));
        }
        if self.session.is_none() && !matches!(event.body, EventBody::SessionCreated { .. }) {
            return Err(corrupt("log does not start with session_created".into()));
        }

        match &event.body {
            EventBody::SessionCreated { session_id, challenge } => {
                if self.session.is_some() {
                    return Err(corrupt("second session_created".into()));
                }
                if self.reserved.as_ref().is_some_and(|r| r != session_id) {
                    return Err(corrupt(format!("log belongs to session {session_id}")));
                }
                self.session = Some(SessionMeta {
                    id: session_id.clone(),
                    challenge: challenge.clone(),
                    created_at: event.at,
                });
            }
            EventBody::TeamCreated { team_id, name } => {
                if self.teams.contains_key(team_id) {
                    return Err(corrupt(format!("team {team_id} created twice")));
                }
                self.teams.insert(
                    team_id.clone(),
                    TeamState {
                        id: team_id.clone(),
                        name: name.clone(),
                        seq,
                        created_at: event.at,
                        members: BTreeMap::new(),
                        papers: Vec::new(),
                        graph: CitationGraph::new(),
                        final_paper: None,
                    },
                );
                self.team_order.push(team_id.clone());
            }
            EventBody::MemberJoined { team_id, member_id, display_name } => {
                if self.member_index.contains_key(member_id) {
                    return Err(corrupt(format!("member {member_id} joined twice")));
                }
                let team = self
                    .teams
                    .get_mut(team_id)
                    .ok_or_else(|| corrupt(format!("unknown team {team_id}")))?;
                team.members.insert(
                    member_id.clone(),
                    Member {
                        id: member_id.clone(),
                        display_name: display_name.clone(),
                        seq,
                        joined_at: event.at,
                    },
                );
                self.member_index.insert(member_id.clone(), team_id.clone());
            }
            EventBody::PaperSubmitted { paper } => {
                self.check_paper(paper, event).map_err(corrupt)?;
                let team = self.teams.get_mut(&paper.team).expect("checked above");
                team.graph.insert(paper).map_err(|e| corrupt(e.to_string()))?;
                if paper.is_final {
                    team.final_paper = Some(paper.id.clone());
                }
                team.papers.push(paper.clone());
                self.paper_index.insert(paper.id.clone(), paper.team.clone());
            }
        }
        self.last_seq = seq;
        self.last_at = event.at;
        Ok(())
    }

    fn check_paper(&self, paper: &MiniPaper, event: &Event) -> Result<(), String> {
        if paper.seq != event.seq || paper.submitted_at != event.at {
            return Err(format!("paper {} carries seq/time that disagree with its event", paper.id));
        }
        if self.paper_index.contains_key(&paper.id) {
            return Err(format!("paper {} submitted twice", paper.id));
        }
        let team = self.teams.get(&paper.team).ok_or_else(|| format!("unknown team {}", paper.team))?;
        if !team.is_member(&paper.author) {
            return Err(format!("author {} is not a member of {}", paper.author, paper.team));
        }
        match (paper.kind, paper.score) {
            (PaperKind::Solution, None) => return Err("solution paper without score".into()),
            (PaperKind::Argument, Some(_)) => return Err("argument paper with score".into()),
            _ => {}
        }
        let workspace = TeamWorkspace { state: self, team, prospective: Some(paper.id.clone()) };
        // Caps are admission policy, not log invariants.
        let unbounded = Limits { title_max_chars: usize::MAX, payload_max_bytes: usize::MAX };
        validate_draft(&paper.draft(), &workspace, &unbounded).map_err(|violations| {
            let parts: Vec<String> = violations.iter().map(ToString::to_string).collect();
            parts.join("; ")
        })?;
        Ok(())
    }

    fn team_for_command(&self, team: &TeamId) -> Result<&TeamState, Rejection> {
        self.teams.get(team).ok_or_else(|| Rejection::UnknownTeam(team.clone()))
    }
}

/// Folds a complete, gap-free log into a state.
pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Result<SessionState, CorruptLog> {
    let mut state = SessionState::default();
    for event in events {
        state.apply(event)?;
    }
    Ok(state)
}

#[derive(Serialize)]
struct DigestView<'a> {
    session: Option<&'a SessionMeta>,
    last_seq: u64,
    last_at: u64,
    teams: Vec<TeamDigestView<'a>>,
}

#[derive(Serialize)]
struct TeamDigestView<'a> {
    id: &'a TeamId,
    name: &'a str,
    seq: u64,
    created_at: u64,
    members: Vec<&'a Member>,
    papers: &'a [MiniPaper],
}

/// SHA-256 over the canonical serialization of the state, hex encoded.
pub fn state_digest(state: &SessionState) -> String {
    let view = DigestView {
        session: state.session.as_ref(),
        last_seq: state.last_seq,
        last_at: state.last_at,
        teams: state
            .teams()
            .map(|t| TeamDigestView {
                id: &t.id,
                name: &t.name,
                seq: t.seq,
                created_at: t.created_at,
                members: t.members(),
                papers: &t.papers,
            })
            .collect(),
    };
    let encoded = canonical::to_canonical_string(&view).expect("state is always representable");
    canonical::sha256_hex(encoded.as_bytes())
}

/// Validation and scoring configuration for turning commands into events.
#[derive(Debug, Clone)]
pub struct Engine {
    registry: Arc<EvaluatorRegistry>,
    limits: Limits,
}

impl Engine {
    pub fn new(registry: Arc<EvaluatorRegistry>, limits: Limits) -> Self {
        Self { registry, limits }
    }

    pub fn registry(&self) -> &EvaluatorRegistry {
        &self.registry
    }

    pub fn limits(&self) -> &Limits {
        &self.limits
    }

    /// Decides which events `cmd` produces without touching `state`.
    pub fn decide(&self, state: &SessionState, cmd: &Command, now: u64) -> Result<Vec<Event>, Rejection> {
        let seq = state.last_seq + 1;
        // Wall clocks may step backwards; the log never does.
        let at = now.max(state.last_at);
        let body = match cmd {
            Command::CreateSession { challenge } => {
                if let Some(existing) = &state.session {
                    return Err(Rejection::SessionExists(existing.id.clone()));
                }
                let session_id = state.reserved.clone().ok_or(Rejection::NoSessionReserved)?;
                self.registry.check_challenge(challenge).map_err(Rejection::Evaluation)?;
                EventBody::SessionCreated { session_id, challenge: challenge.clone() }
            }
            Command::CreateTeam { session, name } => {
                let meta = state
                    .session
                    .as_ref()
                    .filter(|m| &m.id == session)
                    .ok_or_else(|| Rejection::UnknownSession(session.clone()))?;
                check_name("team name", name)?;
                EventBody::TeamCreated { team_id: TeamId::mint(&meta.id, seq), name: name.clone() }
            }
            Command::JoinTeam { team, display_name } => {
                let meta = state.session.as_ref().ok_or(Rejection::UnknownTeam(team.clone()))?;
                state.team_for_command(team)?;
                check_name("display name", display_name)?;
                EventBody::MemberJoined {
                    team_id: team.clone(),
                    member_id: MemberId::mint(&meta.id, seq),
                    display_name: display_name.clone(),
                }
            }
            Command::SubmitPaper { team, author, draft } => {
                let meta = state.session.as_ref().ok_or(Rejection::UnknownTeam(team.clone()))?;
                let team_state = state.team_for_command(team)?;
                if !team_state.is_member(author) {
                    return Err(Rejection::UnknownMember(author.clone()));
                }
                let id = PaperId::mint(&meta.id, seq);
                let workspace = TeamWorkspace { state, team: team_state, prospective: Some(id.clone()) };
                let validated = validate_draft(draft, &workspace, &self.limits).map_err(Rejection::Invalid)?;
                let draft = validated.into_draft();
                let score = match (draft.kind, &draft.payload) {
                    (PaperKind::Solution, Some(payload)) => Some(
                        self.registry
                            .evaluate(&meta.challenge, payload)
                            .map_err(Rejection::Evaluation)?,
                    ),
                    _ => None,
                };
                EventBody::PaperSubmitted {
                    paper: MiniPaper {
                        id,
                        team: team.clone(),
                        author: author.clone(),
                        seq,
                        submitted_at: at,
                        title: draft.title,
                        kind: draft.kind,
                        argument: draft.argument,
                        payload: draft.payload,
                        score,
                        citations: draft.citations,
                        is_final: draft.is_final,
                    },
                }
            }
        };
        Ok(vec![Event { seq, at, body }])
    }

    /// Applies `cmd` to a copy of `state`; the input is never modified.
    pub fn apply_command(
        &self,
        state: &SessionState,
        cmd: &Command,
        now: u64,
    ) -> Result<(SessionState, Vec<Event>), Rejection> {
        let events = self.decide(state, cmd, now)?;
        let mut next = state.clone();
        for event in &events {
            next.apply(event).expect("decided events always apply");
        }
        Ok((next, events))
    }
}

fn check_name(what: &str, name: &str) -> Result<(), Rejection> {
    if name.trim().is_empty() {
        return Err(Rejection::InvalidName(format!("{what} must not be empty")));
    }
    if name.chars().count() > NAME_MAX_CHARS {
        return Err(Rejection::InvalidName(format!("{what} exceeds {NAME_MAX_CHARS} characters")));
    }
    Ok(())
}
