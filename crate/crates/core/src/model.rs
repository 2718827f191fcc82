//! Mini-paper domain types and draft validation.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;

use crate::canonical::{self, CanonicalError};
use crate::ids::{MemberId, PaperId, TeamId};

pub const DEFAULT_TITLE_MAX_CHARS: usize = 200;
pub const DEFAULT_PAYLOAD_MAX_BYTES: usize = 1 << 20;

/// Configurable admission caps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub title_max_chars: usize,
    pub payload_max_bytes: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            title_max_chars: DEFAULT_TITLE_MAX_CHARS,
            payload_max_bytes: DEFAULT_PAYLOAD_MAX_BYTES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PaperKind {
    Solution,
    Argument,
}

/// A solution score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Score(f64);

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("score {0} is outside [0, 1]")]
pub struct ScoreOutOfRange(pub f64);

impl Score {
    pub const MIN: Score = Score(0.0);
    pub const MAX: Score = Score(1.0);

    pub fn new(value: f64) -> Result<Self, ScoreOutOfRange> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(ScoreOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Score {
    type Error = ScoreOutOfRange;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Score::new(value)
    }
}

impl From<Score> for f64 {
    fn from(score: Score) -> f64 {
        score.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PayloadError {
    #[error("payload contains a non-finite number")]
    NonFiniteNumber,
    #[error("payload is not valid JSON: {0}")]
    Syntax(String),
}

impl From<CanonicalError> for PayloadError {
    fn from(err: CanonicalError) -> Self {
        match err {
            CanonicalError::NonFiniteNumber => PayloadError::NonFiniteNumber,
            CanonicalError::Unrepresentable(e) => PayloadError::Syntax(e.to_string()),
        }
    }
}

/// An opaque structured solution document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SolutionPayload(Value);

impl SolutionPayload {
    pub fn new(document: Value) -> Self {
        Self(document)
    }

    /// Parses JSON text. `NaN`, `Infinity` and out-of-range literals are
    /// reported as [`PayloadError::NonFiniteNumber`].
    pub fn from_json_str(text: &str) -> Result<Self, PayloadError> {
        match serde_json::from_str::<Value>(text) {
            Ok(value) => Ok(Self(value)),
            Err(err) => {
                let msg = err.to_string();
                if msg.contains("number out of range") || non_finite_token_at(text, err.line(), err.column()) {
                    Err(PayloadError::NonFiniteNumber)
                } else {
                    Err(PayloadError::Syntax(msg))
                }
            }
        }
    }

    pub fn document(&self) -> &Value {
        &self.0
    }

    pub fn into_document(self) -> Value {
        self.0
    }

    pub fn canonical_bytes(&self) -> Result<Vec<u8>, PayloadError> {
        canonical_payload(self)
    }
}

fn non_finite_token_at(text: &str, line: usize, column: usize) -> bool {
    let Some(line_text) = text.lines().nth(line.saturating_sub(1)) else {
        return false;
    };
    // serde_json reports the column of the offending character (1-based).
    let start = line_text
        .char_indices()
        .nth(column.saturating_sub(1))
        .map(|(i, _)| i)
        .unwrap_or(line_text.len());
    let rest = line_text[start..].trim_start_matches('-');
    rest.starts_with("NaN") || rest.starts_with("Infinity") || rest.starts_with("inf")
}

/// Canonical byte encoding of a payload; equal documents give identical bytes.
pub fn canonical_payload(payload: &SolutionPayload) -> Result<Vec<u8>, PayloadError> {
    Ok(canonical::to_canonical_vec(&payload.0)?)
}

/// Immutable record of a team contribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiniPaper {
    pub id: PaperId,
    pub team: TeamId,
    pub author: MemberId,
    pub seq: u64,
    pub submitted_at: u64,
    pub title: String,
    pub kind: PaperKind,
    pub argument: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<SolutionPayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<Score>,
    pub citations: Vec<PaperId>,
    pub is_final: bool,
}

impl MiniPaper {
    pub fn draft(&self) -> PaperDraft {
        PaperDraft {
            title: self.title.clone(),
            kind: self.kind,
            argument: self.argument.clone(),
            payload: self.payload.clone(),
            citations: self.citations.clone(),
            is_final: self.is_final,
        }
    }
}

/// Client-supplied contents of a paper submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperDraft {
    pub title: String,
    pub kind: PaperKind,
    #[serde(default)]
    pub argument: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<SolutionPayload>,
    #[serde(default)]
    pub citations: Vec<PaperId>,
    #[serde(default)]
    pub is_final: bool,
}

impl PaperDraft {
    pub fn solution(title: impl Into<String>, payload: Value) -> Self {
        Self {
            title: title.into(),
            kind: PaperKind::Solution,
            argument: String::new(),
            payload: Some(SolutionPayload::new(payload)),
            citations: Vec::new(),
            is_final: false,
        }
    }

    pub fn argument(title: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            kind: PaperKind::Argument,
            argument: text.into(),
            payload: None,
            citations: Vec::new(),
            is_final: false,
        }
    }

    pub fn citing<I, P>(mut self, ids: I) -> Self
    where
        I: IntoIterator<Item = P>,
        P: Into<PaperId>,
    {
        self.citations = ids.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_argument(mut self, text: impl Into<String>) -> Self {
        self.argument = text.into();
        self
    }

    pub fn final_analysis(mut self) -> Self {
        self.is_final = true;
        self
    }
}

/// A single broken admission rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyTitle,
    TitleTooLong { chars: usize, max: usize },
    UnknownCitation(PaperId),
    CrossTeamCitation(PaperId),
    DuplicateCitation(PaperId),
    SelfCitation,
    MissingPayload,
    PayloadTooLarge { bytes: usize, max: usize },
    NonFiniteNumber,
    FinalOnSolution,
    FinalAlreadyExists,
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::EmptyTitle => "EmptyTitle",
            Violation::TitleTooLong { .. } => "TitleTooLong",
            Violation::UnknownCitation(_) => "UnknownCitation",
            Violation::CrossTeamCitation(_) => "CrossTeamCitation",
            Violation::DuplicateCitation(_) => "DuplicateCitation",
            Violation::SelfCitation => "SelfCitation",
            Violation::MissingPayload => "MissingPayload",
            Violation::PayloadTooLarge { .. } => "PayloadTooLarge",
            Violation::NonFiniteNumber => "NonFiniteNumber",
            Violation::FinalOnSolution => "FinalOnSolution",
            Violation::FinalAlreadyExists => "FinalAlreadyExists",
        }
    }

    pub fn paper_id(&self) -> Option<&PaperId> {
        match self {
            Violation::UnknownCitation(id)
            | Violation::CrossTeamCitation(id)
            | Violation::DuplicateCitation(id) => Some(id),
            _ => None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyTitle => write!(f, "title must not be empty"),
            Violation::TitleTooLong { chars, max } => {
                write!(f, "title has {chars} characters; at most {max} allowed")
            }
            Violation::UnknownCitation(id) => write!(f, "cited paper {id} does not exist"),
            Violation::CrossTeamCitation(id) => write!(f, "cited paper {id} belongs to another team"),
            Violation::DuplicateCitation(id) => write!(f, "paper {id} is cited more than once"),
            Violation::SelfCitation => write!(f, "a paper cannot cite itself"),
            Violation::MissingPayload => write!(f, "solution papers require a payload"),
            Violation::PayloadTooLarge { bytes, max } => {
                write!(f, "payload is {bytes} bytes; at most {max} allowed")
            }
            Violation::NonFiniteNumber => write!(f, "payload contains a non-finite number"),
            Violation::FinalOnSolution => write!(f, "only argument papers can be final"),
            Violation::FinalAlreadyExists => write!(f, "the team already has a final analysis paper"),
        }
    }
}

impl Serialize for Violation {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("code", self.code())?;
        map.serialize_entry("detail", &self.to_string())?;
        if let Some(id) = self.paper_id() {
            map.serialize_entry("paper_id", id)?;
        }
        map.end()
    }
}

/// What validation needs to know about the draft's team and session.
pub trait Workspace {
    fn team(&self) -> &TeamId;
    /// Team owning `id`, looked up across the whole session.
    fn paper_team(&self, id: &PaperId) -> Option<&TeamId>;
    fn has_final_paper(&self) -> bool;
    /// Id the draft will receive when admitted, if already known.
    fn prospective_id(&self) -> Option<PaperId> {
        None
    }
}

/// A draft that satisfies every admission rule for its workspace.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedDraft {
    draft: PaperDraft,
}

impl ValidatedDraft {
    pub fn draft(&self) -> &PaperDraft {
        &self.draft
    }

    pub fn into_draft(self) -> PaperDraft {
        self.draft
    }
}

/// Checks every admission rule and reports all violations, not only the first.
pub fn validate_draft(
    draft: &PaperDraft,
    workspace: &impl Workspace,
    limits: &Limits,
) -> Result<ValidatedDraft, Vec<Violation>> {
    let mut violations = Vec::new();

    if draft.title.trim().is_empty() {
        violations.push(Violation::EmptyTitle);
    }
    let chars = draft.title.chars().count();
    if chars > limits.title_max_chars {
        violations.push(Violation::TitleTooLong { chars, max: limits.title_max_chars });
    }

    match (&draft.payload, draft.kind) {
        (None, PaperKind::Solution) => violations.push(Violation::MissingPayload),
        (Some(payload), _) => match canonical_payload(payload) {
            Ok(bytes) if bytes.len() > limits.payload_max_bytes => {
                violations.push(Violation::PayloadTooLarge {
                    bytes: bytes.len(),
                    max: limits.payload_max_bytes,
                });
            }
            Ok(_) => {}
            Err(_) => violations.push(Violation::NonFiniteNumber),
        },
        (None, PaperKind::Argument) => {}
    }

    if draft.is_final {
        if draft.kind == PaperKind::Solution {
            violations.push(Violation::FinalOnSolution);
        } else if workspace.has_final_paper() {
            violations.push(Violation::FinalAlreadyExists);
        }
    }

    let own_id = workspace.prospective_id();
    let mut seen = BTreeSet::new();
    let mut reported_duplicates = BTreeSet::new();
    let mut self_cited = false;
    for id in &draft.citations {
        if !seen.insert(id) {
            if reported_duplicates.insert(id) {
                violations.push(Violation::DuplicateCitation(id.clone()));
            }
            continue;
        }
        if own_id.as_ref() == Some(id) {
            self_cited = true;
            continue;
        }
        match workspace.paper_team(id) {
            None => violations.push(Violation::UnknownCitation(id.clone())),
            Some(team) if team != workspace.team() => {
                violations.push(Violation::CrossTeamCitation(id.clone()))
            }
            Some(_) => {}
        }
    }
    if self_cited {
        violations.push(Violation::SelfCitation);
    }

    if violations.is_empty() {
        Ok(ValidatedDraft { draft: draft.clone() })
    } else {
        Err(violations)
    }
}
