//! Event-sourced collaborative workspaces of immutable mini-papers.
//!
//! Teams submit scored solutions and arguments, cite earlier papers of their
//! own team, and observe each other's work live. Every piece of state is
//! derived from a per-session append-only event log.

pub mod analytics;
pub mod canonical;
pub mod engine;
pub mod evaluator;
pub mod fixtures;
pub mod graph;
pub mod ids;
pub mod model;
pub mod sim;

pub use engine::{replay, state_digest, Command, CorruptLog, Engine, Event, EventBody, Hub, Rejection, SessionState};
pub use evaluator::{Challenge, EvalError, EvaluatorRegistry};
pub use graph::CitationGraph;
pub use ids::{MemberId, PaperId, SessionId, TeamId};
pub use model::{canonical_payload, validate_draft, Limits, MiniPaper, PaperDraft, PaperKind, Score, SolutionPayload, Violation};
