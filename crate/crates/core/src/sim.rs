//! Scripted agents that drive a session through the full command path.
//!
//! Agents hill-climb on the reference challenge: each solution perturbs the
//! team's best known parameters and cites the paper it started from. The
//! run is fully determined by the script and the seed.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::{Command, Engine, EventBody, Hub, HubError, ManualClock};
use crate::evaluator::{Challenge, EvaluatorRegistry, GaussianProximityParams, GAUSSIAN_PROXIMITY};
use crate::ids::{MemberId, PaperId, SessionId, TeamId};
use crate::model::{Limits, PaperDraft};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamScript {
    pub name: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationScript {
    pub challenge: Challenge,
    pub start_ms: u64,
    pub teams: Vec<TeamScript>,
    /// Number of paper submission attempts, not counting final analyses.
    pub submissions: usize,
    /// Inclusive range of simulated milliseconds between attempts.
    pub step_ms: (u64, u64),
    pub cite_probability: f64,
    pub argument_probability: f64,
    /// Share of attempts that deliberately cite a missing paper.
    pub invalid_probability: f64,
    /// Largest per-coordinate perturbation of a parent solution.
    pub step_size: f64,
    /// Half-width of the box initial guesses are drawn from.
    pub initial_spread: f64,
    pub final_analysis: bool,
}

impl Default for SimulationScript {
    fn default() -> Self {
        Self {
            challenge: Challenge::gaussian("reference-2d", &[0.0, 0.0]),
            start_ms: 1_700_000_000_000,
            teams: (1..=4)
                .map(|i| TeamScript {
                    name: format!("Team {i}"),
                    members: (1..=4).map(|m| format!("student {i}.{m}")).collect(),
                })
                .collect(),
            submissions: 40,
            step_ms: (5_000, 90_000),
            cite_probability: 0.6,
            argument_probability: 0.1,
            invalid_probability: 0.05,
            step_size: 0.5,
            initial_spread: 2.0,
            final_analysis: true,
        }
    }
}

impl SimulationScript {
    pub fn from_json_str(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("simulation only supports the {GAUSSIAN_PROXIMITY} challenge, got {0:?}")]
    UnsupportedChallenge(String),
    #[error("invalid script: {0}")]
    InvalidScript(String),
    #[error(transparent)]
    Hub(#[from] HubError),
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub session: SessionId,
    /// The exported event log.
    pub log: Vec<u8>,
    pub accepted: usize,
    pub rejected: usize,
}

struct TeamAgentState {
    id: TeamId,
    members: Vec<MemberId>,
    papers: Vec<PaperId>,
    /// Best solution so far: (paper, params, score).
    best: Option<(PaperId, Vec<f64>, f64)>,
}

pub fn simulate(script: &SimulationScript, seed: u64) -> Result<SimulationOutcome, SimError> {
    if script.challenge.kind != GAUSSIAN_PROXIMITY {
        return Err(SimError::UnsupportedChallenge(script.challenge.kind.clone()));
    }
    let params = GaussianProximityParams::parse(&script.challenge.params)
        .map_err(|e| SimError::InvalidScript(e.to_string()))?;
    if script.teams.is_empty() || script.teams.iter().any(|t| t.members.is_empty()) {
        return Err(SimError::InvalidScript("every team needs at least one member".into()));
    }
    if script.step_ms.0 > script.step_ms.1 {
        return Err(SimError::InvalidScript("step_ms must be an ascending range".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clock = Arc::new(ManualClock::new(script.start_ms));
    let engine = Engine::new(Arc::new(EvaluatorRegistry::with_builtins()), Limits::default());
    let hub = Hub::in_memory(engine, clock.clone());
    let step = |rng: &mut ChaCha8Rng| clock.advance(rng.random_range(script.step_ms.0..=script.step_ms.1));

    let (session, _) = hub.create_session(script.challenge.clone())?;
    let mut teams = Vec::new();
    for team in &script.teams {
        step(&mut rng);
        let events = hub.execute(Command::CreateTeam { session: session.clone(), name: team.name.clone() })?;
        let EventBody::TeamCreated { team_id, .. } = &events[0].body else { unreachable!() };
        let mut members = Vec::new();
        for name in &team.members {
            let events = hub.execute(Command::JoinTeam { team: team_id.clone(), display_name: name.clone() })?;
            let EventBody::MemberJoined { member_id, .. } = &events[0].body else { unreachable!() };
            members.push(member_id.clone());
        }
        teams.push(TeamAgentState { id: team_id.clone(), members, papers: Vec::new(), best: None });
    }

    let (mut accepted, mut rejected) = (0, 0);
    for attempt in 0..script.submissions {
        step(&mut rng);
        let t = rng.random_range(0..teams.len());
        let team = &mut teams[t];
        let author = team.members[rng.random_range(0..team.members.len())].clone();

        let mut citations = Vec::new();
        let mut candidate = None;
        let draft = if !team.papers.is_empty() && rng.random_bool(script.argument_probability) {
            let n = rng.random_range(0..=team.papers.len().min(3));
            for _ in 0..n {
                let id = team.papers[rng.random_range(0..team.papers.len())].clone();
                if !citations.contains(&id) {
                    citations.push(id);
                }
            }
            PaperDraft::argument(format!("observation {attempt}"), "Notes on what we tried so far.")
        } else {
            let x: Vec<f64> = match &team.best {
                Some((parent, base, _)) => {
                    if rng.random_bool(script.cite_probability) {
                        citations.push(parent.clone());
                    }
                    base.iter()
                        .map(|b| b + rng.random_range(-script.step_size..=script.step_size))
                        .collect()
                }
                None => params
                    .target
                    .iter()
                    .map(|c| c + rng.random_range(-script.initial_spread..=script.initial_spread))
                    .collect(),
            };
            candidate = Some(x.clone());
            PaperDraft::solution(format!("attempt {attempt}"), json!({ "params": x }))
        };
        if rng.random_bool(script.invalid_probability) {
            citations.push(PaperId::new(format!("{session}-missing-{attempt}")));
        }
        let draft = draft.citing(citations);

        match hub.execute(Command::SubmitPaper { team: team.id.clone(), author, draft }) {
            Ok(events) => {
                accepted += 1;
                let EventBody::PaperSubmitted { paper } = &events[0].body else { unreachable!() };
                team.papers.push(paper.id.clone());
                if let (Some(score), Some(x)) = (paper.score, candidate) {
                    if team.best.as_ref().is_none_or(|(_, _, b)| score.value() > *b) {
                        team.best = Some((paper.id.clone(), x, score.value()));
                    }
                }
            }
            Err(HubError::Rejected(_)) => rejected += 1,
            Err(other) => return Err(other.into()),
        }
    }

    if script.final_analysis {
        for team in &teams {
            step(&mut rng);
            let cites: Vec<PaperId> = team.best.iter().map(|(id, _, _)| id.clone()).collect();
            let draft = PaperDraft::argument("final analysis", "Our joint account of the best solution.")
                .citing(cites)
                .final_analysis();
            hub.execute(Command::SubmitPaper { team: team.id.clone(), author: team.members[0].clone(), draft })?;
            accepted += 1;
        }
    }

    let log = hub.export(&session).expect("session exists");
    Ok(SimulationOutcome { session, log, accepted, rejected })
}
