//! Synthetic session logs for demos and tests.
//!
//! Four teams whose final citation counts and best scores are
//! (4, 0.991), (1, 0.72), (9, 0.88) and (1, 0.785). Team 1 opens with four
//! papers, the best scoring 0.72, and never drops below that afterwards.
//! Timings and intermediate scores are illustrative.

use std::sync::Arc;

use serde_json::{json, Value};

use crate::engine::{Command, Engine, Event, EventBody, SessionState};
use crate::evaluator::{Challenge, EvaluatorRegistry};
use crate::ids::{MemberId, PaperId, SessionId, TeamId};
use crate::model::{Limits, PaperDraft};

pub const FIXTURE_START_MS: u64 = 1_700_000_000_000;
pub const FIXTURE_SESSION: &str = "s1";

/// Number of opening papers in Team 1's burst.
pub const TEAM_ONE_OPENING_PAPERS: usize = 4;
/// Best score among Team 1's opening papers.
pub const TEAM_ONE_OPENING_BEST: f64 = 0.72;

/// Expected `(citation_count, best_score)` per team of [`four_team_log`].
pub const FOUR_TEAM_SUMMARY: [(usize, f64); 4] = [(4, 0.991), (1, 0.72), (9, 0.88), (1, 0.785)];

pub fn fixture_challenge() -> Challenge {
    Challenge::gaussian("reference-2d", &[0.0, 0.0])
}

/// A payload whose gaussian-proximity score against the origin is `score`.
pub fn payload_for_score(score: f64) -> Value {
    json!({ "params": [(-score.ln()).sqrt(), 0.0] })
}

#[derive(Clone, Copy)]
enum Kind {
    Solution(f64),
    Argument { is_final: bool },
}

struct Planned {
    at_s: u64,
    author: usize,
    title: &'static str,
    kind: Kind,
    /// Indices into the same team's plan.
    cites: &'static [usize],
}

const fn sol(at_s: u64, author: usize, title: &'static str, score: f64, cites: &'static [usize]) -> Planned {
    Planned { at_s, author, title, kind: Kind::Solution(score), cites }
}

const fn fin(at_s: u64, author: usize, title: &'static str, cites: &'static [usize]) -> Planned {
    Planned { at_s, author, title, kind: Kind::Argument { is_final: true }, cites }
}

struct TeamPlan {
    name: &'static str,
    members: &'static [&'static str],
    papers: Vec<Planned>,
}

fn team_one() -> TeamPlan {
    TeamPlan {
        name: "Team 1",
        members: &["ada", "bjorn", "chiara", "dag"],
        papers: vec![
            sol(240, 0, "first sweep", 0.31, &[]),
            sol(420, 1, "wide pulse", 0.55, &[]),
            sol(540, 2, "two-step ramp", 0.72, &[]),
            sol(660, 3, "slow ramp", 0.48, &[]),
            sol(1380, 0, "ramp with shorter hold", 0.76, &[2]),
            sol(1920, 1, "tuned hold time", 0.84, &[4]),
            sol(2640, 2, "adiabatic variant", 0.93, &[]),
            sol(3180, 3, "adiabatic, refined", 0.991, &[6]),
            fin(3480, 0, "why the adiabatic ramp works", &[7]),
        ],
    }
}

fn other_teams() -> Vec<TeamPlan> {
    vec![
        TeamPlan {
            name: "Team 2",
            members: &["eva", "femi", "gus", "hana"],
            papers: vec![
                sol(300, 0, "baseline", 0.41, &[]),
                sol(900, 1, "longer sweep", 0.63, &[]),
                sol(1800, 2, "sweep plus kick", 0.72, &[1]),
                sol(2700, 3, "kick only", 0.70, &[]),
            ],
        },
        TeamPlan {
            name: "Team 3",
            members: &["ivo", "jun", "kai", "lena", "mo"],
            papers: vec![
                sol(360, 0, "guess", 0.35, &[]),
                sol(780, 1, "guess, shifted", 0.52, &[0]),
                sol(1200, 2, "shift further", 0.61, &[1]),
                sol(1500, 3, "combine both shifts", 0.66, &[1, 2]),
                sol(2100, 4, "smooth the combination", 0.74, &[3]),
                sol(2520, 0, "merge smooth and shifted", 0.80, &[3, 4]),
                sol(3000, 1, "final tuning", 0.88, &[5]),
                fin(3420, 2, "what made the difference", &[6]),
            ],
        },
        TeamPlan {
            name: "Team 4",
            members: &["nils", "olga", "pia", "quinn"],
            papers: vec![
                sol(480, 0, "first try", 0.52, &[]),
                sol(1320, 1, "second try", 0.66, &[]),
                sol(2940, 2, "second try, refined", 0.785, &[1]),
            ],
        },
    ]
}

struct Builder {
    engine: Engine,
    state: SessionState,
    events: Vec<Event>,
}

impl Builder {
    fn new() -> Self {
        let engine = Engine::new(Arc::new(EvaluatorRegistry::with_builtins()), Limits::default());
        let mut b = Self { engine, state: SessionState::reserve(SessionId::from(FIXTURE_SESSION)), events: Vec::new() };
        b.run(Command::CreateSession { challenge: fixture_challenge() }, 0);
        b
    }

    fn run(&mut self, cmd: Command, at_ms: u64) -> Event {
        let (state, events) = self
            .engine
            .apply_command(&self.state, &cmd, FIXTURE_START_MS + at_ms)
            .expect("fixture commands are valid");
        self.state = state;
        self.events.extend(events.iter().cloned());
        events.into_iter().next().expect("one event per command")
    }

    fn build(mut self, plans: Vec<TeamPlan>) -> Vec<Event> {
        let session = SessionId::from(FIXTURE_SESSION);
        let mut teams: Vec<(TeamId, Vec<MemberId>)> = Vec::new();
        let mut setup_ms = 1_000;
        for plan in &plans {
            let ev = self.run(Command::CreateTeam { session: session.clone(), name: plan.name.into() }, setup_ms);
            let EventBody::TeamCreated { team_id, .. } = ev.body else { unreachable!() };
            let mut members = Vec::new();
            for name in plan.members {
                setup_ms += 1_000;
                let ev = self.run(Command::JoinTeam { team: team_id.clone(), display_name: (*name).into() }, setup_ms);
                let EventBody::MemberJoined { member_id, .. } = ev.body else { unreachable!() };
                members.push(member_id);
            }
            teams.push((team_id, members));
            setup_ms += 1_000;
        }

        let mut schedule: Vec<(u64, usize, usize)> = plans
            .iter()
            .enumerate()
            .flat_map(|(t, plan)| plan.papers.iter().enumerate().map(move |(i, p)| (p.at_s, t, i)))
            .collect();
        schedule.sort();

        let mut ids: Vec<Vec<Option<PaperId>>> = plans.iter().map(|p| vec![None; p.papers.len()]).collect();
        for (at_s, t, i) in schedule {
            let planned = &plans[t].papers[i];
            let (team, members) = &teams[t];
            let citations: Vec<PaperId> = planned
                .cites
                .iter()
                .map(|c| ids[t][*c].clone().expect("cited papers come earlier"))
                .collect();
            let draft = match planned.kind {
                Kind::Solution(score) => PaperDraft::solution(planned.title, payload_for_score(score)),
                Kind::Argument { is_final } => {
                    let d = PaperDraft::argument(planned.title, "Summary of what the team learned.");
                    if is_final {
                        d.final_analysis()
                    } else {
                        d
                    }
                }
            }
            .citing(citations);
            let ev = self.run(
                Command::SubmitPaper { team: team.clone(), author: members[planned.author].clone(), draft },
                at_s * 1_000,
            );
            let EventBody::PaperSubmitted { paper } = ev.body else { unreachable!() };
            ids[t][i] = Some(paper.id);
        }
        self.events
    }
}

/// A session containing only Team 1.
pub fn team_one_log() -> Vec<Event> {
    Builder::new().build(vec![team_one()])
}

/// A session with all four teams.
pub fn four_team_log() -> Vec<Event> {
    let mut plans = vec![team_one()];
    plans.extend(other_teams());
    Builder::new().build(plans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::team_summary;
    use crate::engine::replay;

    #[test]
    fn payloads_hit_requested_scores() {
        let reg = EvaluatorRegistry::with_builtins();
        for s in [0.31, 0.72, 0.991, 0.785, 0.88] {
            let got = reg
                .evaluate(&fixture_challenge(), &crate::model::SolutionPayload::new(payload_for_score(s)))
                .unwrap();
            assert!((got.value() - s).abs() < 1e-12);
        }
    }

    #[test]
    fn four_team_log_replays() {
        let log = four_team_log();
        let state = replay(&log).unwrap();
        assert_eq!(state.teams().count(), 4);
        assert_eq!(team_summary(&log).unwrap().len(), 4);
        assert_eq!(log, four_team_log());
    }
}
