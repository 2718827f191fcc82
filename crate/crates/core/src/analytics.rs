//! Read-side measurements over session logs: score trajectories, running
//! best, per-team summaries, rank correlation and figure exports.
//!
//! Everything here is a pure function of the event log.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::canonical;
use crate::engine::{replay, CorruptLog, Event, SessionState, TeamState};
use crate::ids::{PaperId, TeamId};
use crate::model::{PaperKind, Score};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("unknown team {0}")]
    UnknownTeam(TeamId),
    #[error(transparent)]
    Corrupt(#[from] CorruptLog),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SpearmanError {
    #[error("at least two pairs are required")]
    TooFewPairs,
    #[error("one coordinate has no variance; correlation is undefined")]
    ZeroVariance,
    #[error("pairs contain a non-finite value")]
    NonFiniteInput,
}

/// One solution paper on the score-vs-time plot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    /// Seconds since the session was created.
    pub t: f64,
    pub paper: PaperId,
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TeamSummary {
    pub team: TeamId,
    pub name: String,
    pub citation_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_score: Option<Score>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_paper: Option<PaperId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigurePoint {
    pub t: f64,
    pub paper: PaperId,
    pub kind: PaperKind,
    pub score: Score,
    /// Set when `score` is a plotting position (running best) rather than an evaluated score.
    pub synthetic_score: bool,
    pub is_cited: bool,
    pub is_citing: bool,
    pub is_final_analysis: bool,
}

fn seconds_since_start(state: &SessionState, at: u64) -> f64 {
    let start = state.session().map_or(0, |s| s.created_at);
    at.saturating_sub(start) as f64 / 1000.0
}

fn team<'a>(state: &'a SessionState, id: &TeamId) -> Result<&'a TeamState, AnalyticsError> {
    state.team(id).ok_or_else(|| AnalyticsError::UnknownTeam(id.clone()))
}

fn trajectory_of(state: &SessionState, team: &TeamState) -> Vec<TrajectoryPoint> {
    team.papers()
        .iter()
        .filter_map(|p| {
            p.score.map(|score| TrajectoryPoint {
                t: seconds_since_start(state, p.submitted_at),
                paper: p.id.clone(),
                score,
            })
        })
        .collect()
}

fn summary_of(team: &TeamState) -> TeamSummary {
    TeamSummary {
        team: team.id.clone(),
        name: team.name.clone(),
        citation_count: team.graph().citation_edge_count(),
        best_score: team
            .papers()
            .iter()
            .filter_map(|p| p.score)
            .max_by(|a, b| a.value().total_cmp(&b.value())),
        final_paper: team.final_paper().cloned(),
    }
}

fn figure_of(state: &SessionState, team: &TeamState) -> Vec<FigurePoint> {
    let graph = team.graph();
    let mut best: Option<Score> = None;
    team.papers()
        .iter()
        .map(|p| {
            let (score, synthetic_score) = match p.score {
                Some(s) => {
                    if best.is_none_or(|b| s.value() > b.value()) {
                        best = Some(s);
                    }
                    (s, false)
                }
                None => (best.unwrap_or(Score::MIN), true),
            };
            FigurePoint {
                t: seconds_since_start(state, p.submitted_at),
                paper: p.id.clone(),
                kind: p.kind,
                score,
                synthetic_score,
                is_cited: graph.cited_by(&p.id).is_ok_and(|s| !s.is_empty()),
                is_citing: !p.citations.is_empty(),
                is_final_analysis: p.is_final,
            }
        })
        .collect()
}

/// Solution papers of `team` in seq order, timed from session start.
pub fn score_trajectory(log: &[Event], team: &TeamId) -> Result<Vec<TrajectoryPoint>, AnalyticsError> {
    let state = replay(log)?;
    Ok(trajectory_of(&state, self::team(&state, team)?))
}

/// Prefix maximum of the scores, keeping each point's time.
pub fn running_best(points: &[TrajectoryPoint]) -> Vec<(f64, Score)> {
    let mut best: Option<Score> = None;
    points
        .iter()
        .map(|p| {
            let b = match best {
                Some(b) if b.value() >= p.score.value() => b,
                _ => p.score,
            };
            best = Some(b);
            (p.t, b)
        })
        .collect()
}

/// Lowest raw score strictly after `t0`.
pub fn min_score_after(points: &[TrajectoryPoint], t0: f64) -> Option<Score> {
    points
        .iter()
        .filter(|p| p.t > t0)
        .map(|p| p.score)
        .min_by(|a, b| a.value().total_cmp(&b.value()))
}

/// One summary per team, in team creation order.
pub fn team_summary(log: &[Event]) -> Result<Vec<TeamSummary>, CorruptLog> {
    let state = replay(log)?;
    Ok(state.teams().map(summary_of).collect())
}

pub fn figure_export(log: &[Event], team: &TeamId) -> Result<Vec<FigurePoint>, AnalyticsError> {
    let state = replay(log)?;
    Ok(figure_of(&state, self::team(&state, team)?))
}

/// Ranks starting at 1; tied values share the mean of the positions they span.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman's rank correlation with tie-averaged ranks.
pub fn spearman_rho(pairs: &[(f64, f64)]) -> Result<f64, SpearmanError> {
    if pairs.len() < 2 {
        return Err(SpearmanError::TooFewPairs);
    }
    if pairs.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(SpearmanError::NonFiniteInput);
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let rx = fractional_ranks(&xs);
    let ry = fractional_ranks(&ys);
    let n = pairs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (dx, dy) = (a - mean, b - mean);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(SpearmanError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Everything `analyze` reports for one session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub teams: Vec<TeamSummary>,
    pub trajectories: BTreeMap<TeamId, Vec<TrajectoryPoint>>,
    pub figure: BTreeMap<TeamId, Vec<FigurePoint>>,
    /// Rank correlation between citation count and best score across teams
    /// with at least one solution; `null` when undefined.
    pub spearman: Option<f64>,
}

impl AnalysisReport {
    pub fn from_state(state: &SessionState) -> Self {
        let teams: Vec<TeamSummary> = state.teams().map(summary_of).collect();
        let pairs: Vec<(f64, f64)> = teams
            .iter()
            .filter_map(|t| t.best_score.map(|s| (t.citation_count as f64, s.value())))
            .collect();
        Self {
            trajectories: state.teams().map(|t| (t.id.clone(), trajectory_of(state, t))).collect(),
            figure: state.teams().map(|t| (t.id.clone(), figure_of(state, t))).collect(),
            spearman: spearman_rho(&pairs).ok(),
            teams,
        }
    }

    pub fn from_log(log: &[Event]) -> Result<Self, CorruptLog> {
        Ok(Self::from_state(&replay(log)?))
    }

    /// Canonical JSON text.
    pub fn to_json(&self) -> String {
        canonical::to_canonical_string(self).expect("report is always representable")
    }
}

pub const FIGURE_CSV_HEADER: &str = "t,score,is_cited,is_citing,is_final";

pub fn figure_csv(points: &[FigurePoint]) -> String {
    let mut out = String::from(FIGURE_CSV_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(out, "{},{},{},{},{}", p.t, p.score, p.is_cited, p.is_citing, p.is_final_analysis);
    }
    out
}
