use std::sync::Arc;

use arginote_core::analytics::{
    figure_export, min_score_after, running_best, score_trajectory, spearman_rho, team_summary, AnalysisReport,
    AnalyticsError, TrajectoryPoint,
};
use arginote_core::fixtures::{
    four_team_log, payload_for_score, team_one_log, FOUR_TEAM_SUMMARY, TEAM_ONE_OPENING_BEST, TEAM_ONE_OPENING_PAPERS,
};
use arginote_core::{
    replay, Challenge, Command, Engine, Event, EventBody, EvaluatorRegistry, Limits, PaperDraft, PaperId, Score,
    SessionState, TeamId,
};
use proptest::prelude::*;

fn points(scores: &[f64]) -> Vec<TrajectoryPoint> {
    scores
        .iter()
        .enumerate()
        .map(|(i, s)| TrajectoryPoint { t: i as f64 * 7.5, paper: PaperId::new(format!("p{i}")), score: Score::new(*s).unwrap() })
        .collect()
}

/// Rank of each value: (#smaller) + (#equal + 1) / 2, by counting.
fn counting_ranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let less = values.iter().filter(|w| *w < v).count() as f64;
            let equal = values.iter().filter(|w| *w == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

proptest! {
    #[test]
    fn running_best_matches_quadratic_oracle(scores in prop::collection::vec(0.0..=1.0f64, 0..40)) {
        let pts = points(&scores);
        let best = running_best(&pts);
        prop_assert_eq!(best.len(), scores.len());
        for i in 0..scores.len() {
            let oracle = scores[..=i].iter().cloned().fold(f64::MIN, f64::max);
            prop_assert_eq!(best[i].1.value(), oracle);
            prop_assert_eq!(best[i].0, pts[i].t);
            prop_assert!(best[i].1.value() >= scores[i]);
            if i > 0 {
                prop_assert!(best[i].1.value() >= best[i - 1].1.value());
            }
        }
    }

    #[test]
    fn min_after_matches_scan(scores in prop::collection::vec(0.0..=1.0f64, 0..40), t0 in -10.0..300.0f64) {
        let pts = points(&scores);
        let mut oracle: Option<f64> = None;
        for p in &pts {
            if p.t > t0 {
                oracle = Some(oracle.map_or(p.score.value(), |m| m.min(p.score.value())));
            }
        }
        prop_assert_eq!(min_score_after(&pts, t0).map(Score::value), oracle);
    }

    #[test]
    fn spearman_matches_counting_oracle(pairs in prop::collection::vec((0u8..6, 0u8..6), 2..20)) {
        let pairs: Vec<(f64, f64)> = pairs.into_iter().map(|(a, b)| (a as f64, b as f64)).collect();
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        match spearman_rho(&pairs) {
            Ok(rho) => {
                prop_assert!((-1.0..=1.0).contains(&rho));
                prop_assert!((rho - pearson(&counting_ranks(&xs), &counting_ranks(&ys))).abs() < 1e-12);
            }
            Err(_) => {
                let flat = |v: &[f64]| v.iter().all(|a| *a == v[0]);
                prop_assert!(flat(&xs) || flat(&ys));
            }
        }
    }

    #[test]
    fn spearman_is_rank_invariant(
        pairs in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 3..25),
        scale in 0.01..10.0f64,
        shift in -100.0..100.0f64,
    ) {
        let base = spearman_rho(&pairs);
        prop_assume!(base.is_ok());
        let base = base.unwrap();
        let transformed: Vec<(f64, f64)> = pairs
            .iter()
            .map(|(x, y)| (scale * x.powi(3) + shift, (y / 10.0).exp()))
            .collect();
        let rho = spearman_rho(&transformed).unwrap();
        prop_assert!((rho - base).abs() < 1e-12, "{} vs {}", rho, base);
    }
}

#[test]
fn four_team_summary_pairs() {
    let summaries = team_summary(&four_team_log()).unwrap();
    let pairs: Vec<(usize, f64)> = summaries.iter().map(|s| (s.citation_count, s.best_score.unwrap().value())).collect();
    assert_eq!(pairs.len(), 4);
    for ((count, best), (want_count, want_best)) in pairs.iter().zip(FOUR_TEAM_SUMMARY) {
        assert_eq!(*count, want_count);
        assert!((best - want_best).abs() < 1e-9);
    }
    // Team 3 has the nine-edge topology
    let state = replay(&four_team_log()).unwrap();
    let team3 = state.teams().nth(2).unwrap();
    assert_eq!(team3.graph().citation_edge_count(), 9);
}

#[test]
fn team_one_floor() {
    let log = team_one_log();
    let team = replay(&log).unwrap().teams().next().unwrap().id.clone();
    let traj = score_trajectory(&log, &team).unwrap();
    let best = running_best(&traj);
    let opening = TEAM_ONE_OPENING_PAPERS - 1;
    assert!((best[opening].1.value() - TEAM_ONE_OPENING_BEST).abs() < 1e-9);
    let floor = min_score_after(&traj, traj[opening].t).unwrap();
    assert!(floor.value() >= TEAM_ONE_OPENING_BEST - 1e-9);
}

#[test]
fn summary_best_is_last_running_best_and_figure_flags_agree() {
    let log = four_team_log();
    let state = replay(&log).unwrap();
    for summary in team_summary(&log).unwrap() {
        let traj = score_trajectory(&log, &summary.team).unwrap();
        assert_eq!(running_best(&traj).last().map(|b| b.1), summary.best_score);

        let graph = state.team(&summary.team).unwrap().graph();
        let figure = figure_export(&log, &summary.team).unwrap();
        assert_eq!(figure.len(), graph.len());
        for p in &figure {
            assert_eq!(p.is_cited, !graph.cited_by(&p.paper).unwrap().is_empty());
            assert_eq!(p.is_citing, !graph.cites(&p.paper).unwrap().is_empty());
        }
        let stars = figure.iter().filter(|p| p.is_final_analysis).count();
        assert_eq!(stars, usize::from(summary.final_paper.is_some()));
    }
}

#[test]
fn team_one_figure_has_one_star_at_running_best() {
    let log = team_one_log();
    let team = replay(&log).unwrap().teams().next().unwrap().id.clone();
    let figure = figure_export(&log, &team).unwrap();
    let stars: Vec<_> = figure.iter().filter(|p| p.is_final_analysis).collect();
    assert_eq!(stars.len(), 1);
    assert!(stars[0].synthetic_score);
    assert!((stars[0].score.value() - 0.991).abs() < 1e-9);
    assert!(figure.iter().filter(|p| !p.is_final_analysis).all(|p| !p.synthetic_score));
}

/// Builds a one-team log from (seconds, draft) submissions.
fn one_team(submissions: Vec<(u64, PaperDraft)>) -> (Vec<Event>, TeamId) {
    let e = Engine::new(Arc::new(EvaluatorRegistry::with_builtins()), Limits::default());
    let mut state = SessionState::reserve("s1".into());
    let mut log = Vec::new();
    let mut run = |state: &mut SessionState, cmd, at| {
        let (next, ev) = e.apply_command(state, &cmd, at).unwrap();
        *state = next;
        log.extend(ev.clone());
        ev[0].body.clone()
    };
    run(&mut state, Command::CreateSession { challenge: Challenge::gaussian("c", &[0.0, 0.0]) }, 50_000);
    let EventBody::TeamCreated { team_id, .. } = run(&mut state, Command::CreateTeam { session: "s1".into(), name: "T".into() }, 50_000) else { panic!() };
    let EventBody::MemberJoined { member_id, .. } = run(&mut state, Command::JoinTeam { team: team_id.clone(), display_name: "a".into() }, 50_000) else { panic!() };
    for (secs, draft) in submissions {
        run(&mut state, Command::SubmitPaper { team: team_id.clone(), author: member_id.clone(), draft }, 50_000 + secs * 1000);
    }
    (log, team_id)
}

#[test]
fn small_hand_computed_fixtures() {
    let (log, team) = one_team(vec![]);
    assert!(score_trajectory(&log, &team).unwrap().is_empty());
    assert_eq!(team_summary(&log).unwrap()[0].best_score, None);
    assert!(team_summary(&[]).unwrap().is_empty());

    let (log, team) = one_team(vec![(10, PaperDraft::solution("half", payload_for_score(0.5)))]);
    let traj = score_trajectory(&log, &team).unwrap();
    assert_eq!(traj.len(), 1);
    assert_eq!(traj[0].t, 10.0);
    assert!((traj[0].score.value() - 0.5).abs() < 1e-12);
    let fig = figure_export(&log, &team).unwrap();
    assert_eq!(fig.len(), 1);
    assert!(!fig[0].is_cited && !fig[0].is_citing);

    // two papers, one citation, scores 0.2 and 0.4 -> (1, 0.4)
    let (log, team) = one_team(vec![
        (5, PaperDraft::solution("a", payload_for_score(0.2))),
        (9, PaperDraft::solution("b", payload_for_score(0.4)).citing(["s1-p4"])),
    ]);
    let s = &team_summary(&log).unwrap()[0];
    assert_eq!(s.citation_count, 1);
    assert!((s.best_score.unwrap().value() - 0.4).abs() < 1e-12);
    let fig = figure_export(&log, &team).unwrap();
    assert!(fig[0].is_cited && !fig[0].is_citing);
    assert!(!fig[1].is_cited && fig[1].is_citing);

    assert_eq!(score_trajectory(&log, &"zz".into()), Err(AnalyticsError::UnknownTeam("zz".into())));
    assert!(matches!(figure_export(&log, &"zz".into()), Err(AnalyticsError::UnknownTeam(_))));
}

#[test]
fn report_is_a_pure_function_of_the_log() {
    let a = AnalysisReport::from_log(&four_team_log()).unwrap().to_json();
    let b = AnalysisReport::from_log(&four_team_log()).unwrap().to_json();
    assert_eq!(a, b);
    let report = AnalysisReport::from_log(&four_team_log()).unwrap();
    assert!((report.spearman.unwrap() - 0.737_864_787_372_621_8).abs() < 1e-9);
}
