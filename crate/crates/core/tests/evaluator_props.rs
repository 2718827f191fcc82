use arginote_core::evaluator::GAUSSIAN_PROXIMITY;
use arginote_core::{Challenge, EvaluatorRegistry, SolutionPayload};
use proptest::prelude::*;
use serde_json::json;

fn score(reg: &EvaluatorRegistry, challenge: &Challenge, x: &[f64]) -> f64 {
    reg.evaluate(challenge, &SolutionPayload::new(json!({ "params": x })))
        .unwrap()
        .value()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn vectors(dim: usize, bound: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-bound..=bound, dim)
}

proptest! {
    #[test]
    fn scores_stay_in_unit_interval(target in vectors(3, 100.0), x in vectors(3, 100.0)) {
        let reg = EvaluatorRegistry::with_builtins();
        let s = score(&reg, &Challenge::gaussian("c", &target), &x);
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn equal_payloads_score_identically(x in vectors(2, 5.0)) {
        let reg = EvaluatorRegistry::with_builtins();
        let c = Challenge::gaussian("c", &[0.25, -1.0]);
        let text = serde_json::to_string(&json!({ "params": x })).unwrap();
        let a = reg.evaluate(&c, &SolutionPayload::from_json_str(&text).unwrap()).unwrap();
        let b = reg.evaluate(&c, &SolutionPayload::from_json_str(&text).unwrap()).unwrap();
        prop_assert_eq!(a.value().to_bits(), b.value().to_bits());
    }

    #[test]
    fn closer_solutions_score_higher(target in vectors(2, 10.0), x1 in vectors(2, 20.0), x2 in vectors(2, 20.0)) {
        let reg = EvaluatorRegistry::with_builtins();
        let c = Challenge::gaussian("c", &target);
        let (d1, d2) = (sq_dist(&x1, &target), sq_dist(&x2, &target));
        let (s1, s2) = (score(&reg, &c, &x1), score(&reg, &c, &x2));
        if d1 < d2 {
            prop_assert!(s1 >= s2);
            // strict wherever exp(-d²) is representable and the distances differ
            if d2 < 700.0 && d2 - d1 > 1e-12 {
                prop_assert!(s1 > s2, "d1={d1} d2={d2} s1={s1} s2={s2}");
            }
        }
    }

    #[test]
    fn only_the_target_scores_one(target in vectors(2, 10.0), offset in vectors(2, 1e-6)) {
        let reg = EvaluatorRegistry::with_builtins();
        let c = Challenge::gaussian("c", &target);
        prop_assert_eq!(score(&reg, &c, &target), 1.0);
        let x: Vec<f64> = target.iter().zip(&offset).map(|(t, o)| t + o).collect();
        let s = score(&reg, &c, &x);
        prop_assert_eq!(s == 1.0, x == target);
    }
}

#[test]
fn builtin_kind_name() {
    let reg = EvaluatorRegistry::with_builtins();
    assert_eq!(reg.kinds().collect::<Vec<_>>(), vec![GAUSSIAN_PROXIMITY]);
}
