use congen::checker::{score_posterior, Candidate};
use congen::constraints::CnfConstraint;
use proptest::prelude::*;

fn cand(id: u32, text: &str, lp: f64) -> Candidate {
    Candidate { ids: vec![id], text: text.into(), lm_logprob: lp }
}

#[test]
fn three_candidate_example() {
    let c = CnfConstraint::parse("(dog)").unwrap();
    let cands =
        [cand(0, "the dog runs", 0.5f64.ln()), cand(1, "a dog sits", 0.3f64.ln()), cand(2, "a cat sits", 0.2f64.ln())];
    let s = score_posterior(&cands, &c, None, 2f64.ln()).unwrap();
    let weights: Vec<(u32, f64)> = s.iter().map(|x| (x.ids[0], x.posterior_weight)).collect();
    for ((id, w), (want_id, want)) in weights.iter().zip([(0, 5.0 / 9.0), (1, 3.0 / 9.0), (2, 1.0 / 9.0)]) {
        assert_eq!(*id, want_id);
        assert!((w - want).abs() < 1e-12, "{w} vs {want}");
    }
    assert_eq!(s[2].lexical_degree, 1);
}

#[test]
fn lambda_zero_is_the_lm_posterior() {
    let c = CnfConstraint::parse("(dog)&!(cat)").unwrap();
    let cands = [cand(0, "cat", 0.25f64.ln()), cand(1, "dog", 0.75f64.ln())];
    let s = score_posterior(&cands, &c, None, 0.0).unwrap();
    assert_eq!(s[0].ids, vec![1]);
    assert!((s[0].posterior_weight - 0.75).abs() < 1e-12);
    assert_eq!(s[1].lexical_degree, 2);
}

fn candidates() -> impl Strategy<Value = Vec<Candidate>> {
    let text = prop::sample::select(vec!["dog", "cat", "dog cat", "bird", "dog runs", ""]);
    prop::collection::vec((text, -30.0f64..0.0), 1..8)
        .prop_map(|v| v.into_iter().enumerate().map(|(i, (t, lp))| cand(i as u32, t, lp)).collect())
}

proptest! {
    #[test]
    fn weights_sum_to_one(cands in candidates(), lambda in 0.0f64..5.0) {
        let c = CnfConstraint::parse("(dog)&!(cat)").unwrap();
        let s = score_posterior(&cands, &c, None, lambda).unwrap();
        let total: f64 = s.iter().map(|x| x.posterior_weight).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(s.windows(2).all(|w| w[0].posterior_weight >= w[1].posterior_weight));
    }

    #[test]
    fn argmax_is_shift_invariant(cands in candidates(), lambda in 0.0f64..5.0, shift in -50.0f64..50.0) {
        let c = CnfConstraint::parse("(dog)&!(cat)").unwrap();
        let shifted: Vec<Candidate> = cands.iter().map(|x| Candidate { lm_logprob: x.lm_logprob + shift, ..x.clone() }).collect();
        let a = score_posterior(&cands, &c, None, lambda).unwrap();
        let b = score_posterior(&shifted, &c, None, lambda).unwrap();
        let best = |s: &[congen::checker::ScoredCandidate]| {
            let top = s[0].posterior_weight;
            s.iter().filter(|x| (x.posterior_weight - top).abs() <= 1e-12 * top.max(1e-300)).map(|x| x.ids.clone()).collect::<std::collections::BTreeSet<_>>()
        };
        prop_assert!(best(&a).contains(&b[0].ids));
        prop_assert!(best(&b).contains(&a[0].ids));
    }
}
