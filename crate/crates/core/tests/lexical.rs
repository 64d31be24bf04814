mod oracles;

use congen::constraints::{advance, words, ClauseStatus, CnfConstraint};
use oracles::{pattern_status, random_clauses, random_sentence, small_word};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pool(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut p: Vec<String> = (0..10).map(|_| small_word(rng)).collect();
    p.sort();
    p.dedup();
    p
}

fn expected(clauses: &[(bool, Vec<String>)], text: &str) -> Vec<ClauseStatus> {
    pattern_status(clauses, text)
        .into_iter()
        .map(|(positive, hit)| match (positive, hit) {
            (true, true) => ClauseStatus::Met,
            (true, false) => ClauseStatus::Unmet,
            (false, true) => ClauseStatus::Violated,
            (false, false) => ClauseStatus::Met,
        })
        .collect()
}

#[test]
fn evaluate_matches_pattern_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..1000 {
        let p = pool(&mut rng);
        let (clauses, spec) = random_clauses(&mut rng, &p);
        let c = CnfConstraint::parse(&spec).unwrap();
        let text = random_sentence(&mut rng, &p);
        assert_eq!(c.evaluate_text(&text).clause_status, expected(&clauses, &text), "case {case}: {spec} / {text:?}");
    }
}

#[test]
fn advance_fold_equals_evaluate() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..1000 {
        let p = pool(&mut rng);
        let (_, spec) = random_clauses(&mut rng, &p);
        let c = CnfConstraint::parse(&spec).unwrap();
        let ws = words(&random_sentence(&mut rng, &p));
        let folded = ws.iter().fold(c.initial_state(), |s, w| advance(&s, w, &c));
        assert_eq!(folded, c.evaluate(&ws), "case {case}: {spec} / {ws:?}");
    }
}

fn positive_constraint() -> impl Strategy<Value = (String, Vec<String>)> {
    let word = "[ab]{1,2}";
    (prop::collection::btree_set(word, 1..5), prop::collection::vec(word, 0..10)).prop_map(|(forms, sentence)| {
        let spec = forms.iter().map(|f| format!("({f})")).collect::<Vec<_>>().join("&");
        (spec, sentence)
    })
}

proptest! {
    #[test]
    fn coverage_never_drops_without_forbid((spec, sentence) in positive_constraint()) {
        let c = CnfConstraint::parse(&spec).unwrap();
        let mut state = c.initial_state();
        for w in &sentence {
            let next = c.advance(&state, w);
            prop_assert!(next.coverage() >= state.coverage());
            state = next;
        }
    }

    #[test]
    fn full_coverage_iff_satisfied_without_forbid((spec, sentence) in positive_constraint()) {
        let c = CnfConstraint::parse(&spec).unwrap();
        let s = c.evaluate(&sentence);
        prop_assert_eq!(s.coverage() == 1.0, s.is_satisfied());
    }

    #[test]
    fn violation_is_permanent(prefix in prop::collection::vec("[abc]", 0..6), suffix in prop::collection::vec("[abc]", 0..6)) {
        let c = CnfConstraint::parse("!(a)&(b)").unwrap();
        let s = c.evaluate(&prefix);
        if s.has_violation() {
            let all: Vec<String> = prefix.iter().chain(&suffix).cloned().collect();
            prop_assert!(c.evaluate(&all).has_violation());
        }
    }

    #[test]
    fn display_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = pool(&mut rng);
        let (_, spec) = random_clauses(&mut rng, &p);
        let c = CnfConstraint::parse(&spec).unwrap();
        prop_assert_eq!(CnfConstraint::parse(&c.to_string()).unwrap(), c);
    }
}
