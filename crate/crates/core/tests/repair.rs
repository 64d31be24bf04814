mod oracles;

use congen::constraints::{words, CnfConstraint};
use congen::lm::{LmBackend, NgramLm};
use congen::mock;
use congen::repair::{apply_edits, default_budget, repair_lexical, EditOp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn repairs_every_failing_generation() {
    let lm = mock::ngram(0).unwrap();
    let cases = oracles::failing_generations(&lm, 100);
    assert!(cases.iter().any(|(ws, c)| c.evaluate(ws).has_violation()));
    for (i, (ws, c)) in cases.iter().enumerate() {
        let budget = default_budget(ws, c);
        let r = repair_lexical(ws, c, &lm, budget).unwrap();
        assert!(r.satisfied, "case {i}: {ws:?} under {c}");
        assert!(r.edits.len() <= budget);
        assert!(!r.words.iter().any(|w| words(w).iter().any(|x| c.is_forbidden(x))), "case {i}");
        assert_eq!(apply_edits(ws, &r.edits).unwrap(), r.words);
    }
}

#[test]
fn satisfied_inputs_need_no_edits() {
    let lm = mock::ngram(0).unwrap();
    let c = CnfConstraint::parse("(dog|dogs)&(ball)").unwrap();
    let ws = words("the dog chases the ball");
    let r = repair_lexical(&ws, &c, &lm, 10).unwrap();
    assert!(r.edits.is_empty());
    assert!(r.satisfied);
    assert_eq!(r.words, ws);
}

fn loglik_oracle(lm: &NgramLm, ws: &[String]) -> f64 {
    let Ok(ids) = lm.tokenize(&ws.join(" ")) else { return f64::NEG_INFINITY };
    let mut prefix = Vec::new();
    let mut total = 0.0;
    for &t in ids.iter().chain([lm.eos()].iter()) {
        total += lm.next_logprobs(&prefix).unwrap()[t as usize];
        prefix.push(t);
    }
    total
}

#[test]
fn insertion_is_the_exhaustive_best() {
    let lm = mock::ngram(0).unwrap();
    let lex = mock::lexicon();
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let mut checked = 0;
    for (case, row) in mock::dataset(60, 8).iter().enumerate() {
        let c = row.constraint(&lex).unwrap();
        let reference = words(&row.references[0]);
        // drop every form of the first clause so exactly that clause is unmet
        let forms: Vec<String> = c.clauses()[0].forms().map(String::from).collect();
        let mut ws: Vec<String> = reference.into_iter().filter(|w| !forms.contains(w)).collect();
        ws.truncate(rng.random_range(1..=ws.len().max(1)));
        let s = c.evaluate(&ws);
        let Some(&k) = s.unmet_positive().first() else { continue };
        let forms: Vec<String> = c.clauses()[k].forms().map(String::from).collect();

        let mut best: Option<(f64, usize, String)> = None;
        for pos in 0..=ws.len() {
            for f in &forms {
                let mut trial = ws.clone();
                trial.insert(pos, f.clone());
                let lp = loglik_oracle(&lm, &trial);
                if best.as_ref().is_none_or(|b| lp > b.0) {
                    best = Some((lp, pos, f.clone()));
                }
            }
        }
        let (_, pos, word) = best.unwrap();
        let r = repair_lexical(&ws, &c, &lm, 1).unwrap();
        assert_eq!(r.edits, vec![EditOp::Insert { pos, word }], "case {case}: {ws:?} under {c}");
        checked += 1;
    }
    assert!(checked >= 50, "{checked}");
}

#[test]
fn lone_forbidden_word_is_replaced() {
    let lm = mock::ngram(0).unwrap();
    let c = CnfConstraint::parse("!(dog)").unwrap();
    let r = repair_lexical(&["dog"], &c, &lm, 1).unwrap();
    assert!(matches!(r.edits[..], [EditOp::Replace { pos: 0, .. }]));
    assert!(r.satisfied);
}
