//! Greedy edit-based repair of generated word sequences.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::ScoredCandidate;
use crate::constraints::{words as normalize, CnfConstraint};
use crate::lm::{argmax, sequence_logprob, LmBackend, LmError};
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RepairError {
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error("edit {index} ({op}) is out of bounds for {len} words")]
    OutOfBounds { index: usize, op: String, len: usize },
}

/// A word-level edit. Positions index the sequence the edit applies to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum EditOp {
    Insert { pos: usize, word: String },
    Delete { pos: usize },
    Replace { pos: usize, word: String },
}

impl std::fmt::Display for EditOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EditOp::Insert { pos, word } => write!(f, "insert {word:?} at {pos}"),
            EditOp::Delete { pos } => write!(f, "delete at {pos}"),
            EditOp::Replace { pos, word } => write!(f, "replace at {pos} with {word:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepairResult {
    pub words: Vec<String>,
    pub edits: Vec<EditOp>,
    pub satisfied: bool,
    /// Backend log-likelihood of the repaired sentence including eos;
    /// `-inf` when it cannot be tokenized.
    pub lm_logprob: f64,
}

fn apply(words: &mut Vec<String>, edit: &EditOp) -> bool {
    match edit {
        EditOp::Insert { pos, word } if *pos <= words.len() => words.insert(*pos, word.clone()),
        EditOp::Delete { pos } if *pos < words.len() => {
            words.remove(*pos);
        }
        EditOp::Replace { pos, word } if *pos < words.len() => words[*pos] = word.clone(),
        _ => return false,
    }
    true
}

/// Replays `edits` in order.
pub fn apply_edits<S: AsRef<str>>(words: &[S], edits: &[EditOp]) -> Result<Vec<String>, RepairError> {
    let mut out: Vec<String> = words.iter().map(|w| w.as_ref().to_owned()).collect();
    for (index, e) in edits.iter().enumerate() {
        if !apply(&mut out, e) {
            return Err(RepairError::OutOfBounds { index, op: e.to_string(), len: out.len() });
        }
    }
    Ok(out)
}

/// Log-likelihood of `words` as a complete sentence.
fn loglik<L: LmBackend + ?Sized>(lm: &L, words: &[String]) -> f64 {
    match lm.tokenize(&words.join(" ")) {
        Ok(ids) => sequence_logprob(lm, &[], &ids, true).unwrap_or(f64::NEG_INFINITY),
        Err(_) => f64::NEG_INFINITY,
    }
}

fn word_matches(word: &str, forms: &[&str]) -> bool {
    normalize(word).iter().any(|w| forms.contains(&w.as_str()))
}

/// Most likely single-word replacement for position `pos` that is not
/// forbidden by `c`.
fn best_replacement<L: LmBackend + ?Sized>(
    lm: &L,
    words: &[String],
    pos: usize,
    c: &CnfConstraint,
) -> Result<String, RepairError> {
    let prefix = lm.tokenize(&words[..pos].join(" "))?;
    let mut row = lm.next_logprobs(&prefix)?;
    for (t, lp) in row.iter_mut().enumerate() {
        let text = lm.token_text(t as u32).unwrap_or("");
        let bad = t as u32 == lm.eos()
            || t as u32 == lm.bos()
            || normalize(text).is_empty()
            || normalize(text).iter().any(|w| c.is_forbidden(w));
        if bad {
            *lp = f64::NEG_INFINITY;
        }
    }
    let t = argmax(&row)
        .filter(|&t| row[t] > f64::NEG_INFINITY)
        .ok_or(LmError::Config("no replacement token outside the forbidden forms".into()))?;
    let text = lm.detokenize(&[t as u32])?;
    Ok(text.trim().to_owned())
}

/// Greedy repair: delete words that violate forbid clauses, then insert one
/// form for each unmet positive clause at the (form, position) that
/// maximizes the sentence likelihood. Ties go to the lowest position, then
/// the earliest form. Stops when satisfied or after `budget` edits.
pub fn repair_lexical<L: LmBackend + ?Sized, S: AsRef<str>>(
    words: &[S],
    c: &CnfConstraint,
    lm: &L,
    budget: usize,
) -> Result<RepairResult, RepairError> {
    let mut cur: Vec<String> = words.iter().map(|w| w.as_ref().to_owned()).collect();
    let mut edits = Vec::new();
    let mut state = c.evaluate(&cur);
    while edits.len() < budget && !state.is_satisfied() {
        let edit = if let Some(&k) = state.violated_forbid().first() {
            let forms: Vec<&str> = c.clauses()[k].forms().collect();
            let pos = cur.iter().position(|w| word_matches(w, &forms)).expect("violated clause has a witness");
            if cur.len() > 1 {
                EditOp::Delete { pos }
            } else {
                EditOp::Replace { pos, word: best_replacement(lm, &cur, pos, c)? }
            }
        } else {
            let k = state.unmet_positive()[0];
            let forms: Vec<&str> = c.clauses()[k].forms().collect();
            let slots: Vec<(usize, usize)> =
                (0..=cur.len()).flat_map(|p| (0..forms.len()).map(move |f| (p, f))).collect();
            let scores = par::map(&slots, |&(p, f)| {
                let mut trial = cur.clone();
                trial.insert(p, forms[f].to_owned());
                loglik(lm, &trial)
            });
            let mut best = 0;
            for (i, s) in scores.iter().enumerate() {
                if *s > scores[best] {
                    best = i;
                }
            }
            let (pos, f) = slots[best];
            EditOp::Insert { pos, word: forms[f].to_owned() }
        };
        apply(&mut cur, &edit);
        edits.push(edit);
        state = c.evaluate(&cur);
    }
    let lm_logprob = loglik(lm, &cur);
    Ok(RepairResult { satisfied: state.is_satisfied(), words: cur, edits, lm_logprob })
}

/// Edits that always suffice for a feasible constraint: one per clause plus
/// one per word that uses a forbidden form.
pub fn default_budget<S: AsRef<str>>(words: &[S], c: &CnfConstraint) -> usize {
    let offending = words.iter().filter(|w| normalize(w.as_ref()).iter().any(|x| c.is_forbidden(x))).count();
    c.clauses().len() + offending
}

/// Second-pass prompt asking the model to smooth a repaired draft.
pub fn reprompt_payload(question: &str, repaired: &str, original: &str) -> String {
    let mut out = String::new();
    out.push_str("Question: ");
    out.push_str(question);
    out.push_str("\nDraft answer: ");
    out.push_str(repaired);
    out.push_str("\nRewrite the draft answer as one fluent sentence that answers the question and keeps every fact in the draft.\n");
    if !original.is_empty() {
        out.push_str("Do not repeat the original answer, which was inconsistent: ");
        out.push_str(original);
        out.push('\n');
    }
    out.push_str("Answer:");
    out
}

/// The `m` candidates with the highest posterior weight.
pub fn select_repair_candidates(scored: &[ScoredCandidate], m: usize) -> Vec<ScoredCandidate> {
    let mut out = scored.to_vec();
    out.sort_by(|a, b| {
        b.posterior_weight
            .total_cmp(&a.posterior_weight)
            .then(b.lm_logprob.total_cmp(&a.lm_logprob))
            .then_with(|| a.ids.cmp(&b.ids))
    });
    out.truncate(m);
    out
}
