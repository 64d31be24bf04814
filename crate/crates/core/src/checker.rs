//! Posterior scoring of finished candidates and cheap compliance checks.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{words, Clause, CnfConstraint};
use crate::lm::{logsumexp, LmBackend, LmError, TokenId};
use crate::ontology::{detect_mentions, violation_probability, Axiom, Gazetteer, Ontology, OntologyError};
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckError {
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error("stats: {0}")]
    Stats(String),
}

/// Running statistics for one constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintStat {
    #[serde(skip)]
    pub id: String,
    pub importance: f64,
    pub violation_freq: f64,
    /// Mean word distance between mentions of the constraint's referents.
    pub mean_distance: f64,
    pub n_obs: u64,
    /// Observations that contributed a distance.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub n_dist: u64,
}

fn is_zero(n: &u64) -> bool {
    *n == 0
}

impl ConstraintStat {
    pub fn new(id: impl Into<String>, importance: f64) -> Self {
        ConstraintStat { id: id.into(), importance, violation_freq: 0.0, mean_distance: 0.0, n_obs: 0, n_dist: 0 }
    }

    pub fn observe(&mut self, violated: bool, distance: Option<f64>) {
        self.n_obs += 1;
        let x = if violated { 1.0 } else { 0.0 };
        self.violation_freq += (x - self.violation_freq) / self.n_obs as f64;
        if let Some(d) = distance {
            self.n_dist += 1;
            self.mean_distance += (d - self.mean_distance) / self.n_dist as f64;
        }
    }
}

pub fn stats_to_json(stats: &[ConstraintStat]) -> String {
    let map: BTreeMap<&str, &ConstraintStat> = stats.iter().map(|s| (s.id.as_str(), s)).collect();
    serde_json::to_string_pretty(&map).expect("stats serialize")
}

pub fn stats_from_json(json: &str) -> Result<Vec<ConstraintStat>, CheckError> {
    let map: BTreeMap<String, ConstraintStat> =
        serde_json::from_str(json).map_err(|e| CheckError::Stats(e.to_string()))?;
    let mut out = Vec::with_capacity(map.len());
    for (id, mut s) in map {
        if !(s.importance >= 0.0) || !(0.0..=1.0).contains(&s.violation_freq) {
            return Err(CheckError::Stats(format!("{id}: importance must be ≥ 0 and violation_freq in [0,1]")));
        }
        s.id = id;
        out.push(s);
    }
    Ok(out)
}

pub fn load_stats(path: impl AsRef<Path>) -> Result<Vec<ConstraintStat>, CheckError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CheckError::Stats(format!("{}: {e}", path.display())))?;
    stats_from_json(&text)
}

pub fn save_stats(path: impl AsRef<Path>, stats: &[ConstraintStat]) -> Result<(), CheckError> {
    let path = path.as_ref();
    std::fs::write(path, stats_to_json(stats)).map_err(|e| CheckError::Stats(format!("{}: {e}", path.display())))
}

/// Constraint ids in checking order: most often violated first, then most
/// important, then closest mentions, then id.
pub fn order_constraints(stats: &[ConstraintStat]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..stats.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (&stats[a], &stats[b]);
        y.violation_freq
            .total_cmp(&x.violation_freq)
            .then(y.importance.total_cmp(&x.importance))
            .then(x.mean_distance.total_cmp(&y.mean_distance))
            .then_with(|| x.id.cmp(&y.id))
    });
    idx
}

/// Smallest word distance between mentions of two different referents named
/// by `axiom`. `None` when fewer than two of them are mentioned.
pub fn mention_distance<S: AsRef<str>>(text_words: &[S], axiom: &Axiom, g: &Gazetteer) -> Option<f64> {
    let names = axiom.names();
    let mentions = detect_mentions(text_words, g);
    let mut hits: Vec<(usize, &str)> = Vec::new();
    for m in &mentions {
        for (r, _) in &m.candidates {
            if let Some(n) = names.iter().find(|n| **n == r.as_str()) {
                hits.push((m.start, n));
            }
        }
    }
    let mut best: Option<usize> = None;
    for (i, &(pa, ra)) in hits.iter().enumerate() {
        for &(pb, rb) in &hits[i + 1..] {
            if ra != rb {
                let d = pa.abs_diff(pb);
                best = Some(best.map_or(d, |b: usize| b.min(d)));
            }
        }
    }
    best.map(|d| d as f64)
}

/// A single compliance check over a word sequence.
pub trait WordCheck {
    fn id(&self) -> String;
    fn violated(&self, words: &[String]) -> bool;
}

impl WordCheck for Clause {
    fn id(&self) -> String {
        CnfConstraint::new(vec![self.clone()]).map(|c| c.to_string()).unwrap_or_default()
    }

    fn violated(&self, words: &[String]) -> bool {
        let present = self.forms().any(|f| words.iter().any(|w| w == f));
        if self.is_positive() {
            !present
        } else {
            present
        }
    }
}

/// Axiom check: violated when the text contradicts `axiom` with probability
/// at least `threshold`.
#[derive(Debug, Clone)]
pub struct AxiomCheck<'a> {
    pub axiom: Axiom,
    pub ontology: &'a Ontology,
    pub gazetteer: &'a Gazetteer,
    pub threshold: f64,
}

impl WordCheck for AxiomCheck<'_> {
    fn id(&self) -> String {
        self.axiom.to_string()
    }

    fn violated(&self, words: &[String]) -> bool {
        match violation_probability(words, self.ontology, self.gazetteer) {
            Ok(report) => {
                report.violations.iter().filter(|v| v.axiom == self.axiom).any(|v| v.probability >= self.threshold)
            }
            Err(_) => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckOutcome {
    /// Position in the checked list of the first violated constraint.
    pub violation: Option<usize>,
    pub checks: usize,
    /// Budget ran out before every constraint was checked.
    pub truncated: bool,
}

/// Runs checks in order until one is violated or `budget` checks are spent.
pub fn check_until_violation<C: WordCheck + ?Sized>(words: &[String], ordered: &[&C], budget: usize) -> CheckOutcome {
    let limit = budget.min(ordered.len());
    for (i, c) in ordered[..limit].iter().enumerate() {
        if c.violated(words) {
            return CheckOutcome { violation: Some(i), checks: i + 1, truncated: false };
        }
    }
    CheckOutcome { violation: None, checks: limit, truncated: limit < ordered.len() }
}

/// A finished sequence awaiting scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub ids: Vec<TokenId>,
    pub text: String,
    pub lm_logprob: f64,
}

impl Candidate {
    pub fn from_ids<L: LmBackend + ?Sized>(lm: &L, ids: Vec<TokenId>, lm_logprob: f64) -> Result<Self, LmError> {
        let text = lm.detokenize(&ids)?;
        Ok(Candidate { ids, text, lm_logprob })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredCandidate {
    pub ids: Vec<TokenId>,
    pub text: String,
    pub lm_logprob: f64,
    /// Unmet positive plus violated forbid clauses.
    pub lexical_degree: usize,
    /// Probability of a semantic violation; 0 without an ontology.
    pub semantic_degree: f64,
    pub violation_degree: f64,
    pub posterior_weight: f64,
}

/// Weights candidates by `exp(lm_logprob - lambda * d)`, normalized, and
/// sorts them by weight (then log-probability, then ids).
pub fn score_posterior(
    candidates: &[Candidate],
    c: &CnfConstraint,
    semantic: Option<(&Ontology, &Gazetteer)>,
    lambda: f64,
) -> Result<Vec<ScoredCandidate>, CheckError> {
    let scored = par::map(candidates, |cand| -> Result<ScoredCandidate, CheckError> {
        let ws = words(&cand.text);
        let state = c.evaluate(&ws);
        let lexical = state.unmet_positive().len() + state.violated_forbid().len();
        let semantic = match semantic {
            Some((o, g)) => violation_probability(&ws, o, g)?.probability,
            None => 0.0,
        };
        Ok(ScoredCandidate {
            ids: cand.ids.clone(),
            text: cand.text.clone(),
            lm_logprob: cand.lm_logprob,
            lexical_degree: lexical,
            semantic_degree: semantic,
            violation_degree: lexical as f64 + semantic,
            posterior_weight: 0.0,
        })
    });
    let mut scored = scored.into_iter().collect::<Result<Vec<_>, _>>()?;
    let logits: Vec<f64> = scored
        .iter()
        .map(|s| if lambda == 0.0 { s.lm_logprob } else { s.lm_logprob - lambda * s.violation_degree })
        .collect();
    let z = logsumexp(&logits);
    for (s, l) in scored.iter_mut().zip(&logits) {
        s.posterior_weight = if z == f64::NEG_INFINITY { 1.0 / logits.len() as f64 } else { (l - z).exp() };
    }
    scored.sort_by(|a, b| {
        b.posterior_weight
            .total_cmp(&a.posterior_weight)
            .then(b.lm_logprob.total_cmp(&a.lm_logprob))
            .then_with(|| a.ids.cmp(&b.ids))
    });
    Ok(scored)
}

/// Uniform sample of `k` candidates without replacement, in input order.
pub fn sample_candidates<T: Clone>(candidates: &[T], k: usize, seed: u64) -> Vec<T> {
    if k >= candidates.len() {
        return candidates.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, candidates.len(), k).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| candidates[i].clone()).collect()
}
