use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::words::{TokenView, Tracker};
use super::{context, DecodeConfig, DecodeError, Hypothesis};
use crate::constraints::{CnfConstraint, SatisfactionState};
use crate::lm::{logsumexp, LmBackend, LmError, TokenId};
use crate::par;

const INF: usize = usize::MAX / 4;

/// One weighted sample of the continuation posterior.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Particle {
    pub ids: Vec<TokenId>,
    /// Unnormalized log importance weight; `-inf` once dead.
    pub log_weight: f64,
    /// Log-probability of `ids` under the untempered backend.
    pub logprob: f64,
    pub state: SatisfactionState,
    pub alive: bool,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmcOutput {
    pub best: Hypothesis,
    pub particles: Vec<Particle>,
    /// Number of resampling events.
    pub resamples: usize,
}

impl SmcOutput {
    /// Normalized weights of all particles (dead ones get 0).
    pub fn normalized_weights(&self) -> Vec<f64> {
        normalized(&self.particles.iter().map(|p| p.log_weight).collect::<Vec<_>>())
    }
}

fn normalized(log_weights: &[f64]) -> Vec<f64> {
    let z = logsumexp(log_weights);
    if z == f64::NEG_INFINITY {
        return vec![0.0; log_weights.len()];
    }
    log_weights.iter().map(|w| (w - z).exp()).collect()
}

/// Minimum number of tokens needed to spell each required form.
struct Spelling {
    /// Per clause: `(form, cont)` where `cont[i]` is the fewest continuation
    /// tokens spelling `form[i..]`.
    forms: Vec<Vec<(String, Vec<usize>)>>,
    clause_cost: Vec<usize>,
}

impl Spelling {
    fn new(view: &TokenView, c: &CnfConstraint) -> Self {
        let usable = |id: usize| {
            let id = id as TokenId;
            id != view.eos && id != view.bos && !view.text[id as usize].is_empty()
        };
        let starters: Vec<&str> =
            (0..view.len()).filter(|&i| usable(i) && view.starts_word[i]).map(|i| view.text[i].as_str()).collect();
        let continuations: Vec<&str> =
            (0..view.len()).filter(|&i| usable(i) && !view.starts_word[i]).map(|i| view.text[i].as_str()).collect();
        let mut forms = Vec::new();
        let mut clause_cost = Vec::new();
        for clause in c.clauses() {
            let mut entries = Vec::new();
            let mut best = INF;
            if clause.is_positive() {
                for form in clause.forms() {
                    let n = form.len();
                    let mut cont = vec![INF; n + 1];
                    cont[n] = 0;
                    for i in (0..n).rev() {
                        if !form.is_char_boundary(i) {
                            continue;
                        }
                        for w in &continuations {
                            if form[i..].starts_with(w) && cont[i + w.len()] < INF {
                                cont[i] = cont[i].min(1 + cont[i + w.len()]);
                            }
                        }
                    }
                    let cost = starters
                        .iter()
                        .filter(|w| form.starts_with(**w) && cont[w.len()] < INF)
                        .map(|w| 1 + cont[w.len()])
                        .min()
                        .unwrap_or(INF);
                    best = best.min(cost);
                    entries.push((form.to_owned(), cont));
                }
            } else {
                best = 0;
            }
            forms.push(entries);
            clause_cost.push(best);
        }
        Spelling { forms, clause_cost }
    }

    /// Fewest further tokens that can bring every required clause to met.
    fn need(&self, tracker: &Tracker, provisional: &SatisfactionState) -> usize {
        let unmet = provisional.unmet_positive();
        let base = unmet.iter().fold(0usize, |acc, &k| (acc + self.clause_cost[k]).min(INF));
        if tracker.pending.is_empty() {
            return base;
        }
        let p = &tracker.pending;
        let mut best = base;
        for &k in &unmet {
            for (form, cont) in &self.forms[k] {
                if form.len() > p.len() && form.starts_with(p.as_str()) && cont[p.len()] < INF {
                    let alt = base.saturating_sub(self.clause_cost[k]).saturating_add(cont[p.len()]);
                    best = best.min(alt);
                }
            }
        }
        best
    }
}

struct Walker {
    ids: Vec<TokenId>,
    log_weight: f64,
    logprob: f64,
    tracker: Tracker,
    alive: bool,
    finished: bool,
}

/// Proposal for one particle step: `(token, log p, log q)` for every allowed
/// token with non-zero probability.
type Proposal = Vec<(TokenId, f64, f64)>;

struct Sampler<'a, L: LmBackend + ?Sized> {
    lm: &'a L,
    prompt: &'a [TokenId],
    c: &'a CnfConstraint,
    view: TokenView,
    spelling: Spelling,
    cfg: &'a DecodeConfig,
}

impl<L: LmBackend + ?Sized> Sampler<'_, L> {
    fn allowed(&self, w: &Walker, remaining: usize, row: &[f64]) -> Vec<bool> {
        let parent_state = w.tracker.provisional(self.c);
        let parent_need = self.spelling.need(&w.tracker, &parent_state);
        let budget = remaining - 1;
        let mut mask = vec![false; row.len()];
        for (t, ok) in mask.iter_mut().enumerate() {
            let id = t as TokenId;
            if id == self.view.bos {
                continue;
            }
            if id == self.view.eos {
                *ok = parent_state.is_satisfied();
                continue;
            }
            let text = &self.view.text[t];
            if !self.view.subword && self.c.clauses_with_form(text).is_empty() && !text.contains(' ') {
                *ok = parent_need <= budget;
                continue;
            }
            let mut child = w.tracker.clone();
            child.push(&self.view, self.c, id);
            let state = child.provisional(self.c);
            *ok = !state.has_violation() && self.spelling.need(&child, &state) <= budget;
        }
        mask
    }

    fn proposal(&self, w: &Walker, remaining: usize) -> Result<Proposal, LmError> {
        let row = self.lm.next_logprobs(&context(self.prompt, &w.ids))?;
        let mask = self.allowed(w, remaining, &row);
        let inv_t = 1.0 / self.cfg.temperature;
        let mut picks: Vec<(TokenId, f64, f64)> = row
            .iter()
            .enumerate()
            .filter(|(t, lp)| mask[*t] && **lp > f64::NEG_INFINITY)
            .map(|(t, &lp)| (t as TokenId, lp, lp * inv_t))
            .collect();
        let unmasked =
            row.iter().enumerate().all(|(t, lp)| mask[t] || t as TokenId == self.view.bos || *lp == f64::NEG_INFINITY);
        if unmasked && inv_t == 1.0 {
            return Ok(picks);
        }
        let z = logsumexp(&picks.iter().map(|p| p.2).collect::<Vec<_>>());
        for p in &mut picks {
            p.2 -= z;
        }
        Ok(picks)
    }

    fn run(&self) -> Result<SmcOutput, DecodeError> {
        let c = self.c;
        let start = Tracker::new(c);
        let start_state = start.provisional(c);
        let need = self.spelling.need(&start, &start_state);
        if need > self.cfg.max_new_tokens {
            return Err(DecodeError::Infeasible(format!(
                "{} tokens needed, {} available",
                if need >= INF { "unbounded".to_owned() } else { need.to_string() },
                self.cfg.max_new_tokens
            )));
        }
        let n = self.cfg.n_particles;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let mut walkers: Vec<Walker> = (0..n)
            .map(|_| Walker {
                ids: Vec::new(),
                log_weight: 0.0,
                logprob: 0.0,
                tracker: start.clone(),
                alive: true,
                finished: false,
            })
            .collect();
        let mut resamples = 0;

        for step in 0..self.cfg.max_new_tokens {
            let active: Vec<usize> = (0..n).filter(|&i| walkers[i].alive && !walkers[i].finished).collect();
            if active.is_empty() {
                break;
            }
            let remaining = self.cfg.max_new_tokens - step;
            let proposals = par::map(&active, |&i| self.proposal(&walkers[i], remaining));
            for (&i, proposal) in active.iter().zip(proposals) {
                let proposal = proposal?;
                let u: f64 = rng.random();
                let w = &mut walkers[i];
                let Some(&(token, lp, lq)) = pick(&proposal, u) else {
                    w.alive = false;
                    w.log_weight = f64::NEG_INFINITY;
                    continue;
                };
                w.ids.push(token);
                w.logprob += lp;
                w.log_weight += lp - lq;
                w.tracker.push(&self.view, c, token);
                if token == self.view.eos {
                    w.finished = true;
                }
            }
            if self.maybe_resample(&mut walkers, &mut rng) {
                resamples += 1;
            }
        }

        let particles: Vec<Particle> = walkers
            .into_iter()
            .map(|w| {
                let state = w.tracker.finished(c);
                let alive = w.alive && state.is_satisfied();
                Particle {
                    ids: w.ids,
                    log_weight: if alive { w.log_weight } else { f64::NEG_INFINITY },
                    logprob: w.logprob,
                    state,
                    alive,
                    finished: w.finished,
                }
            })
            .collect();
        let best = particles
            .iter()
            .filter(|p| p.alive)
            .min_by(|a, b| {
                b.log_weight
                    .total_cmp(&a.log_weight)
                    .then(b.logprob.total_cmp(&a.logprob))
                    .then_with(|| a.ids.cmp(&b.ids))
            })
            .ok_or_else(|| DecodeError::Infeasible("every particle died".into()))?;
        let weights = normalized(&particles.iter().map(|p| p.log_weight).collect::<Vec<_>>());
        let best_weight =
            particles.iter().zip(&weights).find(|(p, _)| std::ptr::eq(*p, best)).map(|(_, w)| *w).unwrap_or(0.0);
        let best = Hypothesis {
            ids: best.ids.clone(),
            logprob: best.logprob,
            state: Some(best.state.clone()),
            finished: best.finished,
            score: best_weight,
        };
        Ok(SmcOutput { best, particles, resamples })
    }

    /// Systematic resampling when the effective sample size drops below
    /// `ess_threshold * N`. Offspring inherit the mean weight.
    fn maybe_resample(&self, walkers: &mut Vec<Walker>, rng: &mut ChaCha8Rng) -> bool {
        let n = walkers.len();
        let lw: Vec<f64> = walkers.iter().map(|w| if w.alive { w.log_weight } else { f64::NEG_INFINITY }).collect();
        let weights = normalized(&lw);
        let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
        if sum_sq == 0.0 {
            return false;
        }
        let ess = 1.0 / sum_sq;
        if ess >= self.cfg.ess_threshold * n as f64 {
            return false;
        }
        let mean = logsumexp(&lw) - (n as f64).ln();
        let u0: f64 = rng.random::<f64>() / n as f64;
        let mut ancestors = Vec::with_capacity(n);
        let mut cum = 0.0;
        let mut j = 0;
        for i in 0..n {
            let u = u0 + i as f64 / n as f64;
            while j < n - 1 && cum + weights[j] <= u {
                cum += weights[j];
                j += 1;
            }
            while weights[j] == 0.0 && j > 0 {
                j -= 1;
            }
            ancestors.push(j);
        }
        let next: Vec<Walker> = ancestors
            .into_iter()
            .map(|a| {
                let w = &walkers[a];
                Walker {
                    ids: w.ids.clone(),
                    log_weight: mean,
                    logprob: w.logprob,
                    tracker: w.tracker.clone(),
                    alive: true,
                    finished: w.finished,
                }
            })
            .collect();
        *walkers = next;
        true
    }
}

/// Inverse-CDF draw from a normalized log-proposal.
fn pick(proposal: &Proposal, u: f64) -> Option<&(TokenId, f64, f64)> {
    let mut cum = 0.0;
    for p in proposal {
        cum += p.2.exp();
        if u < cum {
            return Some(p);
        }
    }
    proposal.last()
}

/// Sequential Monte Carlo decoding with a hard mask schedule.
///
/// Every particle samples from the backend distribution (tempered by
/// `cfg.temperature`) restricted to tokens that keep the constraint
/// reachable: forbid-completing tokens are masked, eos is masked until all
/// required clauses are met, and once the remaining budget equals the
/// tokens still needed only tokens that make progress on an unmet clause
/// survive. Importance weights correct back to the untempered, unmasked
/// model. Backend rows are computed concurrently; sampling and resampling
/// consume one seeded stream in particle order.
pub fn smc<L: LmBackend + ?Sized>(
    lm: &L,
    prompt: &[TokenId],
    c: &CnfConstraint,
    cfg: &DecodeConfig,
) -> Result<SmcOutput, DecodeError> {
    cfg.validate()?;
    let view = TokenView::new(lm);
    let spelling = Spelling::new(&view, c);
    Sampler { lm, prompt, c, view, spelling, cfg }.run()
}
