use std::cmp::Ordering;
use std::collections::HashMap;

use super::words::{TokenView, Tracker};
use super::{context, DecodeConfig, DecodeError, Hypothesis};
use crate::constraints::{ClauseStatus, CnfConstraint, SatisfactionState};
use crate::lm::{argmax, LmBackend, LmError, TokenId};
use crate::par;

/// Argmax decoding; stops at eos or after `max_new_tokens`.
pub fn greedy<L: LmBackend + ?Sized>(
    lm: &L,
    prompt: &[TokenId],
    cfg: &DecodeConfig,
) -> Result<Hypothesis, DecodeError> {
    cfg.validate()?;
    let (bos, eos) = (lm.bos(), lm.eos());
    let mut ids = Vec::new();
    let mut logprob = 0.0;
    let mut finished = false;
    for _ in 0..cfg.max_new_tokens {
        let mut row = lm.next_logprobs(&context(prompt, &ids))?;
        if let Some(x) = row.get_mut(bos as usize) {
            *x = f64::NEG_INFINITY;
        }
        let t = argmax(&row).ok_or(LmError::Config("empty logprob row".into()))? as TokenId;
        logprob += row[t as usize];
        ids.push(t);
        if t == eos {
            finished = true;
            break;
        }
    }
    Ok(Hypothesis { ids, logprob, state: None, finished, score: logprob })
}

#[derive(Debug, Clone)]
struct Node {
    ids: Vec<TokenId>,
    logprob: f64,
    score: f64,
    tracker: Option<Tracker>,
    finished: bool,
}

impl Node {
    fn into_hypothesis(self, c: Option<&CnfConstraint>) -> Hypothesis {
        let state = match (self.tracker, c) {
            (Some(t), Some(c)) => Some(t.finished(c)),
            _ => None,
        };
        Hypothesis { ids: self.ids, logprob: self.logprob, state, finished: self.finished, score: self.score }
    }
}

fn rank(a: &Node, b: &Node) -> Ordering {
    b.score.total_cmp(&a.score).then(b.logprob.total_cmp(&a.logprob)).then_with(|| a.ids.cmp(&b.ids))
}

struct Cand {
    parent: usize,
    token: TokenId,
    logprob: f64,
    score: f64,
    /// Child tracker when the token changed constraint state.
    tracker: Option<Tracker>,
    /// Provisional state used for pruning and grouping; `None` inherits the parent's.
    state: Option<SatisfactionState>,
}

/// How the candidates of one step are cut down to the beam.
#[derive(Clone, Copy)]
enum Mode {
    Plain,
    Steered { alpha: f64 },
}

struct Search<'a, L: LmBackend + ?Sized> {
    lm: &'a L,
    prompt: &'a [TokenId],
    constraint: Option<&'a CnfConstraint>,
    view: TokenView,
    mode: Mode,
    cfg: &'a DecodeConfig,
}

impl<L: LmBackend + ?Sized> Search<'_, L> {
    fn run(&self) -> Result<(Vec<Node>, Vec<Node>), DecodeError> {
        let root = Node {
            ids: Vec::new(),
            logprob: 0.0,
            score: self.score(0.0, self.constraint.map(|c| c.initial_state()).as_ref()),
            tracker: self.constraint.map(Tracker::new),
            finished: false,
        };
        let mut frontier = vec![root];
        let mut pool = Vec::new();
        for _ in 0..self.cfg.max_new_tokens {
            if frontier.is_empty() {
                break;
            }
            let rows: Vec<Result<Vec<f64>, LmError>> =
                par::map(&frontier, |n| self.lm.next_logprobs(&context(self.prompt, &n.ids)));
            let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
            let parent_states: Vec<Option<SatisfactionState>> = frontier
                .iter()
                .map(|n| n.tracker.as_ref().zip(self.constraint).map(|(t, c)| t.provisional(c)))
                .collect();

            let mut cands = Vec::new();
            for (pi, row) in rows.iter().enumerate() {
                for (t, &lp) in row.iter().enumerate() {
                    let token = t as TokenId;
                    if lp == f64::NEG_INFINITY || !self.view.emittable(token) {
                        continue;
                    }
                    cands.push(self.expand(&frontier[pi], parent_states[pi].as_ref(), pi, token, lp));
                }
            }
            let selected = self.select(&frontier, &parent_states, cands);
            let (done, open): (Vec<Node>, Vec<Node>) = selected.into_iter().partition(|n| n.finished);
            pool.extend(done);
            frontier = open;
        }
        Ok((pool, frontier))
    }

    fn score(&self, logprob: f64, state: Option<&SatisfactionState>) -> f64 {
        match (self.mode, state) {
            (Mode::Steered { alpha }, Some(s)) => logprob + alpha * s.coverage(),
            _ => logprob,
        }
    }

    fn expand(
        &self,
        parent: &Node,
        parent_state: Option<&SatisfactionState>,
        pi: usize,
        token: TokenId,
        lp: f64,
    ) -> Cand {
        let logprob = parent.logprob + lp;
        let (tracker, state) = match (&parent.tracker, self.constraint) {
            (Some(tr), Some(c)) => {
                let touches = self.view.subword
                    || token == self.view.eos
                    || !c.clauses_with_form(&self.view.text[token as usize]).is_empty();
                if touches {
                    let mut child = tr.clone();
                    child.push(&self.view, c, token);
                    let state = child.provisional(c);
                    (Some(child), Some(state))
                } else {
                    (None, None)
                }
            }
            _ => (None, None),
        };
        let score = self.score(logprob, state.as_ref().or(parent_state));
        Cand { parent: pi, token, logprob, score, tracker, state }
    }

    fn select(
        &self,
        frontier: &[Node],
        parent_states: &[Option<SatisfactionState>],
        mut cands: Vec<Cand>,
    ) -> Vec<Node> {
        let state_of =
            |c: &Cand| -> Option<SatisfactionState> { c.state.clone().or_else(|| parent_states[c.parent].clone()) };
        let cmp = |a: &Cand, b: &Cand| {
            b.score
                .total_cmp(&a.score)
                .then(b.logprob.total_cmp(&a.logprob))
                .then_with(|| frontier[a.parent].ids.cmp(&frontier[b.parent].ids))
                .then(a.token.cmp(&b.token))
        };
        let beam = self.cfg.beam_size;
        let chosen: Vec<usize> = match self.mode {
            Mode::Plain => {
                cands.sort_by(cmp);
                (0..beam.min(cands.len())).collect()
            }
            Mode::Steered { .. } => {
                cands.retain(|c| !state_of(c).is_some_and(|s| s.has_violation()));
                cands.sort_by(cmp);
                grouped_selection(&cands, beam, |c| state_of(c).map(|s| s.clause_status).unwrap_or_default())
            }
        };
        chosen
            .into_iter()
            .map(|i| {
                let c = &cands[i];
                let parent = &frontier[c.parent];
                let mut ids = parent.ids.clone();
                ids.push(c.token);
                let tracker = match (&c.tracker, &parent.tracker, self.constraint) {
                    (Some(t), _, _) => Some(t.clone()),
                    (None, Some(t), Some(con)) => {
                        let mut t = t.clone();
                        t.push(&self.view, con, c.token);
                        Some(t)
                    }
                    _ => None,
                };
                Node { ids, logprob: c.logprob, score: c.score, tracker, finished: c.token == self.view.eos }
            })
            .collect()
    }
}

/// Picks up to `beam` indices from candidates already sorted best-first:
/// the best `ceil(beam / G)` of each of the `G` signature groups (round
/// robin by rank, groups ordered by their best member), then the best of the
/// rest. Returns indices in rank order.
fn grouped_selection<T, F>(sorted: &[T], beam: usize, signature: F) -> Vec<usize>
where
    F: Fn(&T) -> Vec<ClauseStatus>,
{
    let mut group_of: HashMap<Vec<ClauseStatus>, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, c) in sorted.iter().enumerate() {
        let next = groups.len();
        let g = *group_of.entry(signature(c)).or_insert(next);
        if g == groups.len() {
            groups.push(Vec::new());
        }
        groups[g].push(i);
    }
    if groups.is_empty() {
        return Vec::new();
    }
    let quota = beam.div_ceil(groups.len());
    let mut taken = vec![false; sorted.len()];
    let mut count = 0;
    'quota: for r in 0..quota {
        for g in &groups {
            if count == beam {
                break 'quota;
            }
            if let Some(&i) = g.get(r) {
                taken[i] = true;
                count += 1;
            }
        }
    }
    for flag in taken.iter_mut() {
        if count == beam {
            break;
        }
        if !*flag {
            *flag = true;
            count += 1;
        }
    }
    (0..sorted.len()).filter(|&i| taken[i]).collect()
}

fn run<L: LmBackend + ?Sized>(
    lm: &L,
    prompt: &[TokenId],
    constraint: Option<&CnfConstraint>,
    mode: Mode,
    cfg: &DecodeConfig,
) -> Result<(Vec<Node>, Vec<Node>), DecodeError> {
    cfg.validate()?;
    let search = Search { lm, prompt, constraint, view: TokenView::new(lm), mode, cfg };
    search.run()
}

/// Beam search over cumulative log-probability. Returns finished and
/// unfinished hypotheses together, best first.
pub fn beam<L: LmBackend + ?Sized>(
    lm: &L,
    prompt: &[TokenId],
    cfg: &DecodeConfig,
) -> Result<Vec<Hypothesis>, DecodeError> {
    beam_inner(lm, prompt, None, cfg)
}

/// [`beam`] that also reports each hypothesis' state under `c` without
/// letting the constraint influence the search.
pub fn beam_tracked<L: LmBackend + ?Sized>(
    lm: &L,
    prompt: &[TokenId],
    c: &CnfConstraint,
    cfg: &DecodeConfig,
) -> Result<Vec<Hypothesis>, DecodeError> {
    beam_inner(lm, prompt, Some(c), cfg)
}

fn beam_inner<L: LmBackend + ?Sized>(
    lm: &L,
    prompt: &[TokenId],
    c: Option<&CnfConstraint>,
    cfg: &DecodeConfig,
) -> Result<Vec<Hypothesis>, DecodeError> {
    let (pool, frontier) = run(lm, prompt, c, Mode::Plain, cfg)?;
    let mut all: Vec<Node> = pool.into_iter().chain(frontier).collect();
    all.sort_by(rank);
    Ok(all.into_iter().map(|n| n.into_hypothesis(c)).collect())
}

/// Penalty-steered beam search.
///
/// Each step scores candidates by `logprob + alpha * coverage`, drops those
/// violating a forbid clause, keeps the best `ceil(beam / G)` of each
/// clause-status group and fills the remaining slots by score. The answer is
/// the finished hypothesis that satisfies the constraint with the best score,
/// falling back to unsatisfied ones, then to the best unfinished hypothesis
/// (`finished == false`).
///
/// With `alpha == 0` the constraint has no say at all and the result is the
/// top hypothesis of [`beam`].
pub fn constrained_beam<L: LmBackend + ?Sized>(
    lm: &L,
    prompt: &[TokenId],
    c: &CnfConstraint,
    cfg: &DecodeConfig,
) -> Result<Hypothesis, DecodeError> {
    cfg.validate()?;
    if cfg.alpha == 0.0 {
        let ranked = beam_tracked(lm, prompt, c, cfg)?;
        return ranked.into_iter().next().ok_or_else(|| DecodeError::Infeasible("beam produced no hypothesis".into()));
    }
    let (pool, frontier) = run(lm, prompt, Some(c), Mode::Steered { alpha: cfg.alpha }, cfg)?;
    let pick = |nodes: Vec<Node>| -> Option<Hypothesis> {
        let mut hyps: Vec<Hypothesis> = nodes.into_iter().map(|n| n.into_hypothesis(Some(c))).collect();
        hyps.sort_by(|a, b| {
            let sat = |h: &Hypothesis| h.is_satisfied().unwrap_or(false);
            sat(b)
                .cmp(&sat(a))
                .then(b.score.total_cmp(&a.score))
                .then(b.logprob.total_cmp(&a.logprob))
                .then_with(|| a.ids.cmp(&b.ids))
        });
        hyps.into_iter().next()
    };
    if let Some(h) = pick(pool) {
        return Ok(h);
    }
    pick(frontier).ok_or_else(|| DecodeError::Infeasible("every hypothesis was pruned by a forbid clause".into()))
}
