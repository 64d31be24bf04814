//! Brute-force reference implementations shared by the integration tests.
//! None of these reuse library code paths beyond plain data types.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use congen::constraints::{words, CnfConstraint};
use congen::decode::{beam, DecodeConfig};
use congen::lm::{LmBackend, NgramLm, TokenId};
use congen::mock;
use congen::ontology::{Axiom, Gazetteer, Ontology};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const PUNCT: &str = ".,!?;:\"()'";

// ---------------------------------------------------------------- lexical

/// `(positive, hit)` per clause, where `hit` says some form occurs as a
/// whole word. Decided by substring search on the space-padded,
/// punctuation-free text.
pub fn pattern_status(clauses: &[(bool, Vec<String>)], text: &str) -> Vec<(bool, bool)> {
    let cleaned: String = text.to_lowercase().chars().filter(|ch| !PUNCT.contains(*ch)).collect();
    let padded = format!(" {} ", cleaned.split_whitespace().collect::<Vec<_>>().join(" "));
    clauses
        .iter()
        .map(|(positive, forms)| {
            let hit = forms.iter().any(|f| padded.contains(&format!(" {f} ")));
            (*positive, hit)
        })
        .collect()
}

/// Random lowercase word over a tiny alphabet so collisions are common.
pub fn small_word(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(1..=3);
    (0..len).map(|_| *b"abc".choose(rng).unwrap() as char).collect()
}

/// Clause list with disjoint forms, rendered in the constraint syntax.
pub fn random_clauses(rng: &mut ChaCha8Rng, pool: &[String]) -> (Vec<(bool, Vec<String>)>, String) {
    let mut free: Vec<String> = pool.to_vec();
    let n = rng.random_range(1..=4).min(free.len());
    let mut clauses = Vec::new();
    for _ in 0..n {
        if free.is_empty() {
            break;
        }
        let k = rng.random_range(1..=3).min(free.len());
        let mut forms = Vec::new();
        for _ in 0..k {
            let i = rng.random_range(0..free.len());
            forms.push(free.swap_remove(i));
        }
        clauses.push((rng.random_bool(0.7), forms));
    }
    let spec = clauses
        .iter()
        .map(|(pos, forms)| format!("{}({})", if *pos { "" } else { "!" }, forms.join("|")))
        .collect::<Vec<_>>()
        .join("&");
    (clauses, spec)
}

/// Sentence of pool words with random case and punctuation glued on.
pub fn random_sentence(rng: &mut ChaCha8Rng, pool: &[String]) -> String {
    let n = rng.random_range(0..8);
    let mut parts = Vec::new();
    for _ in 0..n {
        let mut w = pool.choose(rng).unwrap().clone();
        if rng.random_bool(0.2) {
            w = w.to_uppercase();
        }
        if rng.random_bool(0.2) {
            let p = PUNCT.chars().nth(rng.random_range(0..PUNCT.len())).unwrap();
            if rng.random_bool(0.5) {
                w.push(p);
            } else {
                w.insert(0, p);
            }
        }
        parts.push(w);
    }
    parts.join(if rng.random_bool(0.5) { " " } else { "  " })
}

// ---------------------------------------------------------------- ontology

pub type Fact = (u8, Vec<String>);

fn fact(a: &Axiom) -> Fact {
    match a {
        Axiom::Sub { sub, sup } => (0, vec![sub.clone(), sup.clone()]),
        Axiom::Disjoint { left, right } => (1, vec![left.clone(), right.clone()]),
        Axiom::Member { ind, concept } => (2, vec![ind.clone(), concept.clone()]),
        Axiom::Rel { pred, subj, obj } => (3, vec![pred.clone(), subj.clone(), obj.clone()]),
        Axiom::Domain { pred, concept } => (4, vec![pred.clone(), concept.clone()]),
        Axiom::Range { pred, concept } => (5, vec![pred.clone(), concept.clone()]),
    }
}

pub fn facts(o: &Ontology) -> BTreeSet<Fact> {
    o.axioms().iter().map(fact).collect()
}

/// Naive fixpoint: apply every rule to every pair of facts until nothing
/// new appears.
pub fn fixpoint(axioms: &BTreeSet<Fact>) -> BTreeSet<Fact> {
    let mut set = axioms.clone();
    for (k, a) in axioms {
        if *k == 1 {
            set.insert((1, vec![a[1].clone(), a[0].clone()]));
        }
    }
    loop {
        let snapshot: Vec<Fact> = set.iter().cloned().collect();
        let mut added = Vec::new();
        for (k1, x) in &snapshot {
            for (k2, y) in &snapshot {
                match (k1, k2) {
                    (0, 0) if x[1] == y[0] && x[0] != y[1] => added.push((0, vec![x[0].clone(), y[1].clone()])),
                    (2, 0) if x[1] == y[0] => added.push((2, vec![x[0].clone(), y[1].clone()])),
                    (0, 1) if x[1] == y[0] => {
                        added.push((1, vec![x[0].clone(), y[1].clone()]));
                        added.push((1, vec![y[1].clone(), x[0].clone()]));
                    }
                    (3, 4) if x[0] == y[0] => added.push((2, vec![x[1].clone(), y[1].clone()])),
                    (3, 5) if x[0] == y[0] => added.push((2, vec![x[2].clone(), y[1].clone()])),
                    _ => {}
                }
            }
        }
        let before = set.len();
        set.extend(added);
        if set.len() == before {
            return set;
        }
    }
}

/// Random acyclic ontology: at most 8 concepts and 12 axioms. Sub edges
/// only go from higher to lower concept index.
pub fn random_ontology(rng: &mut ChaCha8Rng) -> Ontology {
    let nc = rng.random_range(1..=8);
    let concepts: Vec<String> = (0..nc).map(|i| format!("C{i}")).collect();
    let inds: Vec<String> = (0..rng.random_range(0..=3)).map(|i| format!("i{i}")).collect();
    let preds: Vec<String> = (0..rng.random_range(0..=2)).map(|i| format!("p{i}")).collect();
    let mut axioms = Vec::new();
    for _ in 0..rng.random_range(0..=12) {
        let roll = rng.random_range(0..100);
        let c = |rng: &mut ChaCha8Rng| concepts.choose(rng).unwrap().clone();
        let ax = if roll < 45 && nc >= 2 {
            let a = rng.random_range(1..nc);
            let b = rng.random_range(0..a);
            Axiom::sub(&concepts[a], &concepts[b])
        } else if roll < 60 && nc >= 2 {
            let a = c(rng);
            let b = c(rng);
            if a == b {
                continue;
            }
            Axiom::disjoint(&a, &b)
        } else if roll < 80 && !inds.is_empty() {
            Axiom::member(inds.choose(rng).unwrap(), &c(rng))
        } else if !preds.is_empty() && !inds.is_empty() {
            let p = preds.choose(rng).unwrap();
            match rng.random_range(0..3) {
                0 => Axiom::rel(p, inds.choose(rng).unwrap(), inds.choose(rng).unwrap()),
                1 => Axiom::domain(p, &c(rng)),
                _ => Axiom::range(p, &c(rng)),
            }
        } else {
            continue;
        };
        axioms.push(ax);
    }
    Ontology::new(concepts, inds, preds, axioms).expect("generated ontology is well formed")
}

/// One referent slot: candidates with probabilities; the rest is "none".
#[derive(Debug, Clone)]
pub struct Slot {
    pub candidates: Vec<(String, f64)>,
}

/// Probability that some `(subject slot, object slot)` assertion contradicts
/// the closure, by enumerating every joint referent assignment. An
/// assertion contradicts when the subject is an individual, the object a
/// concept, and the object is disjoint from itself or from a concept the
/// individual belongs to.
pub fn enumerate_violation(
    closure: &BTreeSet<Fact>,
    individuals: &BTreeSet<String>,
    concepts: &BTreeSet<String>,
    slots: &[Slot],
    assertions: &[(usize, usize)],
) -> f64 {
    let mut members: HashMap<&str, BTreeSet<&str>> = HashMap::new();
    let mut disjoint: BTreeSet<(&str, &str)> = BTreeSet::new();
    for (k, a) in closure {
        match k {
            2 => {
                members.entry(a[0].as_str()).or_default().insert(a[1].as_str());
            }
            1 => {
                disjoint.insert((a[0].as_str(), a[1].as_str()));
            }
            _ => {}
        }
    }
    let contradicts = |ind: &str, concept: &str| {
        disjoint.contains(&(concept, concept))
            || members.get(ind).is_some_and(|held| held.iter().any(|d| disjoint.contains(&(concept, *d))))
    };
    let options: Vec<Vec<(Option<&str>, f64)>> = slots
        .iter()
        .map(|s| {
            let mut v: Vec<(Option<&str>, f64)> = s.candidates.iter().map(|(r, p)| (Some(r.as_str()), *p)).collect();
            let rest = 1.0 - s.candidates.iter().map(|(_, p)| p).sum::<f64>();
            if rest > 0.0 {
                v.push((None, rest));
            }
            v
        })
        .collect();
    let mut total = 0.0;
    let mut pick = vec![0usize; slots.len()];
    loop {
        let mut p = 1.0;
        for (s, &i) in pick.iter().enumerate() {
            p *= options[s][i].1;
        }
        let bad = assertions.iter().any(|&(a, b)| match (options[a][pick[a]].0, options[b][pick[b]].0) {
            (Some(x), Some(y)) => individuals.contains(x) && concepts.contains(y) && contradicts(x, y),
            _ => false,
        });
        if bad {
            total += p;
        }
        let mut s = 0;
        loop {
            if s == pick.len() {
                return total;
            }
            pick[s] += 1;
            if pick[s] < options[s].len() {
                break;
            }
            pick[s] = 0;
            s += 1;
        }
    }
}

pub fn consistent_ontology(rng: &mut ChaCha8Rng) -> Ontology {
    loop {
        let o = random_ontology(rng);
        let has_disjoint = o.axioms().iter().any(|a| matches!(a, Axiom::Disjoint { .. }));
        if o.is_consistent().0 && has_disjoint && !o.individuals().is_empty() {
            return o;
        }
    }
}

fn distribution(rng: &mut ChaCha8Rng, referents: &[String]) -> Vec<(String, f64)> {
    let k = rng.random_range(1..=referents.len().min(3));
    let picked: Vec<&String> = referents.choose_multiple(rng, k).collect();
    let weights: Vec<f64> = picked.iter().map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mass = if rng.random_bool(0.3) { 1.0 } else { rng.random_range(0.3..0.95) };
    picked.into_iter().zip(weights).map(|(r, w)| (r.clone(), mass * w / total)).collect()
}

/// A consistent random ontology, a gazetteer of up to three mention forms,
/// and a chain sentence of mentions and concept words joined by copulas or
/// "and". Each mention form is used once so every mention is its own slot.
pub struct ViolationCase {
    pub ontology: Ontology,
    pub gazetteer: Gazetteer,
    pub sentence: String,
    pub slots: Vec<Slot>,
    pub assertions: Vec<(usize, usize)>,
}

pub fn violation_case(rng: &mut ChaCha8Rng) -> ViolationCase {
    let forms = ["xa", "xb", "xc"];
    let o = consistent_ontology(rng);
    let referents: Vec<String> = o.individuals().iter().chain(o.concepts()).cloned().collect();
    let concepts: Vec<&String> = o.concepts().iter().collect();
    let n_mentions = rng.random_range(1..=3);
    let mut g = Gazetteer::new();
    let mut dists = Vec::new();
    for f in &forms[..n_mentions] {
        let d = distribution(rng, &referents);
        g.insert(f, d.clone()).unwrap();
        dists.push(d);
    }

    let mut order: Vec<usize> = (0..n_mentions).collect();
    order.sort_by_key(|_| rng.random::<u32>());
    let mut text: Vec<String> = Vec::new();
    let mut slots: Vec<Slot> = Vec::new();
    let mut assertions = Vec::new();
    let mut prev: Option<(usize, bool)> = None;
    let mut next_mention = order.into_iter();
    loop {
        let item = if let Some(m) = next_mention.next() {
            if rng.random_bool(0.3) {
                // a concept word before the mention
                let c = concepts.choose(rng).unwrap();
                push_item(
                    &mut text,
                    &mut slots,
                    &mut assertions,
                    &mut prev,
                    rng,
                    c.to_lowercase(),
                    Slot { candidates: vec![((*c).clone(), 1.0)] },
                    false,
                );
            }
            (forms[m].to_string(), Slot { candidates: dists[m].clone() }, true)
        } else if rng.random_bool(0.5) {
            let c = concepts.choose(rng).unwrap();
            (c.to_lowercase(), Slot { candidates: vec![((*c).clone(), 1.0)] }, false)
        } else {
            break;
        };
        push_item(&mut text, &mut slots, &mut assertions, &mut prev, rng, item.0, item.1, item.2);
        if slots.len() > 6 {
            break;
        }
    }
    ViolationCase { ontology: o, gazetteer: g, sentence: text.join(" "), slots, assertions }
}

#[allow(clippy::too_many_arguments)]
fn push_item(
    text: &mut Vec<String>,
    slots: &mut Vec<Slot>,
    assertions: &mut Vec<(usize, usize)>,
    prev: &mut Option<(usize, bool)>,
    rng: &mut ChaCha8Rng,
    word: String,
    slot: Slot,
    is_mention: bool,
) {
    if let Some((p, p_mention)) = *prev {
        let copula = rng.random_bool(0.7);
        if copula {
            text.push("is".into());
            text.push(if rng.random_bool(0.5) { "a" } else { "an" }.into());
        } else {
            text.push("and".into());
        }
        slots.push(slot);
        let me = slots.len() - 1;
        if copula && p_mention {
            assertions.push((p, me));
        }
        *prev = Some((me, is_mention));
    } else {
        slots.push(slot);
        *prev = Some((slots.len() - 1, is_mention));
    }
    text.push(word);
}

// ---------------------------------------------------------------- metrics

/// LCS length by trying every subsequence of the shorter side.
pub fn lcs_brute(a: &[String], b: &[String]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let sub: Vec<&String> = (0..short.len()).filter(|i| mask & (1 << i) != 0).map(|i| &short[i]).collect();
        if sub.len() <= best {
            continue;
        }
        let mut it = long.iter();
        if sub.iter().all(|w| it.any(|x| x == *w)) {
            best = sub.len();
        }
    }
    best
}

pub fn rouge_l_oracle(cand: &[String], refs: &[Vec<String>]) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    refs.iter()
        .map(|r| {
            let l = lcs_brute(cand, r) as f64;
            if l == 0.0 {
                return 0.0;
            }
            let p = l / cand.len() as f64;
            let rec = l / r.len() as f64;
            100.0 * 2.0 * p * rec / (p + rec)
        })
        .fold(0.0, f64::max)
}

fn ngram_counts(ws: &[String], n: usize) -> BTreeMap<Vec<String>, usize> {
    let mut m = BTreeMap::new();
    if ws.len() >= n {
        for g in ws.windows(n) {
            *m.entry(g.to_vec()).or_insert(0) += 1;
        }
    }
    m
}

pub fn bleu_oracle(cand: &[String], refs: &[Vec<String>]) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let c = cand.len();
    let orders = c.min(4);
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let cc = ngram_counts(cand, n);
        let rcs: Vec<_> = refs.iter().map(|r| ngram_counts(r, n)).collect();
        let mut clipped = 0;
        for (g, k) in &cc {
            let cap = rcs.iter().map(|m| m.get(g).copied().unwrap_or(0)).max().unwrap_or(0);
            clipped += (*k).min(cap);
        }
        if clipped == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / (c + 1 - n) as f64).ln();
    }
    let mut r = refs[0].len();
    for x in refs {
        let (d, dr) = ((x.len() as i64 - c as i64).abs(), (r as i64 - c as i64).abs());
        if d < dr || (d == dr && x.len() < r) {
            r = x.len();
        }
    }
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    100.0 * bp * (log_sum / orders as f64).exp()
}

// ---------------------------------------------------------------- decoding

/// Every continuation of up to `max_len` tokens: those ending in eos plus
/// the unfinished ones of exactly `max_len`, with their log-probabilities.
pub fn enumerate_sequences<L: LmBackend>(lm: &L, max_len: usize) -> Vec<(Vec<TokenId>, f64, bool)> {
    let mut out = Vec::new();
    let mut stack = vec![(Vec::<TokenId>::new(), 0.0)];
    while let Some((ids, lp)) = stack.pop() {
        if ids.len() == max_len {
            out.push((ids, lp, false));
            continue;
        }
        let row = lm.next_logprobs(&ids).unwrap();
        for (t, x) in row.iter().enumerate() {
            let mut next = ids.clone();
            next.push(t as TokenId);
            if t as TokenId == lm.eos() {
                out.push((next, lp + x, true));
            } else {
                stack.push((next, lp + x));
            }
        }
    }
    out
}

pub fn words_of<L: LmBackend>(lm: &L, ids: &[TokenId]) -> Vec<String> {
    ids.iter().filter(|&&t| t != lm.eos()).map(|&t| lm.vocab()[t as usize].clone()).collect()
}

/// Winner of penalized search by enumeration: no violated forbid clause,
/// finished before unfinished, then satisfied, then
/// `logprob + alpha * coverage`, then logprob, then ids. Returns the ids
/// and the score.
pub fn constrained_winner<L: LmBackend>(
    lm: &L,
    c: &CnfConstraint,
    max_len: usize,
    alpha: f64,
) -> Option<(Vec<TokenId>, f64)> {
    type Row = (Vec<TokenId>, f64, bool, f64, bool);
    let scored: Vec<Row> = enumerate_sequences(lm, max_len)
        .into_iter()
        .filter_map(|(ids, lp, finished)| {
            let s = c.evaluate(&words_of(lm, &ids));
            (!s.has_violation()).then(|| (ids, lp, finished, lp + alpha * s.coverage(), s.is_satisfied()))
        })
        .collect();
    let key = |a: &Row, b: &Row| {
        b.4.cmp(&a.4).then(b.3.total_cmp(&a.3)).then(b.1.total_cmp(&a.1)).then_with(|| a.0.cmp(&b.0))
    };
    let mut finished: Vec<&Row> = scored.iter().filter(|x| x.2).collect();
    let mut open: Vec<&Row> = scored.iter().filter(|x| !x.2).collect();
    finished.sort_by(|a, b| key(a, b));
    open.sort_by(|a, b| key(a, b));
    finished.first().or(open.first()).map(|w| (w.0.clone(), w.3))
}

// ---------------------------------------------------------------- repair

/// Mock generations that fail their constraints: plain beam output for each
/// row, with a forbid clause on one non-keyword word every other row.
pub fn failing_generations(lm: &NgramLm, n: usize) -> Vec<(Vec<String>, CnfConstraint)> {
    let lex = mock::lexicon();
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(61);
    let mut out = Vec::new();
    for (i, row) in mock::dataset(4 * n, 7).iter().enumerate() {
        if out.len() == n {
            break;
        }
        let base = row.constraint(&lex).unwrap();
        let cfg = DecodeConfig { max_new_tokens: rng.random_range(4..=12), beam_size: 3, ..DecodeConfig::default() };
        let h = &beam(lm, &[], &cfg).unwrap()[0];
        let ws = words(&lm.detokenize(&h.ids).unwrap());
        let mut c = base.clone();
        if i % 2 == 0 {
            let keyword_forms: Vec<String> =
                base.clauses().iter().flat_map(|k| k.forms().map(String::from).collect::<Vec<_>>()).collect();
            if let Some(w) = ws.iter().find(|w| !keyword_forms.contains(w)) {
                c = CnfConstraint::parse(&format!("{base}&!({w})")).unwrap();
            }
        }
        if !c.evaluate(&ws).is_satisfied() {
            out.push((ws, c));
        }
    }
    assert_eq!(out.len(), n);
    out
}
