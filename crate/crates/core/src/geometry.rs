//! Ball embeddings: concepts as balls, individuals as points, trained so
//! that containment and separation realize the ontology's axioms.
//!
//! Per-axiom hinge losses with margin `γ`:
//!
//! * `Sub(C,D)`: `max(0, ‖c_C − c_D‖ + r_C − r_D + γ)`
//! * `Disjoint(C,D)`: `max(0, r_C + r_D − ‖c_C − c_D‖ + γ)`
//! * `MemberOf(a,C)`: `max(0, ‖p_a − c_C‖ − r_C + γ)`
//!
//! Relation, domain and range axioms act through the memberships they
//! derive in the closure.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{Axiom, Ontology};

pub const MIN_RADIUS: f64 = 1e-4;
const VERIFY_SLACK: f64 = 1e-9;
const MAX_HALVINGS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("{0:?} has no embedding")]
    Unembedded(String),
    #[error("ontology is inconsistent ({0} violation(s)); nothing to embed")]
    Inconsistent(usize),
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("embedding: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Entry {
    Ball(Ball),
    Point { point: Vec<f64> },
}

/// Balls for concepts and points for individuals in `R^dim`.
///
/// The flat parameter vector used by [`gradients`] lists every concept
/// (name order) as center then radius, followed by every individual point.
#[derive(Debug, Clone, PartialEq)]
pub struct BallEmbedding {
    pub dim: usize,
    pub concepts: BTreeMap<String, Ball>,
    pub individuals: BTreeMap<String, Vec<f64>>,
}

impl BallEmbedding {
    pub fn new(dim: usize) -> Self {
        BallEmbedding { dim, concepts: BTreeMap::new(), individuals: BTreeMap::new() }
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for b in self.concepts.values() {
            out.extend_from_slice(&b.center);
            out.push(b.radius);
        }
        for p in self.individuals.values() {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let n = self.dim;
        let mut i = 0;
        for b in self.concepts.values_mut() {
            b.center.copy_from_slice(&params[i..i + n]);
            b.radius = params[i + n];
            i += n + 1;
        }
        for p in self.individuals.values_mut() {
            p.copy_from_slice(&params[i..i + n]);
            i += n;
        }
    }

    pub fn num_params(&self) -> usize {
        self.concepts.len() * (self.dim + 1) + self.individuals.len() * self.dim
    }

    pub fn to_json(&self) -> String {
        let mut map: BTreeMap<&str, Entry> = BTreeMap::new();
        for (name, b) in &self.concepts {
            map.insert(name, Entry::Ball(b.clone()));
        }
        for (name, p) in &self.individuals {
            map.insert(name, Entry::Point { point: p.clone() });
        }
        serde_json::to_string_pretty(&map).expect("embedding serialize")
    }

    pub fn from_json_str(json: &str) -> Result<Self, GeometryError> {
        let map: BTreeMap<String, Entry> = serde_json::from_str(json).map_err(|e| GeometryError::Io(e.to_string()))?;
        let mut e = BallEmbedding::new(0);
        for (name, entry) in map {
            let len = match &entry {
                Entry::Ball(b) => b.center.len(),
                Entry::Point { point } => point.len(),
            };
            if e.dim == 0 {
                e.dim = len;
            } else if e.dim != len {
                return Err(GeometryError::Io(format!("{name}: dimension {len}, expected {}", e.dim)));
            }
            match entry {
                Entry::Ball(b) => {
                    e.concepts.insert(name, b);
                }
                Entry::Point { point } => {
                    e.individuals.insert(name, point);
                }
            }
        }
        Ok(e)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GeometryError> {
        std::fs::write(path.as_ref(), self.to_json()).map_err(|e| GeometryError::Io(e.to_string()))
    }

    fn offsets(&self) -> HashMap<&str, usize> {
        let n = self.dim;
        let mut map = HashMap::new();
        let mut i = 0;
        for name in self.concepts.keys() {
            map.insert(name.as_str(), i);
            i += n + 1;
        }
        for name in self.individuals.keys() {
            map.insert(name.as_str(), i);
            i += n;
        }
        map
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    /// Hinge margin γ.
    pub margin: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Radii are capped here and penalized above it.
    pub r_max: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { dim: 2, margin: 0.05, lr: 0.1, epochs: 2000, seed: 0, r_max: 10.0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::Config(m.to_owned()));
        if self.dim < 2 {
            return bad("dim must be at least 2");
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad("margin must be finite and ≥ 0");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and > 0");
        }
        if !(self.r_max > MIN_RADIUS) {
            return bad("r_max must exceed the minimum radius");
        }
        Ok(())
    }
}

/// Axiom with its referents resolved to parameter offsets.
#[derive(Debug, Clone, Copy)]
enum Term {
    Sub(usize, usize),
    Disjoint(usize, usize),
    Member(usize, usize),
}

fn resolve(e: &BallEmbedding, offsets: &HashMap<&str, usize>, axiom: &Axiom) -> Result<Option<Term>, GeometryError> {
    let ball = |name: &str| {
        if e.concepts.contains_key(name) {
            Ok(offsets[name])
        } else {
            Err(GeometryError::Unembedded(name.to_owned()))
        }
    };
    let point = |name: &str| {
        if e.individuals.contains_key(name) {
            Ok(offsets[name])
        } else {
            Err(GeometryError::Unembedded(name.to_owned()))
        }
    };
    Ok(Some(match axiom {
        Axiom::Sub { sub, sup } => Term::Sub(ball(sub)?, ball(sup)?),
        Axiom::Disjoint { left, right } => Term::Disjoint(ball(left)?, ball(right)?),
        Axiom::Member { ind, concept } => Term::Member(point(ind)?, ball(concept)?),
        Axiom::Rel { .. } | Axiom::Domain { .. } | Axiom::Range { .. } => return Ok(None),
    }))
}

fn dist(p: &[f64], a: usize, b: usize, n: usize) -> f64 {
    (0..n).map(|k| (p[a + k] - p[b + k]).powi(2)).sum::<f64>().sqrt()
}

/// Hinge argument of a term; the loss is `max(0, value)`.
fn hinge(p: &[f64], n: usize, term: Term, margin: f64) -> f64 {
    match term {
        Term::Sub(c, d) => dist(p, c, d, n) + p[c + n] - p[d + n] + margin,
        Term::Disjoint(c, d) => p[c + n] + p[d + n] - dist(p, c, d, n) + margin,
        Term::Member(a, c) => dist(p, a, c, n) - p[c + n] + margin,
    }
}

/// Adds the subgradient of `max(0, hinge)` to `grad`.
fn add_gradient(p: &[f64], n: usize, term: Term, margin: f64, grad: &mut [f64]) {
    if hinge(p, n, term, margin) <= 0.0 {
        return;
    }
    let unit = |a: usize, b: usize| -> Vec<f64> {
        let d = dist(p, a, b, n);
        if d == 0.0 {
            vec![0.0; n]
        } else {
            (0..n).map(|k| (p[a + k] - p[b + k]) / d).collect()
        }
    };
    match term {
        Term::Sub(c, d) => {
            let u = unit(c, d);
            for k in 0..n {
                grad[c + k] += u[k];
                grad[d + k] -= u[k];
            }
            grad[c + n] += 1.0;
            grad[d + n] -= 1.0;
        }
        Term::Disjoint(c, d) => {
            let u = unit(c, d);
            for k in 0..n {
                grad[c + k] -= u[k];
                grad[d + k] += u[k];
            }
            grad[c + n] += 1.0;
            grad[d + n] += 1.0;
        }
        Term::Member(a, c) => {
            let u = unit(a, c);
            for k in 0..n {
                grad[a + k] += u[k];
                grad[c + k] -= u[k];
            }
            grad[c + n] -= 1.0;
        }
    }
}

/// Loss of one axiom; 0 for relation, domain and range axioms.
pub fn axiom_loss(e: &BallEmbedding, axiom: &Axiom, margin: f64) -> Result<f64, GeometryError> {
    let offsets = e.offsets();
    Ok(match resolve(e, &offsets, axiom)? {
        Some(term) => hinge(&e.params(), e.dim, term, margin).max(0.0),
        None => 0.0,
    })
}

struct Objective {
    dim: usize,
    terms: Vec<Term>,
    radii: Vec<usize>,
    margin: f64,
    r_max: f64,
}

impl Objective {
    fn new(e: &BallEmbedding, o: &Ontology, margin: f64, r_max: f64) -> Result<Self, GeometryError> {
        let closure = o.closure();
        let offsets = e.offsets();
        let mut terms = Vec::new();
        for axiom in closure.axioms() {
            if let Some(t) = resolve(e, &offsets, axiom)? {
                terms.push(t);
            }
        }
        let radii = e.concepts.keys().map(|k| offsets[k.as_str()] + e.dim).collect();
        Ok(Objective { dim: e.dim, terms, radii, margin, r_max })
    }

    fn loss(&self, p: &[f64]) -> f64 {
        let axioms: f64 = self.terms.iter().map(|&t| hinge(p, self.dim, t, self.margin).max(0.0)).sum();
        let reg: f64 = self.radii.iter().map(|&r| (p[r] - self.r_max).max(0.0)).sum();
        axioms + reg
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; p.len()];
        for &t in &self.terms {
            add_gradient(p, self.dim, t, self.margin, &mut g);
        }
        for &r in &self.radii {
            if p[r] > self.r_max {
                g[r] += 1.0;
            }
        }
        g
    }

    fn clamp(&self, p: &mut [f64]) {
        for &r in &self.radii {
            p[r] = p[r].clamp(MIN_RADIUS, self.r_max);
        }
    }
}

/// Sum of axiom losses over the closure of `o` plus `Σ max(0, r − r_max)`.
pub fn total_loss(e: &BallEmbedding, o: &Ontology, margin: f64, r_max: f64) -> Result<f64, GeometryError> {
    Ok(Objective::new(e, o, margin, r_max)?.loss(&e.params()))
}

/// Subgradient of [`total_loss`], laid out like [`BallEmbedding::params`].
pub fn gradients(e: &BallEmbedding, o: &Ontology, margin: f64, r_max: f64) -> Result<Vec<f64>, GeometryError> {
    Ok(Objective::new(e, o, margin, r_max)?.gradient(&e.params()))
}

/// Seeded initial embedding: coordinates uniform in `[-1, 1]`, radii 0.5.
pub fn init(o: &Ontology, dim: usize, seed: u64) -> BallEmbedding {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = BallEmbedding::new(dim);
    for c in o.concepts() {
        let center = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        e.concepts.insert(c.clone(), Ball { center, radius: 0.5 });
    }
    for a in o.individuals() {
        let point = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        e.individuals.insert(a.clone(), point);
    }
    e
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainResult {
    #[serde(skip)]
    pub embedding: BallEmbedding,
    /// Loss before the first step and after every accepted step.
    pub trace: Vec<f64>,
    pub steps: usize,
}

/// Full-batch gradient descent. A step that would raise the loss is retried
/// at half the step size, up to 20 times; training stops early at zero loss
/// or when no step helps.
pub fn train(o: &Ontology, cfg: &TrainConfig) -> Result<TrainResult, GeometryError> {
    cfg.validate()?;
    let (consistent, violations) = o.is_consistent();
    if !consistent {
        return Err(GeometryError::Inconsistent(violations.len()));
    }
    let mut e = init(o, cfg.dim, cfg.seed);
    let obj = Objective::new(&e, o, cfg.margin, cfg.r_max)?;
    let mut p = e.params();
    obj.clamp(&mut p);
    let mut loss = obj.loss(&p);
    let mut trace = vec![loss];
    let mut steps = 0;
    for _ in 0..cfg.epochs {
        if loss == 0.0 {
            break;
        }
        let g = obj.gradient(&p);
        if g.iter().all(|x| *x == 0.0) {
            break;
        }
        let mut step = cfg.lr;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial: Vec<f64> = p.iter().zip(&g).map(|(x, d)| x - step * d).collect();
            obj.clamp(&mut trial);
            let l = obj.loss(&trial);
            if l <= loss {
                accepted = Some((trial, l));
                break;
            }
            step /= 2.0;
        }
        let Some((next, l)) = accepted else { break };
        p = next;
        loss = l;
        trace.push(loss);
        steps += 1;
    }
    e.set_params(&p);
    Ok(TrainResult { embedding: e, trace, steps })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checked: usize,
    pub satisfied: usize,
    pub fraction: f64,
    pub failing: Vec<Axiom>,
}

/// Checks every geometric axiom of the closure at zero margin.
pub fn verify(e: &BallEmbedding, o: &Ontology) -> VerifyReport {
    let closure = o.closure();
    let offsets = e.offsets();
    let p = e.params();
    let mut checked = 0;
    let mut failing = Vec::new();
    for axiom in closure.axioms() {
        let ok = match resolve(e, &offsets, axiom) {
            Ok(None) => continue,
            Ok(Some(term)) => hinge(&p, e.dim, term, 0.0) <= VERIFY_SLACK,
            Err(_) => false,
        };
        checked += 1;
        if !ok {
            failing.push(axiom.clone());
        }
    }
    let satisfied = checked - failing.len();
    let fraction = if checked == 0 { 1.0 } else { satisfied as f64 / checked as f64 };
    VerifyReport { checked, satisfied, fraction, failing }
}

/// The small political ontology used in examples and tests.
pub fn toy_ontology() -> Ontology {
    Ontology::from_axioms([
        Axiom::sub("President", "Person"),
        Axiom::sub("Democrat", "Person"),
        Axiom::sub("Person", "Agent"),
        Axiom::disjoint("President", "Democrat"),
        Axiom::member("obama", "President"),
        Axiom::member("bernie", "Democrat"),
    ])
    .expect("toy ontology is well formed")
}
