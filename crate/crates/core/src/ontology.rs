//! Ontologies of concepts, individuals and binary predicates.
//!
//! Derivation rules applied by [`Ontology::closure`]:
//!
//! * R1 `Sub(C,D) ∧ Sub(D,E) ⇒ Sub(C,E)` (never `Sub(C,C)`)
//! * R2 `MemberOf(a,C) ∧ Sub(C,D) ⇒ MemberOf(a,D)`
//! * R3 `Sub(C,D) ∧ Disjoint(D,E) ⇒ Disjoint(C,E)`
//! * R4 `Rel(p,a,b) ∧ Domain(p,C) ⇒ MemberOf(a,C)`
//! * R5 `Rel(p,a,b) ∧ Range(p,C) ⇒ MemberOf(b,C)`
//!
//! `Disjoint` is kept symmetric. Generated text is checked against the closure
//! through gazetteer mentions and the copula pattern `X is a C`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

type Pairs<'a> = BTreeSet<(&'a str, &'a str)>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OntologyError {
    #[error("axiom {axiom} references unknown {kind} {name:?}")]
    UnknownName { kind: &'static str, name: String, axiom: String },
    #[error("Sub({0},{0}) is not allowed")]
    ReflexiveSub(String),
    #[error("{0:?} is declared both as a concept and as an individual")]
    NameClash(String),
    #[error("subsumption cycle through {0:?}; equivalent concepts are not supported")]
    CyclicSubsumption(Vec<String>),
    #[error("ontology is inconsistent ({0} violation(s))")]
    Inconsistent(usize),
    #[error("gazetteer: {0}")]
    Gazetteer(String),
    #[error("{0}")]
    Load(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Axiom {
    Sub { sub: String, sup: String },
    Disjoint { left: String, right: String },
    Member { ind: String, concept: String },
    Rel { pred: String, subj: String, obj: String },
    Domain { pred: String, concept: String },
    Range { pred: String, concept: String },
}

impl Axiom {
    pub fn sub(sub: &str, sup: &str) -> Self {
        Axiom::Sub { sub: sub.into(), sup: sup.into() }
    }

    pub fn disjoint(left: &str, right: &str) -> Self {
        Axiom::Disjoint { left: left.into(), right: right.into() }
    }

    pub fn member(ind: &str, concept: &str) -> Self {
        Axiom::Member { ind: ind.into(), concept: concept.into() }
    }

    pub fn rel(pred: &str, subj: &str, obj: &str) -> Self {
        Axiom::Rel { pred: pred.into(), subj: subj.into(), obj: obj.into() }
    }

    pub fn domain(pred: &str, concept: &str) -> Self {
        Axiom::Domain { pred: pred.into(), concept: concept.into() }
    }

    pub fn range(pred: &str, concept: &str) -> Self {
        Axiom::Range { pred: pred.into(), concept: concept.into() }
    }

    /// Every name the axiom mentions.
    pub fn names(&self) -> Vec<&str> {
        match self {
            Axiom::Sub { sub, sup } => vec![sub, sup],
            Axiom::Disjoint { left, right } => vec![left, right],
            Axiom::Member { ind, concept } => vec![ind, concept],
            Axiom::Rel { pred, subj, obj } => vec![pred, subj, obj],
            Axiom::Domain { pred, concept } | Axiom::Range { pred, concept } => vec![pred, concept],
        }
    }

    /// English rendering used when constraints are spelled out in prompts.
    pub fn to_sentence(&self) -> String {
        match self {
            Axiom::Sub { sub, sup } => format!("Every {sub} is a {sup}."),
            Axiom::Disjoint { left, right } => format!("No {left} is a {right}."),
            Axiom::Member { ind, concept } => format!("{ind} is a {concept}."),
            Axiom::Rel { pred, subj, obj } => format!("{subj} {pred} {obj}."),
            Axiom::Domain { pred, concept } => format!("Anything that {pred} something is a {concept}."),
            Axiom::Range { pred, concept } => format!("Anything that something {pred} is a {concept}."),
        }
    }
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axiom::Sub { sub, sup } => write!(f, "Sub({sub},{sup})"),
            Axiom::Disjoint { left, right } => write!(f, "Disjoint({left},{right})"),
            Axiom::Member { ind, concept } => write!(f, "MemberOf({ind},{concept})"),
            Axiom::Rel { pred, subj, obj } => write!(f, "Rel({pred},{subj},{obj})"),
            Axiom::Domain { pred, concept } => write!(f, "Domain({pred},{concept})"),
            Axiom::Range { pred, concept } => write!(f, "Range({pred},{concept})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub axiom: Axiom,
    pub grounding: Vec<String>,
    pub probability: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct OntologyFile {
    #[serde(default)]
    concepts: Vec<String>,
    #[serde(default)]
    individuals: Vec<String>,
    #[serde(default)]
    predicates: Vec<String>,
    #[serde(default)]
    axioms: Vec<Axiom>,
}

/// Well-formed ontology: every axiom name is declared, no `Sub(C,C)`, and
/// `Disjoint` is stored in both orientations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "OntologyFile", into = "OntologyFile")]
pub struct Ontology {
    concepts: BTreeSet<String>,
    individuals: BTreeSet<String>,
    predicates: BTreeSet<String>,
    axioms: BTreeSet<Axiom>,
}

impl TryFrom<OntologyFile> for Ontology {
    type Error = OntologyError;

    fn try_from(file: OntologyFile) -> Result<Self, Self::Error> {
        Ontology::new(file.concepts, file.individuals, file.predicates, file.axioms)
    }
}

impl From<Ontology> for OntologyFile {
    fn from(o: Ontology) -> Self {
        OntologyFile {
            concepts: o.concepts.into_iter().collect(),
            individuals: o.individuals.into_iter().collect(),
            predicates: o.predicates.into_iter().collect(),
            axioms: o.axioms.into_iter().collect(),
        }
    }
}

impl Ontology {
    pub fn new<I, A>(concepts: I, individuals: I, predicates: I, axioms: A) -> Result<Self, OntologyError>
    where
        I: IntoIterator<Item = String>,
        A: IntoIterator<Item = Axiom>,
    {
        let mut o = Ontology {
            concepts: concepts.into_iter().collect(),
            individuals: individuals.into_iter().collect(),
            predicates: predicates.into_iter().collect(),
            axioms: BTreeSet::new(),
        };
        if let Some(clash) = o.concepts.intersection(&o.individuals).next() {
            return Err(OntologyError::NameClash(clash.clone()));
        }
        for axiom in axioms {
            o.add_axiom(axiom)?;
        }
        Ok(o)
    }

    /// Builds an ontology declaring exactly the names its axioms use.
    pub fn from_axioms(axioms: impl IntoIterator<Item = Axiom>) -> Result<Self, OntologyError> {
        let axioms: Vec<Axiom> = axioms.into_iter().collect();
        let mut concepts = BTreeSet::new();
        let mut individuals = BTreeSet::new();
        let mut predicates = BTreeSet::new();
        for axiom in &axioms {
            match axiom {
                Axiom::Sub { sub, sup } => {
                    concepts.insert(sub.clone());
                    concepts.insert(sup.clone());
                }
                Axiom::Disjoint { left, right } => {
                    concepts.insert(left.clone());
                    concepts.insert(right.clone());
                }
                Axiom::Member { ind, concept } => {
                    individuals.insert(ind.clone());
                    concepts.insert(concept.clone());
                }
                Axiom::Rel { pred, subj, obj } => {
                    predicates.insert(pred.clone());
                    individuals.insert(subj.clone());
                    individuals.insert(obj.clone());
                }
                Axiom::Domain { pred, concept } | Axiom::Range { pred, concept } => {
                    predicates.insert(pred.clone());
                    concepts.insert(concept.clone());
                }
            }
        }
        Ontology::new(concepts, individuals, predicates, axioms)
    }

    pub fn add_concept(&mut self, name: &str) -> Result<(), OntologyError> {
        if self.individuals.contains(name) {
            return Err(OntologyError::NameClash(name.into()));
        }
        self.concepts.insert(name.into());
        Ok(())
    }

    pub fn add_individual(&mut self, name: &str) -> Result<(), OntologyError> {
        if self.concepts.contains(name) {
            return Err(OntologyError::NameClash(name.into()));
        }
        self.individuals.insert(name.into());
        Ok(())
    }

    pub fn add_predicate(&mut self, name: &str) {
        self.predicates.insert(name.into());
    }

    pub fn add_axiom(&mut self, axiom: Axiom) -> Result<(), OntologyError> {
        let check = |set: &BTreeSet<String>, kind: &'static str, name: &str| {
            if set.contains(name) {
                Ok(())
            } else {
                Err(OntologyError::UnknownName { kind, name: name.into(), axiom: axiom.to_string() })
            }
        };
        match &axiom {
            Axiom::Sub { sub, sup } => {
                check(&self.concepts, "concept", sub)?;
                check(&self.concepts, "concept", sup)?;
                if sub == sup {
                    return Err(OntologyError::ReflexiveSub(sub.clone()));
                }
            }
            Axiom::Disjoint { left, right } => {
                check(&self.concepts, "concept", left)?;
                check(&self.concepts, "concept", right)?;
                self.axioms.insert(Axiom::disjoint(right, left));
            }
            Axiom::Member { ind, concept } => {
                check(&self.individuals, "individual", ind)?;
                check(&self.concepts, "concept", concept)?;
            }
            Axiom::Rel { pred, subj, obj } => {
                check(&self.predicates, "predicate", pred)?;
                check(&self.individuals, "individual", subj)?;
                check(&self.individuals, "individual", obj)?;
            }
            Axiom::Domain { pred, concept } | Axiom::Range { pred, concept } => {
                check(&self.predicates, "predicate", pred)?;
                check(&self.concepts, "concept", concept)?;
            }
        }
        self.axioms.insert(axiom);
        Ok(())
    }

    pub fn concepts(&self) -> &BTreeSet<String> {
        &self.concepts
    }

    pub fn individuals(&self) -> &BTreeSet<String> {
        &self.individuals
    }

    pub fn predicates(&self) -> &BTreeSet<String> {
        &self.predicates
    }

    pub fn axioms(&self) -> &BTreeSet<Axiom> {
        &self.axioms
    }

    pub fn contains(&self, axiom: &Axiom) -> bool {
        self.axioms.contains(axiom)
    }

    pub fn from_json_str(json: &str) -> Result<Self, OntologyError> {
        serde_json::from_str(json).map_err(|e| OntologyError::Load(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OntologyError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| OntologyError::Load(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| OntologyError::Load(format!("{}: {e}", path.display())))
    }

    fn direct_sups(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for axiom in &self.axioms {
            if let Axiom::Sub { sub, sup } = axiom {
                out.entry(sub.as_str()).or_default().push(sup.as_str());
            }
        }
        out
    }

    /// Strict superconcepts of every concept (reachable over `Sub`, self excluded).
    fn strict_sups(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let direct = self.direct_sups();
        let mut out = BTreeMap::new();
        for c in self.concepts.iter().map(String::as_str) {
            let mut seen = BTreeSet::new();
            let mut stack: Vec<&str> = direct.get(c).cloned().unwrap_or_default();
            while let Some(d) = stack.pop() {
                if seen.insert(d) {
                    if let Some(next) = direct.get(d) {
                        stack.extend(next.iter().copied());
                    }
                }
            }
            seen.remove(c);
            out.insert(c, seen);
        }
        out
    }

    /// Memberships asserted directly or through R4/R5, before R2.
    fn seed_memberships(&self) -> (Pairs<'_>, Pairs<'_>) {
        let mut domains: HashMap<&str, Vec<&str>> = HashMap::new();
        let mut ranges: HashMap<&str, Vec<&str>> = HashMap::new();
        let mut asserted = BTreeSet::new();
        for axiom in &self.axioms {
            match axiom {
                Axiom::Domain { pred, concept } => domains.entry(pred).or_default().push(concept),
                Axiom::Range { pred, concept } => ranges.entry(pred).or_default().push(concept),
                Axiom::Member { ind, concept } => {
                    asserted.insert((ind.as_str(), concept.as_str()));
                }
                _ => {}
            }
        }
        let mut derived = BTreeSet::new();
        for axiom in &self.axioms {
            if let Axiom::Rel { pred, subj, obj } = axiom {
                for c in domains.get(pred.as_str()).into_iter().flatten() {
                    derived.insert((subj.as_str(), *c));
                }
                for c in ranges.get(pred.as_str()).into_iter().flatten() {
                    derived.insert((obj.as_str(), *c));
                }
            }
        }
        (asserted, derived)
    }

    /// Least fixpoint of R1-R5.
    pub fn closure(&self) -> Ontology {
        let sups = self.strict_sups();
        let mut subs: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (c, ds) in &sups {
            subs.entry(c).or_default().insert(c);
            for d in ds {
                subs.entry(d).or_default().insert(c);
            }
        }

        let mut axioms = self.axioms.clone();
        for (c, ds) in &sups {
            for d in ds {
                axioms.insert(Axiom::sub(c, d));
            }
        }

        let (asserted, derived) = self.seed_memberships();
        for (a, c) in asserted.iter().chain(&derived) {
            axioms.insert(Axiom::member(a, c));
            for d in sups.get(c).into_iter().flatten() {
                axioms.insert(Axiom::member(a, d));
            }
        }

        for axiom in &self.axioms {
            if let Axiom::Disjoint { left, right } = axiom {
                let empty = BTreeSet::new();
                let lefts = subs.get(left.as_str()).unwrap_or(&empty);
                let rights = subs.get(right.as_str()).unwrap_or(&empty);
                for c in lefts {
                    for e in rights {
                        axioms.insert(Axiom::disjoint(c, e));
                        axioms.insert(Axiom::disjoint(e, c));
                    }
                }
            }
        }

        Ontology {
            concepts: self.concepts.clone(),
            individuals: self.individuals.clone(),
            predicates: self.predicates.clone(),
            axioms,
        }
    }

    /// Concepts each individual belongs to in this ontology (no derivation).
    fn memberships(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut out: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for axiom in &self.axioms {
            if let Axiom::Member { ind, concept } = axiom {
                out.entry(ind).or_default().insert(concept);
            }
        }
        out
    }

    /// Certain violations: an individual in two disjoint concepts of the closure.
    pub fn is_consistent(&self) -> (bool, Vec<Violation>) {
        let closed = self.closure();
        let mut violations = Vec::new();
        for (ind, concepts) in closed.memberships() {
            for c in &concepts {
                for d in concepts.range(*c..) {
                    let axiom = Axiom::disjoint(c, d);
                    if closed.contains(&axiom) {
                        violations.push(Violation { axiom, grounding: vec![ind.to_owned()], probability: 1.0 });
                    }
                }
            }
        }
        (violations.is_empty(), violations)
    }

    fn find_cycle(&self) -> Option<Vec<String>> {
        let sups = self.strict_sups();
        let direct = self.direct_sups();
        for (c, ds) in &direct {
            for d in ds {
                if sups.get(d).is_some_and(|s| s.contains(c)) || d == c {
                    return Some(vec![c.to_string(), d.to_string()]);
                }
            }
        }
        None
    }

    /// Smallest axiom set with the same closure: transitive reduction of
    /// `Sub`, plus dropping memberships and disjointness derivable from what
    /// is kept. `Rel`, `Domain` and `Range` are always kept.
    pub fn minimal_axioms(&self) -> Result<Ontology, OntologyError> {
        if let Some(cycle) = self.find_cycle() {
            return Err(OntologyError::CyclicSubsumption(cycle));
        }
        let (consistent, violations) = self.is_consistent();
        if !consistent {
            return Err(OntologyError::Inconsistent(violations.len()));
        }
        let sups = self.strict_sups();
        let direct = self.direct_sups();
        let below = |c: &str, d: &str| c == d || sups.get(c).is_some_and(|s| s.contains(d));

        let (asserted, derived) = self.seed_memberships();
        let mut sources: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (a, c) in asserted.iter().chain(&derived) {
            sources.entry(a).or_default().insert(c);
        }

        let disjoint_pairs: BTreeSet<(&str, &str)> = self
            .axioms
            .iter()
            .filter_map(|ax| match ax {
                Axiom::Disjoint { left, right } if left <= right => Some((left.as_str(), right.as_str())),
                _ => None,
            })
            .collect();

        let mut kept = BTreeSet::new();
        for axiom in &self.axioms {
            let keep = match axiom {
                Axiom::Sub { sub, sup } => !direct[sub.as_str()].iter().any(|other| other != sup && below(other, sup)),
                Axiom::Member { ind, concept } => {
                    !derived.contains(&(ind.as_str(), concept.as_str()))
                        && !sources[ind.as_str()].iter().any(|other| *other != concept && below(other, concept))
                }
                Axiom::Disjoint { left, right } => {
                    let (c, f) =
                        if left <= right { (left.as_str(), right.as_str()) } else { (right.as_str(), left.as_str()) };
                    !disjoint_pairs.iter().any(|&(d, e)| {
                        (d, e) != (c, f) && ((below(c, d) && below(f, e)) || (below(c, e) && below(f, d)))
                    })
                }
                Axiom::Rel { .. } | Axiom::Domain { .. } | Axiom::Range { .. } => true,
            };
            if keep {
                kept.insert(axiom.clone());
            }
        }
        Ok(Ontology {
            concepts: self.concepts.clone(),
            individuals: self.individuals.clone(),
            predicates: self.predicates.clone(),
            axioms: kept,
        })
    }

    /// Sentences for axioms relevant to `focus`: those naming a focus
    /// referent first, then those one `Sub` step away from a focus concept
    /// (a focus concept or a concept a focus individual belongs to).
    pub fn constraints_to_text(&self, focus: &BTreeSet<String>) -> Vec<String> {
        let mut frontier: BTreeSet<&str> =
            focus.iter().filter(|f| self.concepts.contains(*f)).map(String::as_str).collect();
        for axiom in &self.axioms {
            if let Axiom::Member { ind, concept } = axiom {
                if focus.contains(ind) {
                    frontier.insert(concept);
                }
            }
        }
        let canonical = |axiom: &Axiom| match axiom {
            Axiom::Disjoint { left, right } => left <= right,
            _ => true,
        };
        let mut direct = Vec::new();
        let mut near = Vec::new();
        for axiom in self.axioms.iter().filter(|a| canonical(a)) {
            if axiom.names().iter().any(|n| focus.contains(*n)) {
                direct.push(axiom);
                continue;
            }
            let one_step = match axiom {
                Axiom::Sub { sub, .. } => frontier.contains(sub.as_str()),
                Axiom::Disjoint { left, right } => {
                    frontier.contains(left.as_str()) || frontier.contains(right.as_str())
                }
                _ => false,
            };
            if one_step {
                near.push(axiom);
            }
        }
        direct.into_iter().chain(near).map(Axiom::to_sentence).collect()
    }
}

/// Surface form -> distribution over referents (concepts or individuals).
/// Forms are normalized to lowercase words and may span up to three words.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, Vec<(String, f64)>>", into = "BTreeMap<String, Vec<(String, f64)>>")]
pub struct Gazetteer {
    entries: BTreeMap<String, Vec<(String, f64)>>,
}

/// Longest surface form, in words, that mention detection looks for.
pub const MAX_MENTION_WORDS: usize = 3;

impl Gazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, form: &str, candidates: Vec<(String, f64)>) -> Result<(), OntologyError> {
        let key = crate::constraints::words(form).join(" ");
        let n_words = key.split(' ').count();
        if key.is_empty() || n_words > MAX_MENTION_WORDS {
            return Err(OntologyError::Gazetteer(format!("form {form:?} must have 1 to {MAX_MENTION_WORDS} words")));
        }
        let mut total = 0.0;
        for (referent, p) in &candidates {
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(OntologyError::Gazetteer(format!(
                    "probability {p} for {referent:?} under {form:?} is outside (0,1]"
                )));
            }
            total += p;
        }
        if total > 1.0 + 1e-9 {
            return Err(OntologyError::Gazetteer(format!("probabilities under {form:?} sum to {total} > 1")));
        }
        self.entries.insert(key, candidates);
        Ok(())
    }

    pub fn get(&self, form: &str) -> Option<&[(String, f64)]> {
        self.entries.get(form).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_json_str(json: &str) -> Result<Self, OntologyError> {
        serde_json::from_str(json).map_err(|e| OntologyError::Gazetteer(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OntologyError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| OntologyError::Gazetteer(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }
}

impl TryFrom<BTreeMap<String, Vec<(String, f64)>>> for Gazetteer {
    type Error = OntologyError;

    fn try_from(map: BTreeMap<String, Vec<(String, f64)>>) -> Result<Self, Self::Error> {
        let mut g = Gazetteer::new();
        for (form, cands) in map {
            g.insert(&form, cands)?;
        }
        Ok(g)
    }
}

impl From<Gazetteer> for BTreeMap<String, Vec<(String, f64)>> {
    fn from(g: Gazetteer) -> Self {
        g.entries
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mention {
    /// Word span `[start, end)`.
    pub start: usize,
    pub end: usize,
    pub form: String,
    pub candidates: Vec<(String, f64)>,
}

/// Leftmost-longest, non-overlapping gazetteer matches.
pub fn detect_mentions<S: AsRef<str>>(words: &[S], g: &Gazetteer) -> Vec<Mention> {
    let words: Vec<String> = words.iter().map(|w| w.as_ref().to_lowercase()).collect();
    let mut mentions = Vec::new();
    let mut i = 0;
    'outer: while i < words.len() {
        for len in (1..=MAX_MENTION_WORDS.min(words.len() - i)).rev() {
            let form = words[i..i + len].join(" ");
            if let Some(cands) = g.get(&form) {
                mentions.push(Mention { start: i, end: i + len, form, candidates: cands.to_vec() });
                i += len;
                continue 'outer;
            }
        }
        i += 1;
    }
    mentions
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    /// Probability that at least one extracted assertion contradicts the ontology.
    pub probability: f64,
    pub violations: Vec<Violation>,
    /// Number of copula assertions found in the text.
    pub assertions: usize,
}

/// A span with a referent distribution: a gazetteer mention or a bare concept word.
#[derive(Debug, Clone)]
struct Slot {
    candidates: Vec<(String, f64)>,
}

impl Slot {
    fn residual(&self) -> f64 {
        (1.0 - self.candidates.iter().map(|(_, p)| p).sum::<f64>()).max(0.0)
    }
}

struct Checker<'a> {
    closure: &'a Ontology,
    members: BTreeMap<&'a str, BTreeSet<&'a str>>,
}

impl<'a> Checker<'a> {
    fn new(closure: &'a Ontology) -> Self {
        Checker { closure, members: closure.memberships() }
    }

    /// Disjoint axiom violated by asserting `MemberOf(ind, concept)`, if any.
    fn contradiction(&self, ind: &str, concept: &str) -> Option<Axiom> {
        if !self.closure.individuals.contains(ind) || !self.closure.concepts.contains(concept) {
            return None;
        }
        let own = std::iter::once(concept);
        let held = self.members.get(ind).into_iter().flatten().copied();
        own.chain(held).map(|d| Axiom::disjoint(concept, d)).find(|ax| self.closure.contains(ax))
    }
}

/// Probability that `words` asserts something the ontology rules out.
///
/// Assertions come from `<mention> is a|an <mention or concept word>`.
/// Referent choices are independent across mentions and mutually exclusive
/// within one; assertions sharing a mention are scored jointly.
pub fn violation_probability<S: AsRef<str>>(
    words: &[S],
    o: &Ontology,
    g: &Gazetteer,
) -> Result<ViolationReport, OntologyError> {
    let (consistent, violations) = o.is_consistent();
    if !consistent {
        return Err(OntologyError::Inconsistent(violations.len()));
    }
    let closure = o.closure();
    let checker = Checker::new(&closure);
    let words: Vec<String> = words.iter().map(|w| w.as_ref().to_lowercase()).collect();
    let mentions = detect_mentions(&words, g);
    let by_start: HashMap<usize, usize> = mentions.iter().enumerate().map(|(i, m)| (m.start, i)).collect();
    let concept_words: BTreeMap<String, &str> =
        closure.concepts.iter().map(|c| (c.to_lowercase(), c.as_str())).collect();

    let mut slots: Vec<Slot> = mentions.iter().map(|m| Slot { candidates: m.candidates.clone() }).collect();
    let mut assertions: Vec<(usize, usize)> = Vec::new();
    for (si, m) in mentions.iter().enumerate() {
        let e = m.end;
        let copula = words.get(e).is_some_and(|w| w == "is") && words.get(e + 1).is_some_and(|w| w == "a" || w == "an");
        if !copula || e + 2 >= words.len() {
            continue;
        }
        let object = if let Some(&oi) = by_start.get(&(e + 2)) {
            Some(oi)
        } else if let Some(c) = concept_words.get(&words[e + 2]) {
            slots.push(Slot { candidates: vec![(c.to_string(), 1.0)] });
            Some(slots.len() - 1)
        } else {
            None
        };
        if let Some(oi) = object {
            assertions.push((si, oi));
        }
    }

    let mut violations = Vec::new();
    for &(s, t) in &assertions {
        for (ind, ps) in &slots[s].candidates {
            for (concept, pc) in &slots[t].candidates {
                if let Some(axiom) = checker.contradiction(ind, concept) {
                    violations.push(Violation {
                        axiom,
                        grounding: vec![ind.clone(), concept.clone()],
                        probability: ps * pc,
                    });
                }
            }
        }
    }

    // Components of slots linked by assertions are independent of each other.
    let mut parent: Vec<usize> = (0..slots.len()).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        parent[x] = r;
        r
    }
    for &(s, t) in &assertions {
        let (a, b) = (find(&mut parent, s), find(&mut parent, t));
        parent[a] = b;
    }
    let mut components: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for &(s, t) in &assertions {
        let root = find(&mut parent, s);
        components.entry(root).or_default().push((s, t));
    }

    let mut none_violated = 1.0;
    for comp in components.values() {
        let members: BTreeSet<usize> = comp.iter().flat_map(|&(s, t)| [s, t]).collect();
        let members: Vec<usize> = members.into_iter().collect();
        none_violated *= 1.0 - component_probability(&members, comp, &slots, &checker);
    }
    Ok(ViolationReport { probability: 1.0 - none_violated, violations, assertions: assertions.len() })
}

/// Exact probability that some assertion in one component is violated,
/// enumerating each slot's referent (or no referent).
fn component_probability(members: &[usize], asserts: &[(usize, usize)], slots: &[Slot], checker: &Checker) -> f64 {
    let mut choice: HashMap<usize, Option<usize>> = HashMap::new();
    fn rec(
        k: usize,
        weight: f64,
        members: &[usize],
        asserts: &[(usize, usize)],
        slots: &[Slot],
        checker: &Checker,
        choice: &mut HashMap<usize, Option<usize>>,
    ) -> f64 {
        if weight == 0.0 {
            return 0.0;
        }
        if k == members.len() {
            let violated = asserts.iter().any(|&(s, t)| match (choice[&s], choice[&t]) {
                (Some(i), Some(j)) => {
                    checker.contradiction(&slots[s].candidates[i].0, &slots[t].candidates[j].0).is_some()
                }
                _ => false,
            });
            return if violated { weight } else { 0.0 };
        }
        let slot = members[k];
        let mut total = 0.0;
        for (i, (_, p)) in slots[slot].candidates.iter().enumerate() {
            choice.insert(slot, Some(i));
            total += rec(k + 1, weight * p, members, asserts, slots, checker, choice);
        }
        choice.insert(slot, None);
        total += rec(k + 1, weight * slots[slot].residual(), members, asserts, slots, checker, choice);
        total
    }
    rec(0, 1.0, members, asserts, slots, checker, &mut choice)
}
