//! Lexical constraints in conjunctive normal form over keyword inflections.
//!
//! A [`CnfConstraint`] is a conjunction of clauses. A positive clause is met
//! once any of its surface forms appears as a whole word; a negative (forbid)
//! clause is violated as soon as any of its forms appears, and stays violated.
//!
//! Text is matched case-insensitively after removing the characters in
//! [`PUNCTUATION`] and splitting on whitespace (see [`words`]).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Characters removed from text before it is split into words.
pub const PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '"', '(', ')', '\''];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("{message} at offset {offset}")]
    Parse { offset: usize, message: String },
    #[error("invalid form {form:?}: {reason}")]
    InvalidForm { form: String, reason: &'static str },
    #[error("keyword list is empty")]
    NoKeywords,
    #[error("constraint has no clauses")]
    NoClauses,
    #[error("clause {clause} is empty")]
    EmptyClause { clause: usize },
    #[error("clause {clause} mixes required and forbidden literals")]
    MixedPolarity { clause: usize },
    #[error("clause {clause} repeats form {form:?}")]
    DuplicateForm { clause: usize, form: String },
    #[error("lexicon: {0}")]
    Lexicon(String),
}

/// Lowercases `text`, strips [`PUNCTUATION`] and splits on whitespace.
pub fn words(text: &str) -> Vec<String> {
    let cleaned: String = text.chars().filter(|c| !PUNCTUATION.contains(c)).flat_map(char::to_lowercase).collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

fn check_form(form: &str) -> Result<(), ConstraintError> {
    let reason = if form.is_empty() {
        Some("empty")
    } else if form.chars().any(char::is_whitespace) {
        Some("contains whitespace")
    } else if form.chars().any(char::is_uppercase) {
        Some("not lowercase")
    } else if form.chars().any(|c| PUNCTUATION.contains(&c)) {
        Some("contains punctuation that is stripped before matching")
    } else {
        None
    };
    match reason {
        Some(reason) => Err(ConstraintError::InvalidForm { form: form.to_owned(), reason }),
        None => Ok(()),
    }
}

/// Keyword to surface-form table. The keyword itself is always the first form.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, Vec<String>>", into = "BTreeMap<String, Vec<String>>")]
pub struct InflectionLexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl InflectionLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces an entry. The keyword is prepended to its forms when
    /// missing and duplicates are dropped, keeping first occurrences.
    pub fn insert<I, S>(&mut self, keyword: &str, forms: I) -> Result<(), ConstraintError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        check_form(keyword)?;
        let mut seen = HashSet::new();
        let mut list = vec![keyword.to_owned()];
        seen.insert(keyword.to_owned());
        for form in forms {
            let form = form.as_ref();
            check_form(form)?;
            if seen.insert(form.to_owned()) {
                list.push(form.to_owned());
            }
        }
        self.entries.insert(keyword.to_owned(), list);
        Ok(())
    }

    pub fn get(&self, keyword: &str) -> Option<&[String]> {
        self.entries.get(keyword).map(Vec::as_slice)
    }

    /// Lexicon forms, or the suffix fallback for unknown keywords.
    pub fn forms_or_fallback(&self, keyword: &str) -> Vec<String> {
        match self.get(keyword) {
            Some(forms) => forms.to_vec(),
            None => fallback_forms(keyword),
        }
    }

    pub fn keywords(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Copy of this lexicon with `overrides` replacing matching entries.
    pub fn with_overrides(&self, overrides: &BTreeMap<String, Vec<String>>) -> Result<Self, ConstraintError> {
        let mut out = self.clone();
        for (keyword, forms) in overrides {
            out.insert(keyword, forms)?;
        }
        Ok(out)
    }

    pub fn from_json_str(json: &str) -> Result<Self, ConstraintError> {
        serde_json::from_str(json).map_err(|e| ConstraintError::Lexicon(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConstraintError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| ConstraintError::Lexicon(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| ConstraintError::Lexicon(format!("{}: {e}", path.display())))
    }
}

impl TryFrom<BTreeMap<String, Vec<String>>> for InflectionLexicon {
    type Error = ConstraintError;

    fn try_from(map: BTreeMap<String, Vec<String>>) -> Result<Self, Self::Error> {
        let mut lex = Self::new();
        for (keyword, forms) in &map {
            lex.insert(keyword, forms)?;
        }
        Ok(lex)
    }
}

impl From<InflectionLexicon> for BTreeMap<String, Vec<String>> {
    fn from(lex: InflectionLexicon) -> Self {
        lex.entries
    }
}

/// `{w, ws, wes, wed, wing}` for keywords missing from the lexicon.
pub fn fallback_forms(keyword: &str) -> Vec<String> {
    ["", "s", "es", "ed", "ing"].iter().map(|suffix| format!("{keyword}{suffix}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Require,
    Forbid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Literal {
    pub keyword: String,
    pub polarity: Polarity,
    pub forms: Vec<String>,
}

/// A disjunction of literals sharing one polarity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    pub literals: Vec<Literal>,
}

impl Clause {
    pub fn polarity(&self) -> Polarity {
        self.literals.first().map_or(Polarity::Require, |l| l.polarity)
    }

    pub fn is_positive(&self) -> bool {
        self.polarity() == Polarity::Require
    }

    /// All surface forms, literal by literal.
    pub fn forms(&self) -> impl Iterator<Item = &str> {
        self.literals.iter().flat_map(|l| l.forms.iter().map(String::as_str))
    }

    pub fn len(&self) -> usize {
        self.literals.iter().map(|l| l.forms.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Conjunction of clauses with a form -> clause index for incremental checks.
#[derive(Debug, Clone)]
pub struct CnfConstraint {
    clauses: Vec<Clause>,
    index: HashMap<String, Vec<usize>>,
}

impl PartialEq for CnfConstraint {
    fn eq(&self, other: &Self) -> bool {
        self.clauses == other.clauses
    }
}

impl Eq for CnfConstraint {}

impl CnfConstraint {
    pub fn new(clauses: Vec<Clause>) -> Result<Self, ConstraintError> {
        if clauses.is_empty() {
            return Err(ConstraintError::NoClauses);
        }
        let mut index: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, clause) in clauses.iter().enumerate() {
            if clause.literals.is_empty() || clause.literals.iter().any(|l| l.forms.is_empty()) {
                return Err(ConstraintError::EmptyClause { clause: i });
            }
            let polarity = clause.polarity();
            if clause.literals.iter().any(|l| l.polarity != polarity) {
                return Err(ConstraintError::MixedPolarity { clause: i });
            }
            let mut seen = HashSet::new();
            for form in clause.forms() {
                check_form(form)?;
                if !seen.insert(form) {
                    return Err(ConstraintError::DuplicateForm { clause: i, form: form.to_owned() });
                }
                index.entry(form.to_owned()).or_default().push(i);
            }
        }
        Ok(Self { clauses, index })
    }

    /// Parses the constraint DSL, e.g. `(dog|dogs)&(run|ran)&!(cat|cats)`.
    pub fn parse(spec: &str) -> Result<Self, ConstraintError> {
        Parser { src: spec, pos: 0 }.constraint()
    }

    /// One positive clause per keyword holding that keyword's lexicon forms.
    pub fn from_keywords<S: AsRef<str>>(keywords: &[S], lexicon: &InflectionLexicon) -> Result<Self, ConstraintError> {
        if keywords.is_empty() {
            return Err(ConstraintError::NoKeywords);
        }
        let clauses = keywords
            .iter()
            .map(|k| {
                let keyword = k.as_ref().to_lowercase();
                let forms = lexicon.forms_or_fallback(&keyword);
                Clause { literals: vec![Literal { keyword, polarity: Polarity::Require, forms }] }
            })
            .collect();
        Self::new(clauses)
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn num_positive(&self) -> usize {
        self.clauses.iter().filter(|c| c.is_positive()).count()
    }

    pub fn num_forbid(&self) -> usize {
        self.clauses.len() - self.num_positive()
    }

    /// Clause indices containing `form` (already normalized).
    pub fn clauses_with_form(&self, form: &str) -> &[usize] {
        self.index.get(form).map_or(&[], Vec::as_slice)
    }

    /// True when `word` is a form of some forbid clause.
    pub fn is_forbidden(&self, word: &str) -> bool {
        self.clauses_with_form(word).iter().any(|&i| !self.clauses[i].is_positive())
    }

    /// State before any word has been seen.
    pub fn initial_state(&self) -> SatisfactionState {
        let polarity: Vec<Polarity> = self.clauses.iter().map(Clause::polarity).collect();
        let clause_status = polarity
            .iter()
            .map(|p| match p {
                Polarity::Require => ClauseStatus::Unmet,
                Polarity::Forbid => ClauseStatus::Met,
            })
            .collect();
        SatisfactionState { clause_status, matched_forms: vec![None; self.clauses.len()], polarity }
    }

    pub fn evaluate<S: AsRef<str>>(&self, words: &[S]) -> SatisfactionState {
        let mut state = self.initial_state();
        for w in words {
            state.push(self, w.as_ref());
        }
        state
    }

    /// Splits `text` with [`words`] and evaluates it.
    pub fn evaluate_text(&self, text: &str) -> SatisfactionState {
        self.evaluate(&words(text))
    }

    pub fn advance(&self, state: &SatisfactionState, next_word: &str) -> SatisfactionState {
        let mut next = state.clone();
        next.push(self, next_word);
        next
    }
}

impl fmt::Display for CnfConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, clause) in self.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str("&")?;
            }
            if !clause.is_positive() {
                f.write_str("!")?;
            }
            f.write_str("(")?;
            for (j, form) in clause.forms().enumerate() {
                if j > 0 {
                    f.write_str("|")?;
                }
                f.write_str(form)?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for CnfConstraint {
    type Err = ConstraintError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, ConstraintError> {
        Err(ConstraintError::Parse { offset, message: message.into() })
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) {
        if let Some(c) = self.peek() {
            self.pos += c.len_utf8();
        }
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn constraint(mut self) -> Result<CnfConstraint, ConstraintError> {
        if self.src.trim().is_empty() {
            return self.err(0, "empty constraint");
        }
        let mut clauses = Vec::new();
        loop {
            self.skip_ws();
            clauses.push(self.clause(clauses.len())?);
            self.skip_ws();
            match self.peek() {
                None => break,
                Some('&') => {
                    self.bump();
                    self.skip_ws();
                    if self.peek().is_none() {
                        return self.err(self.pos, "expected clause after '&'");
                    }
                }
                Some(')') => return self.err(self.pos, "unbalanced parentheses: unmatched ')'"),
                Some(c) => return self.err(self.pos, format!("unexpected character {c:?}")),
            }
        }
        CnfConstraint::new(clauses)
    }

    fn clause(&mut self, index: usize) -> Result<Clause, ConstraintError> {
        let polarity = if self.peek() == Some('!') {
            self.bump();
            self.skip_ws();
            Polarity::Forbid
        } else {
            Polarity::Require
        };
        let open = self.pos;
        match self.peek() {
            Some('(') => self.bump(),
            None => return self.err(self.pos, "unexpected end of input, expected '('"),
            Some(c) => return self.err(self.pos, format!("expected '(' but found {c:?}")),
        }
        let mut literals: Vec<Literal> = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(')') if literals.is_empty() => return self.err(open, "empty clause"),
                Some(')') | Some('|') => return self.err(self.pos, "empty form"),
                None => return self.err(open, "unbalanced parentheses: unclosed '('"),
                _ => {}
            }
            let start = self.pos;
            while self.peek().is_some_and(|c| !c.is_whitespace() && !"()|&!".contains(c)) {
                self.bump();
            }
            let form = &self.src[start..self.pos];
            if form.is_empty() {
                let c = self.peek().unwrap_or(' ');
                return self.err(self.pos, format!("unexpected character {c:?}"));
            }
            if form.chars().any(char::is_uppercase) {
                return self.err(start, format!("mixed-case form {form:?}"));
            }
            if let Err(ConstraintError::InvalidForm { reason, .. }) = check_form(form) {
                return self.err(start, format!("invalid form {form:?}: {reason}"));
            }
            if literals.iter().any(|l| l.keyword == form) {
                return self.err(start, format!("duplicate form {form:?} in clause {index}"));
            }
            literals.push(Literal { keyword: form.to_owned(), polarity, forms: vec![form.to_owned()] });
            self.skip_ws();
            match self.peek() {
                Some('|') => self.bump(),
                Some(')') => {
                    self.bump();
                    return Ok(Clause { literals });
                }
                None => return self.err(open, "unbalanced parentheses: unclosed '('"),
                Some(c) => return self.err(self.pos, format!("unexpected character {c:?}")),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClauseStatus {
    Unmet,
    Met,
    Violated,
}

/// Per-clause satisfaction of a word sequence.
///
/// `matched_forms[i]` is the first form that decided clause `i`: the
/// satisfying form of a met positive clause, or the offending form of a
/// violated forbid clause.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SatisfactionState {
    pub clause_status: Vec<ClauseStatus>,
    pub matched_forms: Vec<Option<String>>,
    polarity: Vec<Polarity>,
}

impl SatisfactionState {
    /// Feeds one word (normalized here) into the state.
    pub fn push(&mut self, c: &CnfConstraint, word: &str) {
        for piece in words(word) {
            for &i in c.clauses_with_form(&piece) {
                match (self.polarity[i], self.clause_status[i]) {
                    (Polarity::Require, ClauseStatus::Unmet) => {
                        self.clause_status[i] = ClauseStatus::Met;
                        self.matched_forms[i] = Some(piece.clone());
                    }
                    (Polarity::Forbid, ClauseStatus::Met) => {
                        self.clause_status[i] = ClauseStatus::Violated;
                        self.matched_forms[i] = Some(piece.clone());
                    }
                    _ => {}
                }
            }
        }
    }

    pub fn polarity(&self, clause: usize) -> Polarity {
        self.polarity[clause]
    }

    pub fn num_positive(&self) -> usize {
        self.polarity.iter().filter(|p| **p == Polarity::Require).count()
    }

    pub fn met_positive(&self) -> usize {
        self.polarity
            .iter()
            .zip(&self.clause_status)
            .filter(|(p, s)| **p == Polarity::Require && **s == ClauseStatus::Met)
            .count()
    }

    /// Indices of positive clauses that are still unmet, in clause order.
    pub fn unmet_positive(&self) -> Vec<usize> {
        (0..self.clause_status.len()).filter(|&i| self.clause_status[i] == ClauseStatus::Unmet).collect()
    }

    pub fn violated_forbid(&self) -> Vec<usize> {
        (0..self.clause_status.len()).filter(|&i| self.clause_status[i] == ClauseStatus::Violated).collect()
    }

    pub fn has_violation(&self) -> bool {
        self.clause_status.contains(&ClauseStatus::Violated)
    }

    /// Met positive clauses over positive clauses; 1.0 when there are none.
    pub fn coverage(&self) -> f64 {
        let total = self.num_positive();
        if total == 0 {
            1.0
        } else {
            self.met_positive() as f64 / total as f64
        }
    }

    pub fn is_satisfied(&self) -> bool {
        self.clause_status.iter().all(|s| *s == ClauseStatus::Met)
    }
}

/// Free-function form of [`CnfConstraint::evaluate`].
pub fn evaluate<S: AsRef<str>>(words: &[S], c: &CnfConstraint) -> SatisfactionState {
    c.evaluate(words)
}

/// Free-function form of [`CnfConstraint::advance`].
pub fn advance(state: &SatisfactionState, next_word: &str, c: &CnfConstraint) -> SatisfactionState {
    c.advance(state, next_word)
}

pub fn coverage(state: &SatisfactionState) -> f64 {
    state.coverage()
}

pub fn is_satisfied(state: &SatisfactionState) -> bool {
    state.is_satisfied()
}
