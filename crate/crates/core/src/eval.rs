//! CommonGen-style datasets, generation metrics and suite reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{words, CnfConstraint, ConstraintError, InflectionLexicon};
use crate::par;

pub const MIN_CONCEPTS: usize = 3;
pub const MAX_CONCEPTS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{path}: {0}", path = .1)]
    Io(String, String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("{path}: {}", problems.iter().map(|(l, m)| format!("line {l}: {m}")).collect::<Vec<_>>().join("; "))]
    Dataset { path: String, problems: Vec<(usize, String)> },
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure with recall weight `beta`, best over references, 0–100.
pub fn rouge_l_beta<S: AsRef<str>>(candidate: &str, references: &[S], beta: f64) -> f64 {
    let cand = words(candidate);
    if cand.is_empty() {
        return 0.0;
    }
    let b2 = beta * beta;
    references
        .iter()
        .map(|r| {
            let r = words(r.as_ref());
            if r.is_empty() {
                return 0.0;
            }
            let l = lcs(&cand, &r) as f64;
            let p = l / cand.len() as f64;
            let rec = l / r.len() as f64;
            if p + rec == 0.0 {
                0.0
            } else {
                (1.0 + b2) * p * rec / (rec + b2 * p)
            }
        })
        .fold(0.0, f64::max)
        * 100.0
}

/// ROUGE-L F1 (`beta = 1`).
pub fn rouge_l<S: AsRef<str>>(candidate: &str, references: &[S]) -> f64 {
    rouge_l_beta(candidate, references, 1.0)
}

fn ngram_counts(ws: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    for g in ws.windows(n) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

/// Sentence BLEU up to 4-grams, 0–100.
///
/// Orders above the candidate length are dropped rather than smoothed.
/// Counts are clipped by the maximum count in any reference; the brevity
/// penalty uses the reference length closest to the candidate's (shorter
/// wins ties).
pub fn bleu_4<S: AsRef<str>>(candidate: &str, references: &[S]) -> f64 {
    let cand = words(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| words(r.as_ref())).collect();
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let orders = cand.len().min(4);
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let counts = ngram_counts(&cand, n);
        let ref_counts: Vec<HashMap<&[String], usize>> = refs.iter().map(|r| ngram_counts(r, n)).collect();
        let clipped: usize = counts
            .iter()
            .map(|(g, &c)| c.min(ref_counts.iter().map(|rc| rc.get(g).copied().unwrap_or(0)).max().unwrap_or(0)))
            .sum();
        if clipped == 0 {
            return 0.0;
        }
        let total = cand.len() + 1 - n;
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let c = cand.len() as f64;
    let r = refs.iter().map(|r| r.len()).min_by_key(|&len| (len.abs_diff(cand.len()), len)).unwrap() as f64;
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    100.0 * bp * (log_sum / orders as f64).exp()
}

/// One CommonGen-style example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRow {
    pub concept_set: Vec<String>,
    pub references: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflections: Option<BTreeMap<String, Vec<String>>>,
}

impl DatasetRow {
    fn check(&self) -> Result<(), String> {
        let n = self.concept_set.len();
        if !(MIN_CONCEPTS..=MAX_CONCEPTS).contains(&n) {
            return Err(format!("concept_set has {n} keywords, expected {MIN_CONCEPTS} to {MAX_CONCEPTS}"));
        }
        if self.references.is_empty() {
            return Err("references is empty".into());
        }
        Ok(())
    }

    /// The row's keyword constraint under `lexicon` plus its own overrides.
    pub fn constraint(&self, lexicon: &InflectionLexicon) -> Result<CnfConstraint, ConstraintError> {
        match &self.inflections {
            Some(over) => CnfConstraint::from_keywords(&self.concept_set, &lexicon.with_overrides(over)?),
            None => CnfConstraint::from_keywords(&self.concept_set, lexicon),
        }
    }
}

/// Parses JSONL rows, collecting every bad line before failing.
pub fn parse_dataset(text: &str, origin: &str) -> Result<Vec<DatasetRow>, EvalError> {
    let mut rows = Vec::new();
    let mut problems = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<DatasetRow>(line) {
            Ok(row) => match row.check() {
                Ok(()) => rows.push(row),
                Err(m) => problems.push((i + 1, m)),
            },
            Err(e) => problems.push((i + 1, e.to_string())),
        }
    }
    if !problems.is_empty() {
        return Err(EvalError::Dataset { path: origin.to_owned(), problems });
    }
    if rows.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    Ok(rows)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRow>, EvalError> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(e.to_string(), origin.clone()))?;
    parse_dataset(&text, &origin)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowResult {
    pub concept_set: Vec<String>,
    pub text: Option<String>,
    pub rouge_l: f64,
    pub bleu_4: f64,
    /// Met keyword clauses, 0–100.
    pub coverage: f64,
    /// 100 when every clause is met, else 0.
    pub satisfied: f64,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub rouge_l: f64,
    pub bleu_4: f64,
    pub cider: Option<f64>,
    pub spice: Option<f64>,
    pub coverage: f64,
    pub satisfied: f64,
    pub seconds: f64,
    pub rows: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<RowResult>,
    pub aggregate: Aggregate,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<RowResult>) -> Self {
        let ok: Vec<&RowResult> = rows.iter().filter(|r| r.error.is_none()).collect();
        let mean = |f: fn(&RowResult) -> f64| {
            if ok.is_empty() {
                0.0
            } else {
                ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
            }
        };
        let aggregate = Aggregate {
            rouge_l: mean(|r| r.rouge_l),
            bleu_4: mean(|r| r.bleu_4),
            cider: None,
            spice: None,
            coverage: mean(|r| r.coverage),
            satisfied: mean(|r| r.satisfied),
            seconds: mean(|r| r.seconds),
            rows: rows.len(),
            failures: rows.len() - ok.len(),
        };
        EvalReport { rows, aggregate }
    }

    /// Copy with every timing field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.rows {
            r.seconds = 0.0;
        }
        out.aggregate.seconds = 0.0;
        out
    }

    pub fn failure_rate(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.aggregate.failures as f64 / self.rows.len() as f64
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialize")
    }

    /// Fixed-width table: one labelled line of aggregates.
    pub fn text_table(&self, label: &str) -> String {
        let a = &self.aggregate;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<24} {:>8} {:>8} {:>9} {:>9} {:>9}",
            "Setting", "ROUGE-L", "BLEU-4", "Coverage", "Satisfied", "Time(s)"
        );
        let _ = writeln!(
            out,
            "{:<24} {:>8.2} {:>8.2} {:>9.2} {:>9.2} {:>9.4}",
            label, a.rouge_l, a.bleu_4, a.coverage, a.satisfied, a.seconds
        );
        if a.failures > 0 {
            let _ = writeln!(out, "{} of {} rows failed", a.failures, a.rows);
        }
        out
    }
}

/// Runs `pipeline` on every row (concurrently) and scores its output.
///
/// Timing covers only the pipeline call. A pipeline error marks the row as
/// failed and leaves it out of the means.
pub fn run_suite<F>(rows: &[DatasetRow], lexicon: &InflectionLexicon, pipeline: F) -> Result<EvalReport, EvalError>
where
    F: Fn(usize, &DatasetRow) -> Result<String, String> + Sync,
{
    if rows.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let constraints = rows.iter().map(|r| r.constraint(lexicon)).collect::<Result<Vec<_>, _>>()?;
    let results = par::map_range(rows.len(), |i| {
        let row = &rows[i];
        let start = Instant::now();
        let out = pipeline(i, row);
        let seconds = start.elapsed().as_secs_f64();
        match out {
            Ok(text) => {
                let state = constraints[i].evaluate_text(&text);
                RowResult {
                    concept_set: row.concept_set.clone(),
                    rouge_l: rouge_l(&text, &row.references),
                    bleu_4: bleu_4(&text, &row.references),
                    coverage: 100.0 * state.coverage(),
                    satisfied: if state.is_satisfied() { 100.0 } else { 0.0 },
                    seconds,
                    text: Some(text),
                    error: None,
                }
            }
            Err(e) => RowResult {
                concept_set: row.concept_set.clone(),
                text: None,
                rouge_l: 0.0,
                bleu_4: 0.0,
                coverage: 0.0,
                satisfied: 0.0,
                seconds,
                error: Some(e),
            },
        }
    });
    Ok(EvalReport::from_rows(results))
}
