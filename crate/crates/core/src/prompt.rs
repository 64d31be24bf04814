//! Prompt construction: ABS and CNF keyword prompts with in-context shots,
//! and ontology-grounded query rewriting.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::constraints::{words, Clause, CnfConstraint, ConstraintError, InflectionLexicon};
use crate::ontology::{detect_mentions, Gazetteer, Ontology};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("shot sentence {sentence:?} does not use every keyword of {keywords:?}")]
    UnsatisfiedShot { keywords: Vec<String>, sentence: String },
    #[error("constraint has no required clause to prompt for")]
    NoPositiveClause,
    #[error("{path}:{line}: {message}")]
    ShotFile { path: String, line: usize, message: String },
}

/// An in-context example whose sentence uses all of its keywords.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotExample {
    pub keywords: Vec<String>,
    pub sentence: String,
    constraint: CnfConstraint,
}

impl ShotExample {
    pub fn new<S: AsRef<str>>(
        keywords: &[S],
        sentence: &str,
        lexicon: &InflectionLexicon,
    ) -> Result<Self, PromptError> {
        let keywords: Vec<String> = keywords.iter().map(|k| k.as_ref().to_lowercase()).collect();
        let constraint = CnfConstraint::from_keywords(&keywords, lexicon)?;
        if !constraint.evaluate_text(sentence).is_satisfied() {
            return Err(PromptError::UnsatisfiedShot { keywords, sentence: sentence.to_owned() });
        }
        Ok(ShotExample { keywords, sentence: sentence.to_owned(), constraint })
    }

    pub fn constraint(&self) -> &CnfConstraint {
        &self.constraint
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ShotLine {
    keywords: Vec<String>,
    sentence: String,
}

/// Parses JSONL shots `{"keywords": [...], "sentence": "..."}`; blank lines
/// are skipped.
pub fn parse_shots(text: &str, lexicon: &InflectionLexicon, origin: &str) -> Result<Vec<ShotExample>, PromptError> {
    let mut shots = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| PromptError::ShotFile { path: origin.to_owned(), line: i + 1, message };
        let raw: ShotLine = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        shots.push(ShotExample::new(&raw.keywords, &raw.sentence, lexicon).map_err(|e| err(e.to_string()))?);
    }
    Ok(shots)
}

pub fn load_shots(path: impl AsRef<Path>, lexicon: &InflectionLexicon) -> Result<Vec<ShotExample>, PromptError> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| PromptError::ShotFile {
        path: origin.clone(),
        line: 0,
        message: e.to_string(),
    })?;
    parse_shots(&text, lexicon, &origin)
}

/// `Given a set of words {x}, write a sentence using all words in {x} or
/// inflections of {x}.` followed by shot blocks and the query block.
pub fn build_abs<S: AsRef<str>>(keywords: &[S], shots: &[ShotExample]) -> String {
    let x = keywords.iter().map(|k| k.as_ref()).collect::<Vec<_>>().join(", ");
    let mut out = format!(
        "Given a set of words {{{x}}}, write a sentence using all words in {{{x}}} or inflections of {{{x}}}.\n"
    );
    for shot in shots {
        out.push_str(&format!("Words: {}\nSentence: {}\n", shot.keywords.join(", "), shot.sentence));
    }
    out.push_str(&format!("Words: {x}\nSentence:"));
    out
}

fn clause_text(clause: &Clause) -> String {
    format!("({})", clause.forms().collect::<Vec<_>>().join(" or "))
}

/// Renders the constraint with `or` inside clauses and `and` between them;
/// forbid clauses become `and do not use (...)`.
pub fn constraint_text(c: &CnfConstraint) -> String {
    let positive: Vec<String> = c.clauses().iter().filter(|k| k.is_positive()).map(clause_text).collect();
    let mut out = positive.join(" and ");
    for k in c.clauses().iter().filter(|k| !k.is_positive()) {
        out.push_str(" and do not use ");
        out.push_str(&clause_text(k));
    }
    out
}

/// `Write a sentence using the words (dog or dogs) and (run or running)`,
/// then shot blocks and the query block.
pub fn build_cnf(c: &CnfConstraint, shots: &[ShotExample]) -> Result<String, PromptError> {
    if c.num_positive() == 0 {
        return Err(PromptError::NoPositiveClause);
    }
    let text = constraint_text(c);
    let mut out = format!("Write a sentence using the words {text}\n");
    for shot in shots {
        out.push_str(&format!("Words: {}\nSentence: {}\n", constraint_text(shot.constraint()), shot.sentence));
    }
    out.push_str(&format!("Words: {text}\nSentence:"));
    Ok(out)
}

/// Prefixes `question` with numbered facts about the referents it mentions.
/// Questions without gazetteer mentions (or without relevant facts) are
/// returned unchanged.
pub fn rewrite_query(question: &str, o: &Ontology, g: &Gazetteer) -> String {
    let mentions = detect_mentions(&words(question), g);
    let focus: BTreeSet<String> = mentions.iter().flat_map(|m| m.candidates.iter().map(|(r, _)| r.clone())).collect();
    let facts = o.constraints_to_text(&focus);
    if facts.is_empty() {
        return question.to_owned();
    }
    let mut out = String::from("Step-by-step facts:\n");
    for (i, f) in facts.iter().enumerate() {
        out.push_str(&format!("{}. {f}\n", i + 1));
    }
    out.push_str(question);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::Axiom;

    fn lexicon() -> InflectionLexicon {
        let mut lex = InflectionLexicon::new();
        lex.insert("dog", ["dog", "dogs"]).unwrap();
        lex.insert("run", ["run", "running", "runs", "ran"]).unwrap();
        lex.insert("field", ["field", "fields"]).unwrap();
        lex
    }

    #[test]
    fn abs_zero_shot() {
        let p = build_abs(&["dog", "run", "field"], &[]);
        assert_eq!(
            p,
            "Given a set of words {dog, run, field}, write a sentence using all words in {dog, run, field} \
             or inflections of {dog, run, field}.\nWords: dog, run, field\nSentence:"
        );
    }

    #[test]
    fn abs_two_shots() {
        let lex = lexicon();
        let shots = vec![
            ShotExample::new(&["dog"], "The dogs bark.", &lex).unwrap(),
            ShotExample::new(&["field", "run"], "Kids ran across the field.", &lex).unwrap(),
        ];
        let p = build_abs(&["dog", "run"], &shots);
        assert_eq!(p.matches("Sentence:").count(), 3);
        assert!(p.contains("Words: field, run\nSentence: Kids ran across the field.\n"));
    }

    #[test]
    fn bad_shot_rejected() {
        let err = ShotExample::new(&["dog", "field"], "The dog sleeps.", &lexicon()).unwrap_err();
        assert!(matches!(err, PromptError::UnsatisfiedShot { .. }));
    }

    #[test]
    fn cnf_prompt() {
        let c = CnfConstraint::from_keywords(&["dog", "run", "field"], &lexicon()).unwrap();
        let p = build_cnf(&c, &[]).unwrap();
        assert!(p.starts_with(
            "Write a sentence using the words (dog or dogs) and (run or running or runs or ran) and (field or fields)\n"
        ));
        let single = build_cnf(&CnfConstraint::parse("(dog|dogs)").unwrap(), &[]).unwrap();
        assert!(!single.contains(" and "));
        let forbid = build_cnf(&CnfConstraint::parse("(dog)&!(cat|cats)").unwrap(), &[]).unwrap();
        assert!(forbid.contains("(dog) and do not use (cat or cats)"));
        assert!(build_cnf(&CnfConstraint::parse("!(cat)").unwrap(), &[]).is_err());
    }

    #[test]
    fn shot_file_errors_carry_line() {
        let text = "{\"keywords\":[\"dog\"],\"sentence\":\"a dog\"}\n\n{\"keywords\":[\"dog\"]}\n";
        let err = parse_shots(text, &lexicon(), "shots.jsonl").unwrap_err();
        assert!(matches!(err, PromptError::ShotFile { line: 3, .. }));
    }

    #[test]
    fn rewrite_with_facts() {
        let o =
            Ontology::from_axioms([Axiom::member("obama", "President"), Axiom::sub("President", "Person")]).unwrap();
        let g = Gazetteer::from_json_str(r#"{"obama": [["obama", 1.0]]}"#).unwrap();
        let q = "Which party does obama belong to?";
        assert_eq!(
            rewrite_query(q, &o, &g),
            "Step-by-step facts:\n1. obama is a President.\n2. Every President is a Person.\nWhich party does obama belong to?"
        );
        assert_eq!(rewrite_query("What is the capital?", &o, &g), "What is the capital?");
    }
}
