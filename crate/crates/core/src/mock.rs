//! Synthetic CommonGen-style world: a small inflected vocabulary, a template
//! corpus for training n-gram models, keyword datasets and shots, plus the
//! toy ontology and a matching gazetteer.
//!
//! Everything is a pure function of the seed.

use std::io;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::InflectionLexicon;
use crate::eval::DatasetRow;
use crate::geometry::toy_ontology;
use crate::lm::{LmError, NgramLm};
use crate::ontology::Gazetteer;

pub const AGENTS: &[(&str, &str)] = &[
    ("dog", "dogs"),
    ("cat", "cats"),
    ("child", "children"),
    ("man", "men"),
    ("woman", "women"),
    ("bird", "birds"),
    ("horse", "horses"),
    ("boy", "boys"),
    ("girl", "girls"),
    ("farmer", "farmers"),
];

pub const THINGS: &[(&str, &str)] = &[
    ("ball", "balls"),
    ("field", "fields"),
    ("tree", "trees"),
    ("river", "rivers"),
    ("park", "parks"),
    ("car", "cars"),
    ("fence", "fences"),
    ("book", "books"),
    ("boat", "boats"),
    ("garden", "gardens"),
    ("street", "streets"),
    ("table", "tables"),
    ("dish", "dishes"),
    ("box", "boxes"),
];

/// base, third person singular, past, progressive
pub const VERBS: &[[&str; 4]] = &[
    ["run", "runs", "ran", "running"],
    ["jump", "jumps", "jumped", "jumping"],
    ["throw", "throws", "threw", "throwing"],
    ["catch", "catches", "caught", "catching"],
    ["walk", "walks", "walked", "walking"],
    ["sit", "sits", "sat", "sitting"],
    ["play", "plays", "played", "playing"],
    ["read", "reads", "read", "reading"],
    ["ride", "rides", "rode", "riding"],
    ["climb", "climbs", "climbed", "climbing"],
    ["swim", "swims", "swam", "swimming"],
    ["eat", "eats", "ate", "eating"],
    ["wash", "washes", "washed", "washing"],
    ["carry", "carries", "carried", "carrying"],
    ["watch", "watches", "watched", "watching"],
];

const ADJECTIVES: &[&str] = &["big", "small", "red", "happy", "old", "young", "little", "quiet"];
const PREPOSITIONS: &[&str] = &["near", "in", "on", "across", "by", "under", "over", "behind"];

fn nouns() -> impl Iterator<Item = &'static (&'static str, &'static str)> {
    AGENTS.iter().chain(THINGS)
}

/// Every keyword with its inflections, keyword first.
pub fn lexicon() -> InflectionLexicon {
    let mut lex = InflectionLexicon::new();
    for (s, p) in nouns() {
        lex.insert(s, [*s, *p]).expect("noun forms are valid");
    }
    for v in VERBS {
        let mut forms: Vec<&str> = Vec::new();
        for f in v {
            if !forms.contains(f) {
                forms.push(f);
            }
        }
        lex.insert(v[0], forms).expect("verb forms are valid");
    }
    lex
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    xs.choose(rng).expect("non-empty word list")
}

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let (s, sp) = *pick(rng, AGENTS);
    let (s2, _) = *pick(rng, AGENTS);
    let (o, op) = *pick(rng, THINGS);
    let (o2, _) = *pick(rng, THINGS);
    let v = pick(rng, VERBS);
    let v2 = pick(rng, VERBS);
    let adj = pick(rng, ADJECTIVES);
    let prep = pick(rng, PREPOSITIONS);
    match rng.random_range(0..7) {
        0 => format!("the {adj} {s} {} the {o} {prep} the {o2}", v[1]),
        1 => format!("a {s} is {} {prep} the {o}", v[3]),
        2 => format!("{sp} {} the {op} {prep} the {o2}", v[2]),
        3 => format!("the {s} {} and {} {prep} the {o}", v[2], v2[2]),
        4 => format!("{sp} are {} with the {o}", v[3]),
        5 => format!("the {s} and the {s2} {} {prep} the {o}", v[0]),
        _ => format!("the {s} {} the {adj} {o}", v[1]),
    }
}

/// `n` template sentences.
pub fn corpus(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<String> = (0..n).map(|_| sentence(&mut rng)).collect();
    // Every form appears at least once so the vocabulary is closed under the lexicon.
    for (s, p) in nouns() {
        out.push(format!("the {s} is near the {p}"));
    }
    for v in VERBS {
        out.push(format!("the dog {} and {} while {} to {}", v[1], v[2], v[3], v[0]));
    }
    out
}

/// Trigram model over [`corpus`] with light smoothing.
pub fn ngram(seed: u64) -> Result<NgramLm, LmError> {
    NgramLm::build(&corpus(3000, seed), 3, 0.01)
}

fn keyword_set(rng: &mut ChaCha8Rng) -> (Vec<&'static str>, Vec<&'static [&'static str; 4]>) {
    let k = rng.random_range(3..=5);
    let n_verbs = rng.random_range(1..k);
    let mut ns: Vec<&'static str> = nouns().map(|(s, _)| *s).collect();
    ns.shuffle(rng);
    ns.truncate(k - n_verbs);
    let mut vs: Vec<&'static [&'static str; 4]> = VERBS.iter().collect();
    vs.shuffle(rng);
    vs.truncate(n_verbs);
    (ns, vs)
}

/// A sentence using every noun and verb of the set.
fn reference(rng: &mut ChaCha8Rng, nouns: &[&str], verbs: &[&[&'static str; 4]]) -> String {
    let past = rng.random_bool(0.5);
    let form = |v: &[&'static str; 4]| -> &'static str {
        if past {
            v[2]
        } else {
            v[1]
        }
    };
    let mut out = format!("the {} {}", pick(rng, ADJECTIVES), nouns[0]);
    let vs: Vec<&str> = verbs.iter().map(|v| form(v)).collect();
    out.push(' ');
    out.push_str(&vs.join(" and "));
    let mut rest = nouns[1..].iter();
    if let Some(o) = rest.next() {
        out.push_str(&format!(" the {o}"));
    }
    for n in rest {
        out.push_str(&format!(" {} the {n}", pick(rng, PREPOSITIONS)));
    }
    out
}

/// `n` rows of 3 to 5 keywords (at least one noun and one verb) with two
/// references each.
pub fn dataset(n: usize, seed: u64) -> Vec<DatasetRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (ns, vs) = keyword_set(&mut rng);
            let mut concept_set: Vec<String> =
                ns.iter().chain(vs.iter().map(|v| &v[0])).map(|s| s.to_string()).collect();
            concept_set.shuffle(&mut rng);
            let references = (0..2).map(|_| reference(&mut rng, &ns, &vs)).collect();
            DatasetRow { concept_set, references, inflections: None }
        })
        .collect()
}

/// Gazetteer for the toy ontology.
pub fn gazetteer() -> Gazetteer {
    Gazetteer::from_json_str(
        r#"{
            "obama": [["obama", 1.0]],
            "barack obama": [["obama", 1.0]],
            "bernie": [["bernie", 1.0]],
            "bernie sanders": [["bernie", 1.0]],
            "senator": [["bernie", 0.6], ["obama", 0.3]],
            "president": [["President", 1.0]],
            "democrat": [["Democrat", 1.0]],
            "person": [["Person", 1.0]]
        }"#,
    )
    .expect("gazetteer literal is valid")
}

/// Writes corpus, lexicon, dataset, shots, ontology and gazetteer files.
pub fn write_data_dir(dir: &Path, rows: usize, seed: u64) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("corpus.txt"), corpus(3000, seed).join("\n") + "\n")?;
    let lex = serde_json::to_string_pretty(&lexicon()).map_err(io::Error::other)?;
    std::fs::write(dir.join("lexicon.json"), lex + "\n")?;
    let lines: Vec<String> =
        dataset(rows, seed.wrapping_add(1)).iter().map(|r| serde_json::to_string(r).expect("row serialize")).collect();
    std::fs::write(dir.join("dataset.jsonl"), lines.join("\n") + "\n")?;
    let shots: Vec<String> = dataset(4, seed.wrapping_add(2))
        .iter()
        .map(|r| serde_json::json!({"keywords": r.concept_set, "sentence": r.references[0]}).to_string())
        .collect();
    std::fs::write(dir.join("shots.jsonl"), shots.join("\n") + "\n")?;
    let onto = serde_json::to_string_pretty(&toy_ontology()).map_err(io::Error::other)?;
    std::fs::write(dir.join("ontology.json"), onto + "\n")?;
    let gaz = serde_json::to_string_pretty(&gazetteer()).map_err(io::Error::other)?;
    std::fs::write(dir.join("gazetteer.json"), gaz + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::CnfConstraint;
    use crate::lm::LmBackend;

    #[test]
    fn references_satisfy_their_rows() {
        let lex = lexicon();
        for row in dataset(100, 5) {
            assert!((3..=5).contains(&row.concept_set.len()));
            let c = CnfConstraint::from_keywords(&row.concept_set, &lex).unwrap();
            for r in &row.references {
                assert!(c.evaluate_text(r).is_satisfied(), "{r} vs {:?}", row.concept_set);
            }
        }
    }

    #[test]
    fn vocabulary_covers_lexicon() {
        let lm = ngram(0).unwrap();
        let lex = lexicon();
        for k in lex.keywords() {
            for f in lex.get(k).unwrap() {
                assert!(lm.id(f).is_some(), "{f}");
            }
        }
        assert!(lm.vocab_size() < 200);
    }

    #[test]
    fn seeded() {
        assert_eq!(dataset(5, 1), dataset(5, 1));
        assert_eq!(corpus(10, 2), corpus(10, 2));
    }
}
