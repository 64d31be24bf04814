use std::collections::{BTreeSet, HashMap};

use super::{LmBackend, LmError, TokenId};
use crate::constraints::words;

pub const EOS_TOKEN: &str = "</s>";

/// What [`NgramLm::tokenize`] does with words outside the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovPolicy {
    #[default]
    Strict,
    /// Drop unknown words and log them.
    Lenient,
}

/// Word-level n-gram model with add-λ smoothing.
///
/// `P(t | ctx) = (count(ctx, t) + λ) / (count(ctx) + λ|V|)` where the context
/// is the previous `order - 1` tokens (bos-padded) and `|V|` counts every
/// token except bos. A context never seen in training gives the uniform row.
/// The vocabulary is the sorted corpus words followed by eos; bos has id
/// `|V|` and never appears in a row.
#[derive(Debug, Clone)]
pub struct NgramLm {
    order: usize,
    lambda: f64,
    vocab: Vec<String>,
    ids: HashMap<String, TokenId>,
    counts: HashMap<Vec<TokenId>, (u64, HashMap<TokenId, u64>)>,
    oov: OovPolicy,
}

/// Counts bos-padded n-grams over `corpus`, one eos per sentence.
pub fn build_ngram<S: AsRef<str>>(corpus: &[S], order: usize, lambda: f64) -> Result<NgramLm, LmError> {
    NgramLm::build(corpus, order, lambda)
}

impl NgramLm {
    pub fn build<S: AsRef<str>>(corpus: &[S], order: usize, lambda: f64) -> Result<Self, LmError> {
        if order == 0 {
            return Err(LmError::Config("n-gram order must be at least 1".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(LmError::Config(format!("smoothing λ must be finite and ≥ 0, got {lambda}")));
        }
        let sentences: Vec<Vec<String>> = corpus
            .iter()
            .map(|s| words(s.as_ref()).into_iter().filter(|w| w != EOS_TOKEN).collect::<Vec<_>>())
            .filter(|ws| !ws.is_empty())
            .collect();
        if sentences.is_empty() {
            return Err(LmError::Config("corpus is empty".into()));
        }
        let distinct: BTreeSet<&String> = sentences.iter().flatten().collect();
        let mut vocab: Vec<String> = distinct.into_iter().cloned().collect();
        vocab.push(EOS_TOKEN.to_owned());
        let ids: HashMap<String, TokenId> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as TokenId)).collect();
        let eos = (vocab.len() - 1) as TokenId;
        let bos = vocab.len() as TokenId;

        let mut counts: HashMap<Vec<TokenId>, (u64, HashMap<TokenId, u64>)> = HashMap::new();
        for sentence in &sentences {
            let mut seq = vec![bos; order - 1];
            seq.extend(sentence.iter().map(|w| ids[w]));
            seq.push(eos);
            for i in (order - 1)..seq.len() {
                let ctx = seq[i + 1 - order..i].to_vec();
                let entry = counts.entry(ctx).or_default();
                entry.0 += 1;
                *entry.1.entry(seq[i]).or_default() += 1;
            }
        }
        Ok(NgramLm { order, lambda, vocab, ids, counts, oov: OovPolicy::Strict })
    }

    pub fn with_oov_policy(mut self, oov: OovPolicy) -> Self {
        self.oov = oov;
        self
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.ids.get(word).copied()
    }

    fn context(&self, prefix: &[TokenId]) -> Vec<TokenId> {
        let bos = self.bos();
        let k = self.order - 1;
        let mut ctx: Vec<TokenId> = prefix.iter().rev().take(k).copied().collect();
        ctx.resize(k, bos);
        ctx.reverse();
        ctx
    }

    /// Probability row (not log) for `prefix`.
    pub fn probabilities(&self, prefix: &[TokenId]) -> Result<Vec<f64>, LmError> {
        let v = self.vocab.len();
        if let Some(&bad) = prefix.iter().find(|&&t| t as usize > v) {
            return Err(LmError::InvalidToken(bad));
        }
        let ctx = self.context(prefix);
        let uniform = vec![1.0 / v as f64; v];
        let Some((total, row)) = self.counts.get(&ctx) else {
            return Ok(uniform);
        };
        let denom = *total as f64 + self.lambda * v as f64;
        let mut probs = vec![self.lambda / denom; v];
        for (&t, &c) in row {
            probs[t as usize] = (c as f64 + self.lambda) / denom;
        }
        Ok(probs)
    }

    /// Tokenizes and also returns the words that were dropped as unknown.
    pub fn tokenize_lenient(&self, text: &str) -> (Vec<TokenId>, Vec<String>) {
        let mut ids = Vec::new();
        let mut skipped = Vec::new();
        for w in words(text) {
            match self.ids.get(&w) {
                Some(&id) => ids.push(id),
                None => skipped.push(w),
            }
        }
        (ids, skipped)
    }
}

impl LmBackend for NgramLm {
    fn vocab(&self) -> &[String] {
        &self.vocab
    }

    fn bos(&self) -> TokenId {
        self.vocab.len() as TokenId
    }

    fn eos(&self) -> TokenId {
        (self.vocab.len() - 1) as TokenId
    }

    fn next_logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, LmError> {
        Ok(self.probabilities(prefix)?.into_iter().map(f64::ln).collect())
    }

    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, LmError> {
        let (ids, skipped) = self.tokenize_lenient(text);
        match (self.oov, skipped.first()) {
            (_, None) => Ok(ids),
            (OovPolicy::Strict, Some(w)) => Err(LmError::OutOfVocabulary(w.clone())),
            (OovPolicy::Lenient, Some(_)) => {
                log::warn!("dropped out-of-vocabulary words: {}", skipped.join(" "));
                Ok(ids)
            }
        }
    }

    fn detokenize(&self, ids: &[TokenId]) -> Result<String, LmError> {
        let (bos, eos) = (self.bos(), self.eos());
        let mut out = Vec::with_capacity(ids.len());
        for &t in ids {
            if t == bos || t == eos {
                continue;
            }
            out.push(self.vocab.get(t as usize).ok_or(LmError::InvalidToken(t))?.as_str());
        }
        Ok(out.join(" "))
    }
}
