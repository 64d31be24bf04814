//! Next-token distribution backends.
//!
//! [`LmBackend`] is the only thing decoders, the checker and repair see.
//! [`NgramLm`] is a deterministic word-level model, [`TableLm`] wraps an
//! explicit prefix -> distribution function for exhaustive tests, and
//! [`HttpLm`] talks to a remote server over the JSON wire protocol that
//! [`stub::StubServer`] also speaks.

mod http;
mod ngram;
pub mod stub;
mod table;

use std::sync::Arc;

use thiserror::Error;

pub use http::HttpLm;
pub use ngram::{build_ngram, NgramLm, OovPolicy};
pub use table::TableLm;

pub type TokenId = u32;

/// Tolerance on `logsumexp(row)` for rows received from remote servers.
pub const REMOTE_NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmError {
    #[error("transport error: {message}")]
    Transport { message: String, retryable: bool },
    #[error("server returned HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("malformed response from {endpoint}: {reason}")]
    Malformed { endpoint: &'static str, reason: String },
    #[error("word {0:?} is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("token id {0} is out of range")]
    InvalidToken(TokenId),
    #[error("{0}")]
    Config(String),
}

impl LmError {
    /// Whether repeating the same request may succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            LmError::Transport { retryable, .. } => *retryable,
            LmError::Status { code, .. } => *code >= 500 || *code == 429,
            _ => false,
        }
    }
}

/// A source of next-token log-distributions over a fixed vocabulary.
///
/// Rows returned by [`next_logprobs`](LmBackend::next_logprobs) have one
/// natural-log entry per vocabulary id and exponentiate to a distribution.
/// Implementations are read-only after construction and may be called
/// concurrently.
pub trait LmBackend: Send + Sync {
    fn vocab(&self) -> &[String];
    fn bos(&self) -> TokenId;
    fn eos(&self) -> TokenId;
    fn next_logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, LmError>;
    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, LmError>;
    fn detokenize(&self, ids: &[TokenId]) -> Result<String, LmError>;

    fn vocab_size(&self) -> usize {
        self.vocab().len()
    }

    fn token_text(&self, id: TokenId) -> Option<&str> {
        self.vocab().get(id as usize).map(String::as_str)
    }
}

impl<T: LmBackend + ?Sized> LmBackend for &T {
    fn vocab(&self) -> &[String] {
        (**self).vocab()
    }
    fn bos(&self) -> TokenId {
        (**self).bos()
    }
    fn eos(&self) -> TokenId {
        (**self).eos()
    }
    fn next_logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, LmError> {
        (**self).next_logprobs(prefix)
    }
    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, LmError> {
        (**self).tokenize(text)
    }
    fn detokenize(&self, ids: &[TokenId]) -> Result<String, LmError> {
        (**self).detokenize(ids)
    }
}

impl<T: LmBackend + ?Sized> LmBackend for Arc<T> {
    fn vocab(&self) -> &[String] {
        (**self).vocab()
    }
    fn bos(&self) -> TokenId {
        (**self).bos()
    }
    fn eos(&self) -> TokenId {
        (**self).eos()
    }
    fn next_logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, LmError> {
        (**self).next_logprobs(prefix)
    }
    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, LmError> {
        (**self).tokenize(text)
    }
    fn detokenize(&self, ids: &[TokenId]) -> Result<String, LmError> {
        (**self).detokenize(ids)
    }
}

impl<T: LmBackend + ?Sized> LmBackend for Box<T> {
    fn vocab(&self) -> &[String] {
        (**self).vocab()
    }
    fn bos(&self) -> TokenId {
        (**self).bos()
    }
    fn eos(&self) -> TokenId {
        (**self).eos()
    }
    fn next_logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, LmError> {
        (**self).next_logprobs(prefix)
    }
    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, LmError> {
        (**self).tokenize(text)
    }
    fn detokenize(&self, ids: &[TokenId]) -> Result<String, LmError> {
        (**self).detokenize(ids)
    }
}

/// `ln Σ exp(x)`; `-inf` for an empty or all `-inf` slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalizes probabilities (or weights) into natural-log probabilities.
pub fn log_normalize(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| (w / total).ln()).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in row.iter().enumerate() {
        match best {
            Some(b) if row[b] >= v => {}
            _ if v.is_nan() => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Log-probability of `continuation` after `prefix`, optionally followed by eos.
pub fn sequence_logprob<L: LmBackend + ?Sized>(
    lm: &L,
    prefix: &[TokenId],
    continuation: &[TokenId],
    with_eos: bool,
) -> Result<f64, LmError> {
    let mut context = prefix.to_vec();
    let mut total = 0.0;
    let eos = [lm.eos()];
    let tail: &[TokenId] = if with_eos { &eos } else { &[] };
    for &t in continuation.iter().chain(tail) {
        let row = lm.next_logprobs(&context)?;
        let lp = *row.get(t as usize).ok_or(LmError::InvalidToken(t))?;
        total += lp;
        context.push(t);
    }
    Ok(total)
}
