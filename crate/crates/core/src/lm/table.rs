use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{log_normalize, LmBackend, LmError, TokenId};

const WORD_MARKERS: &[char] = &['▁', 'Ġ', ' '];

type RowFn = dyn Fn(&[TokenId]) -> Vec<f64> + Send + Sync;

/// Backend defined by an explicit `prefix -> weights` function.
///
/// Weights are normalized per row. Tokens are whitespace-separated vocabulary
/// entries; bos has id `|V|`. When some entry starts with a word marker
/// (`▁`, `Ġ`), detokenization glues pieces and turns markers into spaces.
#[derive(Clone)]
pub struct TableLm {
    vocab: Vec<String>,
    ids: HashMap<String, TokenId>,
    eos: TokenId,
    rows: Arc<RowFn>,
}

impl fmt::Debug for TableLm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TableLm").field("vocab", &self.vocab).field("eos", &self.eos).finish()
    }
}

fn fnv1a(seed: u64, ids: &[TokenId]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &t in ids {
        for b in t.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

impl TableLm {
    pub fn new<F>(vocab: Vec<String>, eos: TokenId, rows: F) -> Result<Self, LmError>
    where
        F: Fn(&[TokenId]) -> Vec<f64> + Send + Sync + 'static,
    {
        if eos as usize >= vocab.len() {
            return Err(LmError::Config(format!("eos id {eos} outside vocabulary of {}", vocab.len())));
        }
        let ids = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as TokenId)).collect();
        Ok(TableLm { vocab, ids, eos, rows: Arc::new(rows) })
    }

    /// Every prefix gets its own pseudo-random row, fixed by `seed`.
    /// Larger `sharpness` makes rows peakier.
    pub fn random(vocab: Vec<String>, eos: TokenId, seed: u64, sharpness: f64) -> Result<Self, LmError> {
        TableLm::new(vocab.clone(), eos, move |prefix| {
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(seed, prefix));
            (0..vocab.len()).map(|_| (sharpness * rng.random::<f64>()).exp()).collect()
        })
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }
}

impl LmBackend for TableLm {
    fn vocab(&self) -> &[String] {
        &self.vocab
    }

    fn bos(&self) -> TokenId {
        self.vocab.len() as TokenId
    }

    fn eos(&self) -> TokenId {
        self.eos
    }

    fn next_logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, LmError> {
        if let Some(&bad) = prefix.iter().find(|&&t| t as usize > self.vocab.len()) {
            return Err(LmError::InvalidToken(bad));
        }
        let weights = (self.rows)(prefix);
        if weights.len() != self.vocab.len() || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(LmError::Config("table row has the wrong length or a negative weight".into()));
        }
        Ok(log_normalize(&weights))
    }

    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, LmError> {
        text.split_whitespace().map(|w| self.id(w).ok_or_else(|| LmError::OutOfVocabulary(w.to_owned()))).collect()
    }

    fn detokenize(&self, ids: &[TokenId]) -> Result<String, LmError> {
        let mut out = Vec::new();
        for &t in ids {
            if t == self.eos || t == self.bos() {
                continue;
            }
            out.push(self.vocab.get(t as usize).ok_or(LmError::InvalidToken(t))?.as_str());
        }
        if !self.vocab.iter().any(|t| t.starts_with(WORD_MARKERS)) {
            return Ok(out.join(" "));
        }
        let mut text = String::new();
        for piece in out {
            match piece.strip_prefix(WORD_MARKERS) {
                Some(rest) => {
                    text.push(' ');
                    text.push_str(rest);
                }
                None => text.push_str(piece),
            }
        }
        Ok(text.trim_start().to_owned())
    }
}
