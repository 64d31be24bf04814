//! Mapping between token ids and the words constraints are checked on.

use crate::constraints::{words, CnfConstraint, SatisfactionState};
use crate::lm::{LmBackend, TokenId};

const WORD_MARKERS: &[char] = &['▁', 'Ġ', ' '];

/// Per-token text as seen by constraint tracking.
///
/// Word-level vocabularies (no entry starts with a word marker) treat every
/// token as a whole word. Otherwise a token beginning with `▁`, `Ġ` or a
/// space starts a new word and any other token continues the current one.
#[derive(Debug, Clone)]
pub(crate) struct TokenView {
    pub subword: bool,
    pub text: Vec<String>,
    pub starts_word: Vec<bool>,
    pub eos: TokenId,
    pub bos: TokenId,
}

impl TokenView {
    pub fn new<L: LmBackend + ?Sized>(lm: &L) -> Self {
        let vocab = lm.vocab();
        let subword = vocab.iter().any(|t| t.starts_with(WORD_MARKERS));
        let mut text = Vec::with_capacity(vocab.len());
        let mut starts_word = Vec::with_capacity(vocab.len());
        for t in vocab {
            let starts = !subword || t.starts_with(WORD_MARKERS);
            let stripped = t.trim_start_matches(WORD_MARKERS);
            text.push(words(stripped).join(" "));
            starts_word.push(starts);
        }
        TokenView { subword, text, starts_word, eos: lm.eos(), bos: lm.bos() }
    }

    pub fn len(&self) -> usize {
        self.text.len()
    }

    /// Tokens that can be emitted at all (never bos).
    pub fn emittable(&self, id: TokenId) -> bool {
        id != self.bos
    }
}

/// Incremental constraint state over a token stream.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tracker {
    pub state: SatisfactionState,
    pub pending: String,
}

impl Tracker {
    pub fn new(c: &CnfConstraint) -> Self {
        Tracker { state: c.initial_state(), pending: String::new() }
    }

    pub fn push(&mut self, view: &TokenView, c: &CnfConstraint, id: TokenId) {
        if id == view.eos || id == view.bos {
            self.finish(c);
            return;
        }
        let text = &view.text[id as usize];
        if !view.subword {
            self.state.push(c, text);
        } else if view.starts_word[id as usize] {
            self.finish(c);
            self.pending.push_str(text);
        } else {
            self.pending.push_str(text);
        }
    }

    pub fn finish(&mut self, c: &CnfConstraint) {
        if !self.pending.is_empty() {
            let word = std::mem::take(&mut self.pending);
            self.state.push(c, &word);
        }
    }

    /// State as if the current partial word were complete.
    pub fn provisional(&self, c: &CnfConstraint) -> SatisfactionState {
        if self.pending.is_empty() {
            self.state.clone()
        } else {
            c.advance(&self.state, &self.pending)
        }
    }

    pub fn finished(mut self, c: &CnfConstraint) -> SatisfactionState {
        self.finish(c);
        self.state
    }
}
