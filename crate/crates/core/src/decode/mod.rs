//! Decoding strategies over any [`LmBackend`].
//!
//! * [`greedy`] and [`beam`]: unconstrained baselines.
//! * [`constrained_beam`]: beam search scored by `logprob + alpha * coverage`,
//!   with forbid-clause pruning and per-signature group quotas.
//! * [`smc`]: particle filtering with a hard mask schedule that forces the
//!   remaining required forms once free slots run out.
//!
//! Argmax ties always break toward the lowest token id (lexicographically
//! smallest id sequence for whole hypotheses).

mod beam;
mod smc;
mod words;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::SatisfactionState;
use crate::lm::{LmError, TokenId};

pub use beam::{beam, beam_tracked, constrained_beam, greedy};
pub use smc::{smc, Particle, SmcOutput};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error("invalid decode config: {0}")]
    Config(String),
    #[error("constraint infeasible under mask schedule: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub max_new_tokens: usize,
    pub beam_size: usize,
    /// Weight of the coverage bonus in constrained beam search.
    pub alpha: f64,
    pub n_particles: usize,
    /// Resample when ESS falls below this fraction of the particle count.
    pub ess_threshold: f64,
    pub seed: u64,
    /// Proposal temperature for SMC; weights correct back to the raw model.
    pub temperature: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            max_new_tokens: 20,
            beam_size: 8,
            alpha: 2.0,
            n_particles: 8,
            ess_threshold: 0.5,
            seed: 0,
            temperature: 1.0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        let bad = |m: &str| Err(DecodeError::Config(m.to_owned()));
        if self.beam_size == 0 {
            return bad("beam_size must be at least 1");
        }
        if self.n_particles == 0 {
            return bad("n_particles must be at least 1");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be finite and ≥ 0");
        }
        if !(self.ess_threshold > 0.0 && self.ess_threshold <= 1.0) {
            return bad("ess_threshold must lie in (0, 1]");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be finite and > 0");
        }
        Ok(())
    }
}

/// A decoded continuation (prompt excluded).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hypothesis {
    pub ids: Vec<TokenId>,
    /// Sum of per-step natural-log probabilities.
    pub logprob: f64,
    /// Constraint state of the continuation, when decoding tracked one.
    pub state: Option<SatisfactionState>,
    /// Whether eos was generated.
    pub finished: bool,
    /// Search score; equals `logprob` for unconstrained search.
    pub score: f64,
}

impl Hypothesis {
    pub fn coverage(&self) -> Option<f64> {
        self.state.as_ref().map(SatisfactionState::coverage)
    }

    pub fn is_satisfied(&self) -> Option<bool> {
        self.state.as_ref().map(SatisfactionState::is_satisfied)
    }
}

/// Generated tokens appended to the prompt.
pub(crate) fn context(prompt: &[TokenId], ids: &[TokenId]) -> Vec<TokenId> {
    let mut ctx = Vec::with_capacity(prompt.len() + ids.len());
    ctx.extend_from_slice(prompt);
    ctx.extend_from_slice(ids);
    ctx
}
