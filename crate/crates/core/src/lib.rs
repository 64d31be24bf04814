//! Constrained generation over pluggable language-model backends.
//!
//! Lexical constraints are CNF formulas over inflected word forms
//! ([`constraints`]); semantic constraints are ontology axioms checked against
//! entity mentions ([`ontology`]). Generation is steered by [`decode`],
//! audited by [`checker`], fixed up by [`repair`] and measured by [`eval`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checker;
pub mod constraints;
pub mod decode;
pub mod eval;
pub mod geometry;
pub mod lm;
pub mod mock;
pub mod ontology;
pub mod par;
pub mod prompt;
pub mod repair;
