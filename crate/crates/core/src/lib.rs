//! Scenario-cognition evaluation toolkit.
//!
//! Builds scenario-based corpora (atomic facts, paraphrased descriptions,
//! element annotations, completion-style questions), scores model
//! completions with EM/BLEU/ROUGE, and probes hidden-state dumps for
//! element-argument associations with linear, MLP and attention probes.

pub mod corpus;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod hashing;
pub mod probe;
pub mod providers;
pub mod report;
pub mod sft;

pub use error::{Error, Result};
