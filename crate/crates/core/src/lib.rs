//! Decoding-time language confusion gate.
//!
//! The crate covers the whole pipeline:
//!
//! - [`vocab`]: classify every vocabulary token into one of four language
//!   families, including BPE tokens that end in an incomplete UTF-8 character.
//! - [`sampling`]: logits primitives (norm adjustment, temperature softmax,
//!   top-k/top-p candidate sets, family masking, seeded sampling).
//! - [`gate`]: the two-layer gate network, pseudo-targets from norm-adjusted
//!   distributions, BCE loss with exact gradients, and training.
//! - [`models`]: the [`models::StepModel`] contract, a synthetic multilingual
//!   model with controllable embedding-norm skew, and trace recording/playback.
//! - [`decoder`]: gated sampling with the intervention rules, plus greedy
//!   speculative decoding.
//! - [`eval`]: confusion and code-switch metrics.
//! - [`bench`]: the synthetic end-to-end benchmark.

pub mod bench;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod gate;
pub mod io;
pub mod models;
pub mod sampling;
pub mod vocab;

mod hash;

pub use error::{Error, Result};
pub use vocab::{FamilySet, LanguageFamily, TokenId};
