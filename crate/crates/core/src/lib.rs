//! Target-aware corpus selection by importance resampling over hashed
//! multi-granular n-gram features.
//!
//! The flow is: adapt a base vocabulary to a small task corpus
//! ([`vocab`]), segment documents with it ([`tokenizer`]), hash token
//! n-grams into fixed-size count vectors ([`features`]), estimate smoothed
//! task and raw bucket distributions ([`distribution`]), and draw `k` raw
//! documents without replacement in proportion to their importance weight
//! ([`sampler`]). [`pipeline`] strings these together over sharded JSONL.

pub mod corpus;
pub mod distribution;
pub mod error;
pub mod features;
pub mod pipeline;
pub mod sampler;
pub mod tokenizer;
pub mod vocab;

pub use error::{Error, Result};
