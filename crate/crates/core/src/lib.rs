//! Situation entity classification of clauses with paragraph-level
//! Bi-LSTM models and an optional CRF output layer.

pub mod corpus;
pub mod crf;
pub mod embed;
pub mod error;
pub mod eval;
pub mod model;
pub mod nncore;
pub mod synth;

pub use error::{Error, Result};
