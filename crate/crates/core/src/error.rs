use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("io error: {0}")]
    Stream(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown situation entity label {label:?}")]
    UnknownLabel { line: usize, label: String },

    #[error("line {line}: clause {clause} has no tokens")]
    EmptyClause { line: usize, clause: usize },

    #[error("line {line}: paragraph has no clauses")]
    EmptyParagraph { line: usize },

    #[error("no labeled clauses")]
    NoLabeledClauses,

    #[error("paragraph {doc_id:?} clause {clause} has no gold label")]
    MissingLabel { doc_id: String, clause: usize },

    #[error("invalid split: {0}")]
    Split(String),

    #[error("embedding table: {0}")]
    Embedding(String),

    #[error("dimension mismatch in {op}: expected {expected}, got {actual}")]
    Shape {
        op: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid span {start}..{end} for sequence of length {len}")]
    Span { start: usize, end: usize, len: usize },

    #[error("label sequence has length {actual}, emissions have {expected} rows")]
    LabelLength { expected: usize, actual: usize },

    #[error("backward called without a recorded forward pass")]
    NoTape,

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("incompatible checkpoint version {found} (this build reads version {supported})")]
    CheckpointVersion { found: u32, supported: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("length mismatch: {gold} gold labels vs {predicted} predictions")]
    LengthMismatch { gold: usize, predicted: usize },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
