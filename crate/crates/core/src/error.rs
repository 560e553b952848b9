//! Error type shared across the crate.
//!
//! The CLI maps variants onto its exit-code contract: schema problems
//! exit 2, I/O problems exit 3, everything else exits 4.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A line of the input was not a valid JSON object.
    #[error("line {line}: malformed JSON: {source}")]
    MalformedLine {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    /// A parsed record violated one or more schema invariants.
    #[error("record {id}: {message}")]
    Schema { id: String, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// A write failed partway through; `written` lines made it out.
    #[error("write failed after {written} lines: {source}")]
    PartialWrite {
        written: usize,
        #[source]
        source: std::io::Error,
    },

    #[error("non-finite log-probability")]
    NonFiniteLogProb,

    #[error("empty sequence")]
    EmptySequence,

    #[error("token index {index} out of range for vocabulary size {vocab_size}")]
    TokenOutOfRange { index: usize, vocab_size: usize },

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by the shape or content of input data.
    pub fn is_schema(&self) -> bool {
        matches!(self, Error::MalformedLine { .. } | Error::Schema { .. })
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::PartialWrite { .. })
    }
}
