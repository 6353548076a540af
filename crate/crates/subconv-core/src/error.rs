//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by grid construction, file formats and the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed binary payload; `offset` is the byte position of the field
    /// that failed to parse or validate.
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    /// Malformed text input; `line` is 1-based.
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    /// Input rejected before any processing (non-finite coordinate,
    /// non-positive scale, out-of-range site, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Inconsistent configuration (channel mismatches between layers,
    /// unsatisfiable quantization scheme, bad sweep parameters, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// An encoded tile violated its own invariants (mask popcount vs. stored
    /// activation count, state index past the end of a lane buffer).
    #[error("corrupt encoding: {0}")]
    CorruptEncoding(String),
}

impl Error {
    pub(crate) fn format(offset: u64, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
