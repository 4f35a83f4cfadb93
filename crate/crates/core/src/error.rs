use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// The variants split into input problems (the caller handed us something
/// malformed or inconsistent) and [`Error::Internal`], which means an engine
/// invariant was broken. [`Error::is_input_error`] exposes that split so the
/// command-line driver can pick an exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("I/O error: {0}")]
    Stream(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated tensor data: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("invalid tensor element at flat index {index}: {value} ({reason})")]
    InvalidElement {
        index: usize,
        value: f32,
        reason: &'static str,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("consistency error in record {record}: {detail}")]
    Consistency { record: String, detail: String },

    #[error("record {record}: {source}")]
    InRecord {
        record: String,
        #[source]
        source: Box<Error>,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("index error: token index {index} {detail}")]
    Index { index: usize, detail: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// `false` only for broken engine invariants.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Internal(_) => false,
            Error::InRecord { source, .. } => source.is_input_error(),
            _ => true,
        }
    }

    pub(crate) fn in_record(self, record: impl Into<String>) -> Self {
        Error::InRecord {
            record: record.into(),
            source: Box::new(self),
        }
    }
}
