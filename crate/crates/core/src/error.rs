use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("region {region} exceeds frame bounds {rows}x{cols}")]
    Bounds {
        region: String,
        rows: usize,
        cols: usize,
    },

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown {family} strategy `{name}`")]
    UnknownStrategy { family: &'static str, name: String },

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("corrupt stack header in {path}: {reason}")]
    CorruptHeader { path: PathBuf, reason: String },

    #[error("truncated payload in {path}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("config digest mismatch for {path}")]
    DigestMismatch { path: PathBuf },

    #[error("frame {index} holds non-integer or out-of-range counts; quantize before writing")]
    NonIntegerCounts { index: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
