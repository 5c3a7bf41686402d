use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: parse error: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("{path}:{line}: out of bounds: {msg}")]
    Bounds { path: PathBuf, line: usize, msg: String },

    #[error("invalid plan: {0}")]
    Plan(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("unsupported operator: {0}")]
    UnsupportedOperator(String),

    #[error(
        "memory guard: dense propagation matrix needs {estimate_bytes} bytes{} but cap is {cap_bytes} bytes",
        if *.overflow { " (saturated)" } else { "" }
    )]
    MemoryGuard {
        estimate_bytes: u64,
        cap_bytes: u64,
        overflow: bool,
    },

    #[error("partition error: {0}")]
    Partition(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("size guard: {0}")]
    Size(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("tensor format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MemoryGuard { .. } => 3,
            Error::Numeric(_) | Error::Degenerate(_) => 4,
            Error::Io { .. } | Error::Format(_) => 5,
            _ => 2,
        }
    }
}
