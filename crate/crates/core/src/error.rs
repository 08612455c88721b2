use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },
    #[error("tensor length mismatch for {name}: expected {expected} bytes, found {found}")]
    TensorLength { name: String, expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("layer `{0}` is not decomposable")]
    NotDecomposable(String),
    #[error("slice is not normalized: max |w| = {0}")]
    NotNormalized(f64),
    #[error("accumulator overflow: {0}")]
    Overflow(String),
    #[error("buffer capacity exceeded: {0}")]
    BufferCapacity(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("internal invariant breached: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Format { what, msg: msg.into() }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) => 3,
            Error::Internal(_) => 4,
            _ => 2,
        }
    }
}
