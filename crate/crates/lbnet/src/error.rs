//! Crate-wide error type.
//!
//! Variants map onto the process exit codes used by the CLI: I/O and
//! checkpoint problems exit 1, configuration/usage/shape problems exit 2,
//! and numerical aborts (non-finite loss) exit 3.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shape or axis disagreement between tensors, naming the offending axis.
    #[error("dimension error on {axis}: {detail}")]
    Dimension { axis: String, detail: String },

    /// Invalid configuration (model invariants, config file contents, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// API misuse that is not a shape problem (e.g. backward on a non-scalar).
    #[error("usage error: {0}")]
    Usage(String),

    /// Training aborted on a non-finite value.
    #[error("numerical abort: {0}")]
    Numerical(String),

    /// Filesystem problem, tagged with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Image decode/encode problem, tagged with the path involved.
    #[error("{path}: {detail}")]
    Image { path: PathBuf, detail: String },

    /// Malformed or mismatched checkpoint contents.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn dim(axis: &str, detail: impl Into<String>) -> Self {
        Error::Dimension { axis: axis.to_string(), detail: detail.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Image { .. } | Error::Checkpoint(_) => 1,
            Error::Dimension { .. } | Error::Config(_) | Error::Usage(_) => 2,
            Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
