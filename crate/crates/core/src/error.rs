use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
///
/// Every variant names the subsystem it comes from so that the CLI can emit a
/// machine-readable summary.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error(
        "kernel matrix of {n} centers is not positive definite even with jitter {max_jitter:e} \
         (minimum center separation {min_separation:e}); centers are nearly coincident"
    )]
    Factorization {
        n: usize,
        min_separation: f64,
        max_jitter: f64,
    },

    #[error("integration produced a non-finite state starting from {start:?}")]
    Integration { start: Vec<f64> },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("out of scope: {0}")]
    OutOfScope(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Input(_) => "input",
            Error::State(_) => "state",
            Error::Factorization { .. } => "factorization",
            Error::Integration { .. } => "integration",
            Error::Resource(_) => "resource",
            Error::OutOfScope(_) => "out-of-scope",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
