use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the forward model, dataset, or training code.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Permittivity requested where the model diverges (Drude pole at zero frequency).
    #[error("singular permittivity: {0}")]
    Singularity(String),

    /// A configuration that cannot be honored (incompatible ranges, unknown keys, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical procedure failed to converge or produced non-finite values.
    #[error("numeric failure: {message} (partial value {partial:e} after {steps} steps)")]
    Numeric {
        message: String,
        partial: f64,
        steps: usize,
    },

    /// An internal invariant was violated; indicates a bug rather than bad input.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// A file is well formed but does not match what the caller expects.
    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>, partial: f64, steps: usize) -> Self {
        Error::Numeric {
            message: msg.into(),
            partial,
            steps,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of numerical procedures (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric { .. } | Error::Invariant(_))
    }
}
