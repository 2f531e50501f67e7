use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the robust design library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A quantity is only defined as a limit at this point (e.g. the dual
    /// multiplier at the Shannon order).
    #[error("limit undefined: {0}")]
    LimitUndefined(String),

    /// The geometric mixture of two Beta densities has a non-positive shape,
    /// so the Rényi integral diverges.
    #[error("degenerate mixture: shapes ({delta}, {gamma}) are not positive")]
    DegenerateMixture { delta: f64, gamma: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("estimation failed at outer index {outer}, inner index {inner}: {reason}")]
    EstimationFailed {
        outer: usize,
        inner: usize,
        reason: String,
    },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("KL divergence is infinite: {0}")]
    InfiniteKl(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Wraps the error with a short description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
