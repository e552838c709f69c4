use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no sign change in [{lo}, {hi}] after bracket expansion")]
    Bracketing { lo: f64, hi: f64 },

    #[error("bisection did not converge in {iterations} iterations (best iterate {best})")]
    Convergence { iterations: usize, best: f64 },

    #[error("dimension mismatch: {0}")]
    Structural(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate illumination: precoder radiates no energy toward the probed direction (denominator {0:e})")]
    DegenerateIllumination(f64),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("configuration error at line {line}, key `{key}`: {message}")]
    Config { key: String, line: usize, message: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("file error for {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True when the error (possibly wrapped) stems from user configuration.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config { .. } => true,
            Error::Context { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
