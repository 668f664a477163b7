use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("internal inconsistency: {0}")]
    Inconsistency(String),

    #[error("no nontrivial critical point found: {0}")]
    NotFound(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the command-line front end:
    /// 2 configuration error, 3 solver non-convergence, 4 internal inconsistency.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Domain(_) | Error::Shape(_) => 2,
            Error::NonConvergence { .. } | Error::NotFound(_) | Error::Overflow(_) => 3,
            Error::Inconsistency(_) => 4,
            Error::Io { .. } | Error::Format { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
