use thiserror::Error;

/// Errors raised by the library.
///
/// Configuration-class errors (`InvalidInput`, `Assumption1`, `Config`, `Parse`, `Io`)
/// map to CLI exit code 1; the numerical and internal classes map to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("sample set violates the rank condition: {0}")]
    Assumption1(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("gradient descent diverged at inner iteration {iteration}")]
    GradientDivergence { iteration: usize },

    #[error("policy enumeration needs {needed} policies, cap is {cap}")]
    EnumerationCap { needed: String, cap: u64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("bound precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Assumption1(_)
                | Error::Config(_)
                | Error::Parse(_)
                | Error::Io { .. }
                | Error::EnumerationCap { .. }
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
