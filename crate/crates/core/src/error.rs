use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unbounded problem: {0}")]
    Unbounded(String),
    #[error("no convergence: {0}")]
    Convergence(String),
    #[error("iteration limit reached: {0}")]
    IterationLimit(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("chain is not ergodic: {0}")]
    Ergodicity(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
