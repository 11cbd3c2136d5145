use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A recorded operation produced NaN or infinity.
    #[error("non-finite value produced by `{op}` (tape node {node})")]
    NonFiniteOp { op: &'static str, node: usize },

    #[error("non-finite value in {what} at coordinate {index}")]
    NonFiniteValue { what: &'static str, index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// True for errors caused by floating-point blow-ups during compute.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFiniteOp { .. } | Error::NonFiniteValue { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
