use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KnitError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("numerical integrity violated: {0}")]
    Numeric(String),
    #[error("misuse: {0}")]
    Misuse(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, KnitError>;

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::KnitError::$variant(format!($($arg)*)))
    };
}
pub(crate) use bail;
