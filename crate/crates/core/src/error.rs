use thiserror::Error;

/// Errors raised by the numerical operations in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid manifold: {0}")]
    InvalidManifold(String),

    #[error("grid resolution too large: {nodes} nodes exceeds cap {cap}")]
    ResolutionTooLarge { nodes: u128, cap: usize },

    #[error("grid resolution n = {0} is below the minimum of 4")]
    ResolutionTooSmall(usize),

    #[error("stencil graph too large: {edges} edges exceeds cap {cap}")]
    MemoryCapExceeded { edges: u128, cap: usize },

    #[error("manifold mismatch: {0}")]
    ManifoldMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("nodes {0} and {1} are not stencil-adjacent")]
    NotAdjacent(usize, usize),

    #[error("exponent out of range: {0}")]
    ExponentRange(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
