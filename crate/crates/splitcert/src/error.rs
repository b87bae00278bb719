use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("subspaces are not complementary: {0}")]
    NotComplementary(String),
    #[error("operator has rank below {needed}")]
    RankDeficient { needed: usize },
    #[error("index outside the cocycle window: {0}")]
    OutOfWindow(String),
    #[error("size cap exceeded: {0}")]
    Cap(String),
    #[error("unsupported in this norm mode: {0}")]
    Unsupported(String),
    #[error("malformed input: {0}")]
    Parse(String),
}
