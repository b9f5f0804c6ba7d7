use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid coefficient family: {0}")]
    InvalidFamily(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero vector has no membership margin")]
    ZeroVector,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("resource cap exceeded: {what} requires {required}, cap is {cap}")]
    ResourceCap {
        what: String,
        required: String,
        cap: String,
    },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("unrepresentable input: {0}")]
    Unrepresentable(String),

    #[error("integer overflow in {0}")]
    Overflow(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
