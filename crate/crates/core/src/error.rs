use thiserror::Error;

/// Failure of an MDS decode.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("insufficient symbols: have {have} distinct, need {need}")]
    Insufficient { have: usize, need: usize },
    #[error("inconsistent symbols: index {index} carries conflicting payloads")]
    Inconsistent { index: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("server {server} out of range for n = {n}")]
    InvalidServer { server: usize, n: usize },
    #[error("version {version} out of range for nu = {nu}")]
    InvalidVersion { version: u32, nu: u32 },
    #[error("{scheme}: parameter regime violated: {reason}")]
    Regime { scheme: String, reason: String },
    #[error("enumeration budget exceeded: {needed} items requested, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },
    #[error("decode failed: {0}")]
    Decode(#[from] DecodeError),
    #[error("duplicate symbol index {0}")]
    DuplicateIndex(u32),
    #[error("symbol index {index} outside the field universe of {universe} points")]
    IndexOutOfRange { index: u64, universe: u64 },
    #[error("message length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("messages do not match the server state: {0}")]
    MessageSet(String),
    #[error("decoding contract broken: {0}")]
    Contract(String),
    #[error("malformed state: {0}")]
    StateFormat(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn regime(scheme: &str, reason: impl Into<String>) -> Error {
    Error::Regime {
        scheme: scheme.to_string(),
        reason: reason.into(),
    }
}
