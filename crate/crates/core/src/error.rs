use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid emotion label {0}")]
    InvalidLabel(i64),
    #[error("unknown domain tag {0:?}")]
    UnknownDomain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
}
