use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on the caller's input was violated.
    #[error("usage error: {0}")]
    Usage(String),
    #[error("decryption failed: ciphertext or tag rejected")]
    Decryption,
    #[error("malformed input at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("token epoch {got} does not match current group-key epoch {current}")]
    StaleEpoch { got: u64, current: u64 },
    #[error("duplicate index label")]
    DuplicateLabel,
    #[error("timestamp {got} is older than the last accepted timestamp {last}")]
    NonMonotonicTime { got: u64, last: u64 },
    #[error("construction mode mismatch: expected {expected}, got {got}")]
    ModeMismatch { expected: &'static str, got: &'static str },
    #[error("unsupported in this mode: {0}")]
    Unsupported(&'static str),
    #[error("index chain broken: {0}")]
    BrokenChain(String),
    #[error("ambiguous embedded digit at position {pos}")]
    AmbiguousDigit { pos: u32 },
    #[error("bloom filter authenticator does not match")]
    TamperedFilter,
    #[error("bloom filter timestamp {timestamp} is older than the freshness window allows (now {now})")]
    StaleFilter { timestamp: u64, now: u64 },
    #[error("counter still present at the search bound {0}")]
    BoundExceeded(u64),
    /// The server answered a request with a protocol error code.
    #[error("server rejected request: {0:?}")]
    Remote(crate::wire::ErrorCode),
    #[error("transport: {0}")]
    Transport(#[from] io::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn format(offset: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }
}
