use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time arguments must be nonnegative (got s={s}, t={t})")]
    NegativeTime { s: f64, t: f64 },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("{what} level {level} exceeds the configured guard {guard}")]
    GuardExceeded {
        what: &'static str,
        level: u32,
        guard: u32,
    },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("matrix is not positive semidefinite: factorization failed at pivot {pivot} even with jitter {jitter:e}")]
    NotPositiveSemidefinite { pivot: usize, jitter: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}
