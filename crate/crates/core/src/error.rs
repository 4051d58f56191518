use thiserror::Error;

/// Error type shared by all modules.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A constructor or operation was handed parameters outside its domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An iterative method failed to reach its tolerance.
    #[error("failed to converge: {0}")]
    NonConvergence(String),

    /// A verification step found a violated certificate.
    #[error("verification failed: {0}")]
    VerificationFailed(String),

    /// File contents did not match the expected format.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
