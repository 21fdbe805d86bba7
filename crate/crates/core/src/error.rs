use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical procedure failed to meet its tolerance; the message
    /// carries the achieved accuracy.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Operation not defined for this test-function kind.
    #[error("unsupported test function: {0}")]
    Unsupported(String),

    /// Grid or step resolution insufficient for the requested accuracy.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// A configured resource cap was exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// Not enough data to produce an estimate (e.g. degenerate fields).
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Invalid configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
