use thiserror::Error;

/// Errors raised by the navigation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("geodetic conversion failed: {0}")]
    Geodetic(String),
    #[error("initialization failed: {0}")]
    Initialization(String),
    #[error("propagation fault: {0}")]
    Propagation(String),
    #[error("filter diverged: {0}")]
    Divergence(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: u64, message: String },
    #[error("{path}: {message}")]
    Data { path: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
