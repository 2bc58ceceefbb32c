use thiserror::Error;

/// Errors raised across the engine, the simulators and the data loaders.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument or configuration value violates a documented precondition.
    #[error("invalid input: {0}")]
    Validation(String),

    /// The requested arm space is too large to materialize.
    #[error("arm space too large: {arms} arms exceeds the limit of {limit}")]
    Capacity { arms: u128, limit: usize },

    /// The MCMC sampler hit a numerical failure it could not recover from.
    #[error("sampler failure: {0}")]
    Sampler(String),

    /// A price or industry file failed validation.
    #[error("ingestion error at {file} row {row}: {message}")]
    Ingest {
        file: String,
        row: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
