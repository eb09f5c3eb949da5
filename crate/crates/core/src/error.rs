use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular or rank-deficient matrix: {0}")]
    Singular(String),

    #[error("covariance for row {row} is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { row: usize, min_eigenvalue: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("replicate {index} failed: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("activation cache does not belong to the current parameters: {0}")]
    StaleCache(String),

    #[error("missing prediction context: {0}")]
    MissingContext(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
