use thiserror::Error;

/// Errors shared across the geometry, solver and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("tangent vectors based at different points")]
    BaseMismatch,
    #[error("degenerate retraction: {0}")]
    DegenerateRetraction(String),
    #[error("misuse: {0}")]
    Misuse(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("objective does not support {0}")]
    Capability(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("singular point: {0}")]
    SingularPoint(String),
    #[error("ill-conditioned check: {0}")]
    IllConditioned(String),
}

pub type Result<T> = std::result::Result<T, Error>;
