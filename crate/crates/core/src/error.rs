//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two vectors or grids that must agree in size do not.
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    /// Schedule construction produced an unusable grid.
    #[error("invalid schedule: {0}")]
    Schedule(String),

    /// The stop formula collapsed onto (or below) the schedule boundary.
    #[error("degenerate stop: {0}")]
    DegenerateStop(String),

    /// A solver state or metric input left the finite range; trajectories that
    /// trip this are treated as out-of-distribution, never clamped.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A model was asked for a capability it does not have (analytic score,
    /// backbone/skip split, data sampling, conditioning).
    #[error("unsupported by this model: {0}")]
    Unsupported(String),

    /// Clustering could not populate every cluster even after reseeding.
    #[error("k-means failed: {0}")]
    KMeans(String),

    /// Configuration file or flag validation failure.
    #[error("invalid config: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
