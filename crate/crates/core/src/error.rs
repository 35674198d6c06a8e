use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (|S + S^T| = {0:e})")]
    NonSkewInput(f64),

    #[error("top eigenvalues of the quaternion scatter matrix are not separated (gap = {gap:e})")]
    DegenerateSpectrum { gap: f64 },

    #[error("non-finite particle update at particle {particle}: {detail}")]
    NonFinite { particle: usize, detail: String },

    #[error("particle {particle} left the SO(2) subgroup (off-axis magnitude {magnitude:e})")]
    SubgroupViolation { particle: usize, magnitude: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("observation model has no analytic Jacobian; required by {0}")]
    MissingJacobian(&'static str),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
