use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("gimbal lock: |cos(beta)| = {cos_beta:e} is below the extraction threshold")]
    GimbalLock { cos_beta: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("contact sampling failed: {0}")]
    SamplingFailure(String),

    #[error("inverse kinematics did not converge: residual {pos_residual:e} mm / {rot_residual:e} deg after {iterations} iterations")]
    IkDivergence {
        pos_residual: f64,
        rot_residual: f64,
        iterations: usize,
    },

    #[error("manifold is empty")]
    EmptyManifold,

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::GimbalLock { .. } => "GimbalLock",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::Parse(_) => "ParseError",
            Error::Validation(_) => "ValidationError",
            Error::SamplingFailure(_) => "SamplingFailure",
            Error::IkDivergence { .. } => "IkDivergence",
            Error::EmptyManifold => "EmptyManifold",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::MissingArtifact(_) => "MissingArtifact",
            Error::ConfigParse(_) => "ConfigParse",
            Error::Io(_) => "Io",
        }
    }
}
