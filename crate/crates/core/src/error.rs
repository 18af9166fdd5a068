use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("noise power must be positive, got {0}")]
    NonPositiveNoise(f64),

    #[error("power constraint infeasible bracketing (kappa exceeded {0:e})")]
    InfeasibleBracketing(f64),

    #[error("quantile regression target is empty")]
    EmptyTarget,

    #[error("invalid value for `{field}`: {reason}")]
    InvalidField { field: String, reason: String },

    #[error("config parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("agent file mismatch on `{field}`: {reason}")]
    AgentMismatch { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn field(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
