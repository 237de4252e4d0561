use thiserror::Error;

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParam { key: &'static str, reason: String },

    #[error("composite dimension {dim} exceeds the cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("integration diverged at t = {t}: non-finite matrix entry")]
    Divergence { t: f64 },

    #[error("jump probability {dp} exceeds 0.1 at t = {t}; reduce the trajectory step")]
    JumpProbabilityOverflow { dp: f64, t: f64 },

    #[error("mean cavity occupation {n_c:e} at t = {t} is too small to normalise a correlation")]
    VanishingOccupation { n_c: f64, t: f64 },

    #[error("series too short: {len} samples, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },

    #[error("non-finite value at index {index} of the input series")]
    NonFinite { index: usize },

    #[error("test angle {nu} is too close to zero (1 - cos nu < 1e-12)")]
    SingularAngle { nu: f64 },

    #[error("{0}")]
    InvalidInput(String),

    #[error("malformed file {path}: row {row}, column {column}: {reason}")]
    Malformed {
        path: String,
        row: usize,
        column: usize,
        reason: String,
    },

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SimError {
    /// Stable machine-readable tag for the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            SimError::InvalidParam { .. } => "invalid_param",
            SimError::DimensionCap { .. } => "dimension_cap",
            SimError::Divergence { .. } => "divergence",
            SimError::JumpProbabilityOverflow { .. } => "jump_probability_overflow",
            SimError::VanishingOccupation { .. } => "vanishing_occupation",
            SimError::SeriesTooShort { .. } => "series_too_short",
            SimError::NonFinite { .. } => "non_finite",
            SimError::SingularAngle { .. } => "singular_angle",
            SimError::InvalidInput(_) => "invalid_input",
            SimError::Malformed { .. } => "malformed_file",
            SimError::Config { .. } => "config",
            SimError::Io(_) => "io",
            SimError::Json(_) => "json",
        }
    }
}
