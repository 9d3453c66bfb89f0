use thiserror::Error;

/// Errors shared by every module of the toolkit.
#[derive(Debug, Error)]
pub enum OsseError {
    #[error("invalid grid specification: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("point outside the field time range: t = {0}")]
    TimeOutOfRange(f64),
    #[error("masked cell under support at (t={t}, lat={lat}, lon={lon})")]
    MaskedCell { t: f64, lat: f64, lon: f64 },
    #[error("extrapolation not supported: {0}")]
    Extrapolation(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no constraint points")]
    NoConstraintPoints,
    #[error("zero variance in normalization statistics")]
    ZeroVariance,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, OsseError>;
