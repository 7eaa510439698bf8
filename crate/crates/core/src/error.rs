use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("sphere dimension must be at least 2, got {0}")]
    NonPositiveDimension(u32),

    #[error("mass parameter must be non-negative, got {0}")]
    NegativeMass(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("radius {requested} outside warp table extent [0, {r_max}]")]
    TableExtent { requested: f64, r_max: f64 },

    #[error("grid resolution too small: {0}")]
    ResolutionTooSmall(String),

    #[error("principal curvatures {kappa:?} lie outside the admissible cone")]
    InadmissibleCurvatures { kappa: Vec<f64> },

    #[error("inadmissible state at t = {t}: node {node} has principal curvatures {kappa:?}")]
    InadmissibleState { t: f64, node: usize, kappa: Vec<f64> },

    #[error("homogeneity mismatch at node {node}: v/F(lambda*kappa) = {scaled}, v/(lambda*F(kappa)) = {unscaled}")]
    HomogeneityMismatch { node: usize, scaled: f64, unscaled: f64 },

    #[error("required time step {required:e} is below dt_min = {dt_min:e}")]
    StepUnderflow { required: f64, dt_min: f64 },

    #[error("step failed at t = {t}: {source}")]
    StepFailed { t: f64, source: Box<Error> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
