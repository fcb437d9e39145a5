use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate configuration: particles {0} and {1} coincide")]
    DegenerateConfig(usize, usize),

    #[error("heading is undefined at zero speed")]
    UndefinedDirection,

    #[error("root lost near theta = {theta:.6}")]
    RootLost { theta: f64 },

    #[error("no admissible jump target beyond theta* = {theta_star:.6}: {reason}")]
    NoTarget { theta_star: f64, reason: String },

    #[error("branch initialization failed for particle {particle}: {reason}")]
    Init { particle: usize, reason: String },

    #[error("jump unsupported by theory: {0}")]
    Unsupported(String),

    #[error("speed collapse: r = {r:e} for particle {particle} at t = {t:.6e}")]
    SpeedCollapse { particle: usize, r: f64, t: f64 },

    #[error("step budget of {budget} steps exceeded at t = {t:.6e}")]
    StepBudget { budget: u64, t: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parameter {field}: {reason}")]
    InvalidParam { field: String, reason: String },

    #[error("fit unavailable: {0}")]
    FitUnavailable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
