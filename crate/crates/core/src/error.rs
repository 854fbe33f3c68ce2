use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid step-size schedule: {0}")]
    InvalidSchedule(String),

    #[error("schedule {index} dominates the reference schedule; the limiting ratio diverges")]
    DominanceViolation { index: usize },

    #[error("no dominant schedule among the supplied schedules")]
    NoDominantSchedule,

    #[error("true parameter vector has zero norm; SNR is undefined")]
    ZeroSignal,

    #[error("mini-batch is empty")]
    EmptyBatch,

    #[error("weighted feature variance is zero; the optimum is not identifiable")]
    SingularSystem,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("client {client} produced a non-finite iterate at step {step}")]
    NonFiniteIterate { client: usize, step: u64 },

    #[error("inter-event gap {gap:e} at t = {t} is too small to subdivide")]
    StepTooLarge { t: f64, gap: f64 },

    #[error("t = {t} lies outside [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("validation failed at `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("i/o failure: {0}")]
    Io(String),
}

impl Error {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
