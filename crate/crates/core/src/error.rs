use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid waveguide model: {0}")]
    InvalidModel(String),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("invalid quantum numbers: {0}")]
    InvalidQuantumNumbers(String),

    #[error("collective basis dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("operator product of order {0} is not supported (max 2)")]
    OrderTooHigh(usize),

    #[error("step size collapsed to {step:e} at t = {t}")]
    StepSizeUnderflow { t: f64, step: f64 },

    #[error("non-finite derivative at t = {t}")]
    NonFinite { t: f64 },

    #[error("integration exceeded {0} steps")]
    MaxSteps(usize),

    #[error("event threshold is never crossed")]
    NoCrossing,

    #[error("steady state not reached before t = {0}")]
    SteadyStateNotReached(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
