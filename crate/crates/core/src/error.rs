use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid parameters or configuration, detected before any computation.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("quadrature inadequate: second moment {second_moment} differs from 1 by more than {tolerance}")]
    QuadratureInadequate { second_moment: f64, tolerance: f64 },

    #[error("initial overlap Q0 is zero; the scaling limit requires a nonzero initial correlation with the spike")]
    ZeroInitialOverlap,

    #[error("degenerate estimate at step {step}{}: all entries vanished after thresholding", replica.map(|r| format!(" (replica {r})")).unwrap_or_default())]
    DegenerateState { step: u64, replica: Option<u64> },

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("step size {dt} violates the {bound} bound {limit}")]
    StepSize { bound: &'static str, dt: f64, limit: f64 },

    #[error("steady density not normalizable: h = {h}")]
    NonNormalizable { h: f64 },

    #[error("internal consistency: {0}")]
    Inconsistent(String),
}

impl Error {
    /// True for errors caused by user-supplied parameters rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::ZeroInitialOverlap | Error::QuadratureInadequate { .. })
    }
}
