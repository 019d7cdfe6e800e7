use thiserror::Error;

/// Errors produced by parameter validation, integration and the derived analytics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration diverged (non-finite state) after t = {last_good_t:e} s")]
    Divergence { last_good_t: f64 },

    #[error("step size underflow at t = {t:e} s (dt = {dt:e} s); the system is too stiff for the requested tolerance")]
    StepUnderflow { t: f64, dt: f64 },

    #[error("step budget of {max_steps} exhausted at t = {t:e} s")]
    MaxStepsExceeded { max_steps: usize, t: f64 },

    #[error("fundamental matrix ill-conditioned at t = {t:e} s (condition number {cond:e} above {limit:e})")]
    Conditioning { t: f64, cond: f64, limit: f64 },

    #[error("covariance quality check failed at t = {t:e} s: {reason}")]
    Quality { t: f64, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
