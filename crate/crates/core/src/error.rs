use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("{quantity} must be non-negative, got {value}")]
    Domain { quantity: &'static str, value: f64 },

    #[error("root bracketing found no sign change on (0, {i_max:e}] for I_in = {i_in:e}")]
    NoBracket { i_in: f64, i_max: f64 },

    #[error("step size underflow at t = {t:e} s (h = {h:e} s)")]
    StepUnderflow { t: f64, h: f64, last: [f64; 3] },

    #[error("analysis window of {window:e} s exceeds trace length {length:e} s")]
    WindowTooLong { window: f64, length: f64 },

    #[error("steady state is not stable ({0}); use the dynamics module instead")]
    Unstable(String),

    #[error("linear system is singular at Omega = {0:e} rad/s")]
    Singular(f64),

    #[error("measured noise {measured} is below the physical floor {floor} for efficiency {eta}")]
    Unphysical { measured: f64, floor: f64, eta: f64 },

    #[error("unit mismatch: expected {expected}, found {found}")]
    UnitMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("trace is empty")]
    EmptyTrace,

    #[error("sample {index} is {value}, cannot take logarithm")]
    NonPositive { index: usize, value: f64 },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }
}
