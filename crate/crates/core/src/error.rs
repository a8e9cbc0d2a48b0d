use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed config: {0}")]
    Parse(String),

    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("{quantity} outside its domain: {reason}")]
    Domain { quantity: &'static str, reason: String },

    #[error("degenerate rate: {0}")]
    DegenerateRate(String),

    #[error("steady-state solver did not converge within bracket [{lo}, {hi}]")]
    NoConvergence { lo: f64, hi: f64 },

    #[error("unphysical damping: denominator 1 - (2(I+1)/3) f'(I0) = {denominator} <= 0")]
    UnphysicalDamping { denominator: f64 },

    #[error("distribution not normalized: sum of probabilities = {sum}")]
    Normalization { sum: f64 },

    #[error("integrator step-size failure: {0}")]
    StepSize(String),

    #[error("target {target} outside achievable range [{min}, {max}]")]
    OutOfRange { target: f64, min: f64, max: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("no spectral peak found: {0}")]
    NoPeak(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Parse(_) | Error::Validation { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
