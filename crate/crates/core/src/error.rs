use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input outside the model's supported range.
    #[error("{quantity} = {value} outside supported range [{min}, {max}]")]
    Domain { quantity: &'static str, value: f64, min: f64, max: f64 },

    /// Parameter set that cannot produce a valid model.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Scenario file or override rejected before the run starts.
    #[error("invalid scenario: {0}")]
    Scenario(String),

    /// Non-finite state or diverging integration.
    #[error("numerical abort at t = {t:.6} s: {reason}")]
    Numerical { t: f64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(quantity: &'static str, value: f64, min: f64, max: f64) -> Self {
        Error::Domain { quantity, value, min, max }
    }
}
