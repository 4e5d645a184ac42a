use thiserror::Error;

/// Errors raised by models, flows, filters and the experiment runner.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),

    #[error(
        "flow step not invertible at lambda={lambda:.6} (eps*rho={eps_rho:.6}){}",
        particle.map(|p| format!(" for particle {p}")).unwrap_or_default()
    )]
    NotInvertible {
        lambda: f64,
        eps_rho: f64,
        particle: Option<usize>,
    },

    #[error("all importance weights are zero")]
    DegenerateWeights,

    #[error("unsupported option: {0}")]
    Unsupported(String),

    #[error("rejection sampling exhausted after {0} attempts")]
    RejectionExhausted(usize),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
