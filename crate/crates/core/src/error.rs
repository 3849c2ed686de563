use thiserror::Error;

/// Errors produced by the mechanism library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid offspring distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "extinction iteration did not converge after {iterations} steps (last iterate {last})"
    )]
    NoConvergence { iterations: usize, last: f64 },

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("degenerate input at level {level}: {reason}")]
    Degenerate { level: usize, reason: String },

    #[error("invalid horizon {0}: must be at least 1")]
    InvalidHorizon(usize),

    #[error("position {requested} is outside horizon {horizon}")]
    OutOfHorizon { requested: usize, horizon: usize },

    #[error("horizon mismatch: table has h = {table}, lambda has {lambda} levels")]
    HorizonMismatch { table: usize, lambda: usize },

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True when the error stems from the caller's inputs rather than I/O.
    pub fn is_input(&self) -> bool {
        !matches!(
            self,
            Self::Io(_) | Self::Csv(_) | Self::NoConvergence { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
