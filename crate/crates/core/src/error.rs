use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular evaluation: atom {atom} coincides with the evaluation point")]
    Singularity { atom: usize },

    #[error("divergent integral: {0}")]
    Divergence(String),

    #[error("undefined fraction: {0}")]
    UndefinedFraction(String),

    #[error("insufficient scales at level {level}, cell {cell}: atom {atom} has no good scale at or below {limit:e}")]
    InsufficientScales { level: usize, cell: usize, atom: usize, limit: f64 },

    #[error("construction failure at level {level}, cell {cell}: {reason}")]
    ConstructionFailure { level: usize, cell: usize, reason: String },

    #[error("property {property} violated at level {level}, cell {cell}: {detail}")]
    PropertyViolation { level: usize, cell: usize, property: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors that stem from the Cantor construction itself rather
    /// than from bad input.
    pub fn is_construction_failure(&self) -> bool {
        matches!(self, Error::InsufficientScales { .. } | Error::ConstructionFailure { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
