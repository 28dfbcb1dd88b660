use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid weight spec at k={k}: {reason}")]
    InvalidSpec { k: usize, reason: String },

    #[error("invalid weight spec: {0}")]
    InvalidForm(String),

    #[error("lambda={lambda} is outside the domain of rho_hat (must exceed {lower})")]
    Domain { lambda: f64, lower: f64 },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cannot allocate a tree with {requested} nodes")]
    Capacity { requested: usize },

    #[error("cannot parse weight grammar {input:?}: {reason}")]
    Parse { input: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
