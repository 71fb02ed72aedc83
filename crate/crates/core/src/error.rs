use thiserror::Error;

/// Errors raised across the simulator and the algorithm library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("infeasible assignment: {0}")]
    Infeasible(String),

    #[error("brute-force oracle refused: {0}")]
    OracleTooLarge(String),

    #[error("malformed assignment: {0}")]
    MalformedAssignment(String),

    #[error("protocol violation at step {step}: {detail}")]
    Protocol { step: usize, detail: String },

    #[error("config error at `{key}`: {detail}")]
    Config { key: String, detail: String },

    #[error("non-termination guard tripped after {0} rounds")]
    NonTermination(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn protocol(step: usize, detail: impl Into<String>) -> Self {
        Error::Protocol {
            step,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
