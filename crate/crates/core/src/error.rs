use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid transition row for (s={state}, a={action}): {reason}")]
    Transition {
        state: usize,
        action: usize,
        reason: String,
    },

    #[error("reward r({state},{action})={value} outside [0, {r_max}]")]
    Reward {
        state: usize,
        action: usize,
        value: f64,
        r_max: f64,
    },

    #[error("invalid policy: {0}")]
    Policy(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("bound violated: {0}")]
    BoundViolation(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
