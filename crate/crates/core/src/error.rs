use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The moving frame is undefined when the robot sits exactly on the target.
    #[error("moving frame undefined: robot coincides with target")]
    DegenerateFrame,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("partition cell {cell} contains no sample points")]
    EmptyCell { cell: usize },

    #[error("value iteration did not converge within {iters} sweeps (last change {last_delta:e})")]
    NotConverged { iters: usize, last_delta: f64 },

    #[error("value table mismatch: {0}")]
    TableMismatch(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
