use thiserror::Error;

pub type Result<T> = std::result::Result<T, CosaError>;

#[derive(Debug, Error)]
pub enum CosaError {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("adapter format error: {0}")]
    Format(String),

    #[error("training diverged at step {step}: loss {loss:e} exceeds limit {limit:e}")]
    Diverged {
        step: usize,
        loss: f64,
        limit: f64,
        /// Losses recorded up to and including the failing step.
        trace: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CosaError {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        CosaError::Shape {
            op,
            left: format!("{}x{}", left.0, left.1),
            right: format!("{}x{}", right.0, right.1),
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        CosaError::Argument(msg.into())
    }
}
