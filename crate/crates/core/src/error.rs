use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input data: {0}")]
    Data(String),

    #[error("kernel expression: {0}")]
    Parse(String),

    #[error("cholesky factorization failed (max jitter {jitter:e} tried)")]
    Factorization { jitter: f64 },

    #[error("predictive variance {0:e} is negative beyond tolerance")]
    NegativeVariance(f64),

    #[error("innovation variance r_{step} = {value:e} is not positive")]
    InnovationVariance { step: usize, value: f64 },

    #[error("particle collapse at step {step}: all weights are zero")]
    Collapse { step: usize },

    #[error("optimizer: {0}")]
    Optimizer(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the failure is numerical rather than a problem with the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Factorization { .. }
                | Error::NegativeVariance(_)
                | Error::InnovationVariance { .. }
                | Error::Collapse { .. }
                | Error::Optimizer(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
