use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty branch: projector weight {prob:e} below degeneracy tolerance")]
    EmptyBranch { prob: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state not normalized: norm² = {norm_sq}")]
    Unnormalized { norm_sq: f64 },

    #[error("truncation too aggressive: population {loss:e} lies above the cutoff")]
    Truncation { loss: f64 },

    #[error("integration did not converge: {reason} (achieved error estimate {estimate:e})")]
    Convergence { reason: String, estimate: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, found })
        }
    }
}
