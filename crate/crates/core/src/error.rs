use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CharbError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, CharbError>;

impl CharbError {
    /// True when the error signals bad user input rather than a numerical breakdown.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            CharbError::InvalidInput(_) | CharbError::Dimension(_) | CharbError::Unsupported(_)
        )
    }
}
