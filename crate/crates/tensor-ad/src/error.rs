use thiserror::Error;

/// Errors produced by graph construction, evaluation, and the
/// finite-difference oracles.
#[derive(Debug, Error)]
pub enum AdError {
    #[error("shape mismatch in {context}: {detail}")]
    ShapeMismatch { context: String, detail: String },

    #[error("non-finite value produced by {context}")]
    NonFinite { context: String },

    #[error("unknown leaf `{0}`")]
    UnknownLeaf(String),

    #[error("leaf `{0}` is not bound")]
    UnboundLeaf(String),

    #[error("zero direction: finite-difference step size is undefined")]
    ZeroDirection,
}

impl AdError {
    pub fn shape(context: impl Into<String>, detail: impl Into<String>) -> Self {
        AdError::ShapeMismatch {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub fn non_finite(context: impl Into<String>) -> Self {
        AdError::NonFinite {
            context: context.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, AdError>;
