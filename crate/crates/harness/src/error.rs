use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("tolerance exceeded for `{tag}`: max relative error {err:e} > {tol:e}")]
    Tolerance { tag: String, err: f64, tol: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    pub fn numeric(msg: impl std::fmt::Display) -> Self {
        HarnessError::Numeric(msg.to_string())
    }

    /// Process exit code: 2 config, 3 numeric, 4 tolerance, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numeric(_) => 3,
            HarnessError::Tolerance { .. } => 4,
            _ => 1,
        }
    }
}

impl From<lpt::LptError> for HarnessError {
    fn from(e: lpt::LptError) -> Self {
        HarnessError::numeric(e)
    }
}

impl From<il::IlError> for HarnessError {
    fn from(e: il::IlError) -> Self {
        HarnessError::numeric(e)
    }
}

impl From<mlo_engine::EngineError> for HarnessError {
    fn from(e: mlo_engine::EngineError) -> Self {
        HarnessError::numeric(e)
    }
}

impl From<tensor_ad::AdError> for HarnessError {
    fn from(e: tensor_ad::AdError) -> Self {
        HarnessError::numeric(e)
    }
}

impl From<toy_nas::NasError> for HarnessError {
    fn from(e: toy_nas::NasError) -> Self {
        HarnessError::numeric(e)
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
