use qgf_core::features::FeatureError;
use qgf_core::indicators::IndicatorError;
use qgf_core::market::{FetchError, MarketError};
use qgf_core::metrics::MetricsError;
use qgf_models::checkpoint::CheckpointError;
use qgf_models::ModelError;
use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit 2.
    #[error("{0}")]
    Usage(String),
    /// Exit 3.
    #[error("{0}")]
    Data(String),
    /// Exit 4.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Numeric(_) => "numeric",
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

macro_rules! data_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        })*
    };
}

data_error!(
    MarketError,
    FetchError,
    IndicatorError,
    FeatureError,
    MetricsError,
    CheckpointError,
    std::io::Error,
    csv::Error
);

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            ModelError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<qgf_tensor::TensorError> for CliError {
    fn from(e: qgf_tensor::TensorError) -> Self {
        CliError::Numeric(e.to_string())
    }
}
