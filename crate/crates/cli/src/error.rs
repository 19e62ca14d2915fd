use conceptual_vae::analysis::AnalysisError;
use conceptual_vae::sprite::DataError;
use conceptual_vae::tensor::{CheckpointError, TensorError};
use conceptual_vae::vae::VaeError;
use thiserror::Error;

/// Exit codes: 2 for configuration and input problems, 3 for numeric
/// failures, 4 for incompatible checkpoints or datasets.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Incompatible(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Incompatible(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Incompatible(e.to_string())
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::NonFiniteGradient(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<VaeError> for CliError {
    fn from(e: VaeError) -> Self {
        match e {
            VaeError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            VaeError::Incompatible(_) | VaeError::Checkpoint(_) => CliError::Incompatible(e.to_string()),
            VaeError::Tensor(t) => t.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Vae(v) => v.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<toml::de::Error> for CliError {
    fn from(e: toml::de::Error) -> Self {
        CliError::Config(format!("config: {e}"))
    }
}
