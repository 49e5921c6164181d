use pat_core::data::DataError;
use pat_core::detector::DetectorError;
use pat_core::frame::FrameError;
use pat_core::metrics::MetricsError;
use pat_core::perturb::PerturbError;
use std::path::Path;
use thiserror::Error;

/// Command failure, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or parameter values (exit 2).
    #[error("configuration error: {0}")]
    Config(String),
    /// Missing, unreadable or malformed input data (exit 3).
    #[error("data error: {0}")]
    Data(String),
    /// A result violated an internal invariant (exit 4).
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<PerturbError> for CliError {
    fn from(e: PerturbError) -> Self {
        match e {
            PerturbError::Frame(f) => CliError::Data(f.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<DetectorError> for CliError {
    fn from(e: DetectorError) -> Self {
        match e {
            DetectorError::InvalidConfig(_) | DetectorError::InvalidArchitecture(_) => {
                CliError::Config(e.to_string())
            }
            DetectorError::NonFiniteWeights | DetectorError::ParamShape => {
                CliError::Internal(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<FrameError> for CliError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::ZeroThreshold => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::ZeroThreshold => CliError::Config(e.to_string()),
            MetricsError::MalformedCurve(_) | MetricsError::NonFiniteScore(_) => {
                CliError::Internal(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
