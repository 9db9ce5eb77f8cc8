//! Error taxonomy mapped onto process exit codes.

use std::fmt;
use std::path::Path;

use priornet_core::model::WeightFormatError;
use priornet_core::tensor::TensorError;

/// Exit codes: 1 usage, 2 I/O, 3 format, 4 numerical abort.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Format(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Format(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> CliError {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    pub fn format(path: &Path, what: impl fmt::Display) -> CliError {
        CliError::Format(format!("{}: {what}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Io(msg) => write!(f, "i/o: {msg}"),
            CliError::Format(msg) => write!(f, "format: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Core errors surface as usage problems except the training abort.
pub fn from_tensor(err: TensorError) -> CliError {
    match err {
        TensorError::NonFiniteLoss { .. } => CliError::Numerical(err.to_string()),
        other => CliError::Usage(other.to_string()),
    }
}

pub fn from_weight_format(path: &Path, err: WeightFormatError) -> CliError {
    CliError::format(path, err)
}
