use std::path::PathBuf;

use thiserror::Error;

/// Failure of a subcommand, carrying its process exit code.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type LabResult<T> = Result<T, LabError>;

impl LabError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        LabError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Validation { .. } => 2,
            LabError::Io { .. } => 3,
            LabError::Numeric(_) => 4,
        }
    }
}

impl From<o2o_core::Error> for LabError {
    fn from(e: o2o_core::Error) -> Self {
        match e {
            o2o_core::Error::Numeric { .. } => LabError::Numeric(e.to_string()),
            o2o_core::Error::InvalidInput(m) => LabError::validation("input", m),
            o2o_core::Error::Composition { buffer } => {
                LabError::validation("buffer", format!("`{buffer}` is empty"))
            }
        }
    }
}
