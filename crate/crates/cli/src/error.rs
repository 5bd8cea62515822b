use std::path::PathBuf;

use netac::ValidationReport;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("expression error at {path}, position {position}: {message}")]
    ExpressionParseError { path: String, position: usize, message: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("validation failed: {}", failed_names(.0))]
    ValidationFailed(Box<ValidationReport>),
    #[error(transparent)]
    Core(#[from] netac::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn failed_names(r: &ValidationReport) -> String {
    r.failed().map(|c| c.name.as_str()).collect::<Vec<_>>().join(", ")
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ValidationFailed(_) => 1,
            _ => 2,
        }
    }

    /// Short machine-readable label for log lines.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::FileNotFound(_) => "file_not_found",
            CliError::SchemaViolation { .. } => "schema_violation",
            CliError::ExpressionParseError { .. } => "expression_parse_error",
            CliError::InvalidConfig(_) => "invalid_config",
            CliError::ValidationFailed(_) => "validation_failed",
            CliError::Core(_) => "runtime_error",
            CliError::Io(_) | CliError::Csv(_) => "io_error",
            CliError::Json(_) => "json_error",
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
