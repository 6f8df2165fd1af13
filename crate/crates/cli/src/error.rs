use std::io;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    MissingFile { path: PathBuf, source: io::Error },

    #[error("{context}: {detail}")]
    Schema { context: String, detail: String },

    #[error(transparent)]
    Core(#[from] tubalsr::Error),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Process exit codes. 0 is success; clap's own `--help`/`--version` also
/// exit 0.
pub mod exit {
    pub const USAGE: i32 = 2;
    pub const MISSING_FILE: i32 = 3;
    pub const SCHEMA: i32 = 4;
    pub const INVALID_INPUT: i32 = 5;
    pub const SOLVER: i32 = 6;
    pub const MALFORMED_FILE: i32 = 7;
    pub const IO: i32 = 8;
}

/// Body of the JSON object written to stderr on failure.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: &'static str,
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn schema(context: impl Into<String>, detail: impl ToString) -> Self {
        CliError::Schema {
            context: context.into(),
            detail: detail.to_string(),
        }
    }

    pub fn kind(&self) -> (&'static str, i32) {
        use tubalsr::Error as E;
        match self {
            CliError::Usage(_) => ("usage", exit::USAGE),
            CliError::MissingFile { .. } => ("missing_file", exit::MISSING_FILE),
            CliError::Schema { .. } => ("schema", exit::SCHEMA),
            CliError::Core(e) => match e {
                E::InvalidArgument(_) | E::DimMismatch { .. } => ("invalid_input", exit::INVALID_INPUT),
                E::NonFinite(_) | E::ImaginaryResidual(_) | E::Zero(_) | E::Singular(_) | E::Diverged(_) => {
                    ("solver", exit::SOLVER)
                }
                E::Format(_) | E::Json(_) | E::Csv(_) => ("malformed_file", exit::MALFORMED_FILE),
                E::Io(io) if io.kind() == io::ErrorKind::NotFound => ("missing_file", exit::MISSING_FILE),
                E::Io(_) => ("io", exit::IO),
            },
            CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => ("io", exit::IO),
        }
    }

    pub fn code(&self) -> i32 {
        self.kind().1
    }

    pub fn report(&self) -> ErrorReport {
        let (error, code) = self.kind();
        ErrorReport {
            error,
            code,
            message: self.to_string(),
        }
    }
}
