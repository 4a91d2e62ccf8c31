use std::path::PathBuf;

use paraxial_core::ErrorKind;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}:{column}: {message}")]
    Config {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Validation(String),

    #[error("scenario mismatch: trace summary is {trace:?} ({trace_hash}), probes are {probes:?} ({probes_hash})")]
    ScenarioMismatch {
        trace: String,
        trace_hash: String,
        probes: String,
        probes_hash: String,
    },

    #[error("{0} check(s) failed: {1}")]
    CheckFailed(usize, String),

    #[error(transparent)]
    Core(#[from] paraxial_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. }
            | CliError::Validation(_)
            | CliError::ScenarioMismatch { .. } => EXIT_VALIDATION,
            CliError::CheckFailed(..) => EXIT_CHECK_FAILED,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Validation => EXIT_VALIDATION,
                ErrorKind::Numerical => EXIT_NUMERICAL,
                ErrorKind::Io => EXIT_IO,
            },
            CliError::Io { .. } => EXIT_IO,
        }
    }
}
