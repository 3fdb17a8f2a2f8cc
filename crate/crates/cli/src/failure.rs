use std::fmt;
use std::path::Path;

use lasiq_core::Error as CoreError;

/// Exit codes. Clap's own usage errors exit with 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    StageFailed = 1,
    UnknownStage = 3,
    MissingInput = 4,
    SchemaMismatch = 5,
}

#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(exit: Exit, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            exit,
            error: error.into(),
        }
    }

    pub fn stage(error: impl Into<anyhow::Error>) -> Self {
        Self::new(Exit::StageFailed, error)
    }

    pub fn schema(error: impl Into<anyhow::Error>) -> Self {
        Self::new(Exit::SchemaMismatch, error)
    }

    pub fn missing(path: &Path) -> Self {
        Self::new(
            Exit::MissingInput,
            anyhow::anyhow!("input not found: {}", path.display()),
        )
    }

    pub fn context(self, msg: impl fmt::Display) -> Self {
        Failure {
            exit: self.exit,
            error: self.error.context(msg.to_string()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

/// Library errors: malformed input files are schema mismatches, missing
/// files are missing inputs, everything else is a stage failure.
impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let exit = match &e {
            CoreError::Parse { .. } | CoreError::Validation(_) => Exit::SchemaMismatch,
            CoreError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                Exit::MissingInput
            }
            _ => Exit::StageFailed,
        };
        Failure::new(exit, e)
    }
}

pub type CliResult<T> = Result<T, Failure>;
