use cte_core::CteError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    /// An upstream artifact is missing; `stage` is the one to run first.
    #[error("missing {artifact}: run `cte {stage}` first")]
    Dependency { stage: &'static str, artifact: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Core(#[from] CteError),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// 2 config, 3 dependency, 4 numeric, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Dependency { .. } => 3,
            CliError::Numeric(_) | CliError::Core(CteError::Numeric(_)) => 4,
            CliError::Core(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(CteError::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(CteError::Json(e))
    }
}
