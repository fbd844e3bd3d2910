use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum CteError {
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("index ({row}, {col}) out of bounds for a {rows}x{cols} tile grid")]
    Bounds { row: usize, col: usize, rows: usize, cols: usize },
    #[error("no affordance mapping for symbol(s): {0}")]
    MissingMapping(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension { context: String, expected: String, got: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("input is not a probability vector: {0}")]
    Normalization(String),
    #[error("score undefined: {0}")]
    UndefinedScore(String),
    #[error("clustering tuning failed: {0}")]
    TuningFailure(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("unsupported in this output mode: {0}")]
    Mode(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("image error: {0}")]
    Image(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CteError> = std::result::Result<T, E>;

impl CteError {
    pub(crate) fn dim(context: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        CteError::Dimension { context: context.into(), expected: expected.to_string(), got: got.to_string() }
    }
}

impl From<image::ImageError> for CteError {
    fn from(e: image::ImageError) -> Self {
        CteError::Image(e.to_string())
    }
}
