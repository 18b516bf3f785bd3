use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("scores unavailable: task {task} has no validation score yet")]
    ScoresUnavailable { task: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {what} (expected {expected}, got {actual})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite gradient at index {index}: {value}")]
    NonFiniteGradient { index: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("layout mismatch between checkpoints")]
    LayoutMismatch,

    /// Carries the metric log recorded before the failure.
    #[error("training diverged at step {step} on task {task}: loss {loss}")]
    Diverged {
        step: u64,
        task: usize,
        loss: f64,
        partial: Vec<crate::task::MetricRecord>,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short stable identifier, used in machine-readable error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ScoresUnavailable { .. } => "scores-unavailable",
            Error::InvalidConfig(_) => "invalid-config",
            Error::Empty(_) => "empty-input",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::NonFiniteGradient { .. } => "non-finite-gradient",
            Error::Dimension(_) => "dimension-mismatch",
            Error::LayoutMismatch => "layout-mismatch",
            Error::Diverged { .. } => "diverged",
            Error::Format { .. } => "malformed-file",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
