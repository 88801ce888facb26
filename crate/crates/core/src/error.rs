use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("empty input sequence")]
    EmptySequence,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("tape does not match parameters: {0}")]
    TapeMismatch(String),

    #[error("unsupported model file version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("model validation failed: {0}")]
    Validation(String),

    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("channel `{0}` has no samples")]
    MissingChannel(String),

    #[error("no positive examples for task {0}")]
    NoPositives(String),

    #[error("need at least 3 sessions to split, got {0}")]
    TooFewSessions(usize),

    #[error("infeasible event schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("curve binning mismatch: {0}")]
    BinningMismatch(String),

    #[error("session too short: {frames} frames, window needs {window}")]
    SessionTooShort { frames: usize, window: usize },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::Shape {
        op,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
