use thiserror::Error;

use crate::model::{SketchId, SourceId, WindowId};

/// Errors raised by the engine and its building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("snippet window {snippet} does not match sketch window {sketch}")]
    WindowMismatch { snippet: WindowId, sketch: WindowId },

    #[error("source mismatch: expected {expected}, found {found}")]
    SourceMismatch { expected: SourceId, found: SourceId },

    #[error("child sketch in window {window} falls outside span {span} of length {span_len}")]
    SpanViolation {
        window: WindowId,
        span: i64,
        span_len: u32,
    },

    #[error("sketches share window {0}; same-window sketches are merged, not linked")]
    SameWindow(WindowId),

    #[error("cannot compare sketches of different hierarchy levels")]
    LevelMismatch,

    #[error("cluster has no top-level sketches")]
    EmptyCluster,

    #[error("sketch {1} of source {0} is already indexed")]
    DuplicateId(SourceId, SketchId),

    #[error("sketch {1} of source {0} is not indexed")]
    UnknownId(SourceId, SketchId),

    #[error("edge endpoints {0} and {1} lie in the same window")]
    WindowConflict(SketchId, SketchId),

    #[error("unknown cluster {0}")]
    UnknownCluster(String),

    #[error("unknown source {0}")]
    UnknownSource(SourceId),

    #[error("source {0} is already registered")]
    DuplicateSource(SourceId),

    #[error("engine is already running")]
    AlreadyRunning,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("missing assignment for {} snippet(s): {}", .0.len(), .0.join(", "))]
    MissingAssignment(Vec<String>),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Parse { .. }
            | Error::InvalidSpec(_)
            | Error::MissingAssignment(_)
            | Error::UnknownSource(_)
            | Error::DuplicateSource(_) => 1,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
