use std::io;

use crate::gop::FrameType;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corrupt bitstream: {0}")]
    Corrupt(String),

    #[error("trace has no entry for frame {t}, ref {reference}, type {frame_type}")]
    MissingTraceEntry {
        t: usize,
        reference: i64,
        frame_type: FrameType,
    },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("backend did not answer within {0:?}")]
    Timeout(std::time::Duration),

    #[error("training diverged at step {step}")]
    Diverged { step: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures that originate in a codec backend rather than in
    /// caller-supplied data.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            Error::Backend(_) | Error::Timeout(_) | Error::MissingTraceEntry { .. }
        )
    }
}
