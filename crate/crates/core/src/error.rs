use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the evaluation engine.
///
/// Variants fall in two families: validation problems with the inputs
/// (bad values, broken invariants, malformed records) and I/O failures.
/// [`Error::is_io`] tells them apart so the CLI can map them to exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty evaluation set")]
    EmptyEvaluationSet,

    #[error(
        "division by zero: set α>0 or filter zero-count videos (video '{video_id}' has gt_count 0 with α=0)"
    )]
    DivisionByZero { video_id: String },

    #[error("duplicate video_id '{0}'")]
    DuplicateVideoId(String),

    #[error("invalid {field}: {reason}")]
    InvalidValue { field: &'static str, reason: String },

    #[error("track '{video_id}' too short: {frames} frames < window size {window_size} (enable pad_short to pad)")]
    TrackTooShort {
        video_id: String,
        frames: usize,
        window_size: usize,
    },

    #[error("alpha {alpha}: {source}")]
    AtAlpha {
        alpha: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidValue {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn in_file(path: impl Into<PathBuf>, source: Error) -> Self {
        Error::InFile {
            path: path.into(),
            source: Box::new(source),
        }
    }

    /// True when the error originates from the filesystem or a stream
    /// rather than from invalid data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::InFile { source, .. } | Error::AtAlpha { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
