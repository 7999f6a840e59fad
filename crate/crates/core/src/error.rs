use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed {format} data: {message}")]
    Format {
        format: &'static str,
        message: String,
    },

    #[error("unsupported audio: {0}")]
    Audio(String),

    #[error("unalignable: no path reaches the last token (audio/text mismatch)")]
    Unalignable,

    #[error("audio shorter than one frame ({samples} samples, {samples_per_frame} per frame)")]
    AudioTooShort {
        samples: usize,
        samples_per_frame: usize,
    },

    #[error("block {block}: {message}")]
    Block { block: usize, message: String },

    #[error("insufficient utterances: need at least {needed}, got {got}")]
    InsufficientUtterances { needed: usize, got: usize },

    #[error(
        "infeasible trial request: asked {requested_target} target / {requested_nontarget} nontarget, \
         at most {max_target} target / {max_nontarget} nontarget available"
    )]
    InfeasibleTrials {
        requested_target: usize,
        requested_nontarget: usize,
        max_target: usize,
        max_nontarget: usize,
    },

    #[error("scores contain a single class; need at least one target and one nontarget")]
    SingleClass,

    #[error("conflicting text for utterance ids: {}", .0.join(", "))]
    ConflictingText(Vec<String>),

    #[error("no eligible videos: no utterance scores above {0}")]
    NoEligibleVideos(f64),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn with_path(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
