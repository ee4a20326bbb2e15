use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: unknown category {category:?}")]
    UnknownCategory { line: usize, category: String },

    #[error("line {line}: frame dimensions must be positive (got {width}x{height})")]
    FrameDimensions { line: usize, width: u32, height: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty video")]
    EmptyVideo,

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("category index {0} is outside the configured category list")]
    CategoryOutOfRange(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("fusion mismatch at video {video_id:?}: {msg}")]
    FusionMismatch { video_id: String, msg: String },

    #[error("classification: {0}")]
    Classify(String),

    #[error("video {video_id:?}{}: {source}", frame_index.map(|k| format!(", frame {k}")).unwrap_or_default())]
    InVideo {
        video_id: String,
        frame_index: Option<u64>,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn in_video(self, video_id: &str, frame_index: Option<u64>) -> Self {
        Error::InVideo {
            video_id: video_id.to_owned(),
            frame_index,
            source: Box::new(self),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
