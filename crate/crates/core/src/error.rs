use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed volume descriptor {path}: {message}")]
    Descriptor { path: PathBuf, message: String },

    #[error("size mismatch: brick {path} holds {actual} bytes, expected {expected}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("invalid volume: {0}")]
    Volume(String),

    #[error("invalid transfer function: {0}")]
    TransferFunction(String),

    #[error("frame {frame} out of range for timeline of {length} frames")]
    FrameOutOfRange { frame: u32, length: u32 },

    #[error("invalid timeline: {0}")]
    Timeline(String),

    #[error("unknown node {0}")]
    UnknownNode(u32),

    #[error("duplicate node {0}")]
    DuplicateNode(u32),

    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(u32),

    #[error("metadata line {line}: {message}")]
    Metadata { line: usize, message: String },

    #[error("invalid roadmap: {0}")]
    InvalidRoadmap(String),

    #[error("no edges")]
    NoEdges,

    #[error("encoder configuration: {0}")]
    EncoderConfig(String),

    #[error("encoder failed to start: {0}")]
    EncoderSpawn(#[source] std::io::Error),

    #[error("encoder exited with {status}: {stderr}")]
    EncoderFailed { status: String, stderr: String },

    #[error("manifest has no entry for edge {0}")]
    MissingEdge(u32),

    #[error("script line {line}: {message}")]
    Script { line: usize, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
