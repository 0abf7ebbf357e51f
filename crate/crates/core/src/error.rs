use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the harness itself, as opposed to faults of the
/// candidate programs it runs.
#[derive(Error, Debug)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {source}")]
    Record {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("ingest error in {path}: {message}")]
    Ingest { path: PathBuf, message: String },

    #[error("invalid problem {id}: {message}")]
    InvalidProblem { id: String, message: String },

    #[error("duplicate problem id {0}")]
    DuplicateProblem(String),

    #[error("unknown problem id {0}")]
    UnknownProblem(String),

    #[error(transparent)]
    Sandbox(#[from] crate::sandbox::SandboxError),

    #[error(transparent)]
    Comment(#[from] crate::comment::CommentError),

    #[error(transparent)]
    Editor(#[from] crate::editor::EditorError),

    #[error(transparent)]
    Backend(#[from] crate::generator::BackendError),

    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },

    #[error("{0}")]
    Manifest(String),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
