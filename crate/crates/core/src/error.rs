use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the localization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("point is behind the camera (depth {depth:e})")]
    BehindCamera { depth: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("ambiguous rotation average (eigenvalue gap {gap:e})")]
    AmbiguousAverage { gap: f64 },
    #[error("no consensus: {0}")]
    NoConsensus(String),
    #[error("ambiguous cheirality: {count} positive-depth votes shared by several candidates")]
    AmbiguousCheirality { count: usize },
    #[error("no candidate pose places any point in front of both cameras")]
    NoValidPose,
    #[error("initialization error: {0}")]
    Init(String),
    #[error("optimization diverged: {0}")]
    Divergence(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
