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

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("gap in tracklet {id}: frame {after} followed by {next}")]
    TrackletGap { id: u64, after: u32, next: u32 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("inadmissible link: frame gap {gap} outside [1, {f_max}]")]
    InadmissibleLink { gap: i64, f_max: u32 },

    #[error("oracle refused: {nodes} nodes exceeds the limit of {limit}")]
    OracleTooLarge { nodes: usize, limit: usize },

    #[error("labeling covers {labeled} of {expected} tracks")]
    PartialLabeling { labeled: usize, expected: usize },

    #[error("cannot split {items} tracks into {k} clusters")]
    InvalidClusterCount { k: usize, items: usize },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("duplicate box for id {id} at frame {frame}")]
    DuplicateBox { frame: u32, id: u64 },

    #[error(
        "batch spans do not overlap: previous ends at {prev_last}, next starts at {next_first}"
    )]
    BatchSpan { prev_last: u32, next_first: u32 },

    #[error("internal error: {0}")]
    Internal(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (files, flags, configuration)
    /// rather than by a failure inside the tracker.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Config(_)
                | Error::TrackletGap { .. }
                | Error::InvalidInput(_)
                | Error::DuplicateBox { .. }
                | Error::UnknownPreset(_)
        )
    }
}
