use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("utterance {utterance}: non-finite value at frame {frame}, dimension {dim}")]
    NonFinite {
        utterance: String,
        frame: usize,
        dim: usize,
    },

    #[error("utterance {utterance}: dimension {found} does not match corpus dimension {expected}")]
    DimensionMismatch {
        utterance: String,
        expected: usize,
        found: usize,
    },

    #[error("duplicate utterance id {0}")]
    DuplicateUtterance(String),

    #[error("unknown utterance {0}")]
    UnknownUtterance(String),

    #[error("invalid alignment: {0}")]
    InvalidAlignment(String),

    #[error("vector dimension mismatch: {0} vs {1}")]
    VectorDim(usize, usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("CMVN group {group} has a single frame")]
    SingleFrameGroup { group: String },

    #[error("cannot normalize an all-zero embedding without noise")]
    ZeroEmbedding,

    #[error("Gram matrix is singular (condition estimate {condition:.3e})")]
    SingularGram { condition: f64 },

    #[error("eigen decomposition failed: {0}")]
    Eigen(String),

    #[error("segment {utterance}:{start}-{end}: {message}")]
    Segment {
        utterance: String,
        start: usize,
        end: usize,
        message: String,
    },

    #[error("utterance {utterance}: no valid segmentation reaches position {position}")]
    NoPath { utterance: String, position: usize },

    #[error("cannot remove an item from empty component {0}")]
    EmptyComponent(usize),

    #[error("no evaluable pairs: {0}")]
    NoPairs(&'static str),

    #[error("infeasible prototype separation: requested {requested:.3}, achievable {achievable:.3}")]
    InfeasibleSeparation { requested: f64, achievable: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
