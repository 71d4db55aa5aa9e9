use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure class, used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Io,
    Validation,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),

    #[error("unsupported dtype {0}")]
    UnsupportedDtype(u8),

    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    PayloadSizeMismatch { expected: usize, found: usize },

    #[error("invalid boolean payload byte {byte:#04x} at offset {offset}")]
    InvalidBoolByte { byte: u8, offset: usize },

    #[error("unexpected end of checkpoint")]
    UnexpectedEndOfCheckpoint,

    #[error("checkpoint tensor count mismatch: header says {declared}, found {found}")]
    TensorCountMismatch { declared: usize, found: usize },

    #[error("checkpoint checksum mismatch: trailer says {declared}, payload is {actual} bytes")]
    ChecksumMismatch { declared: u64, actual: u64 },

    #[error("incompatible tensors: {0:?}")]
    IncompatibleTensors(Vec<String>),

    #[error("schema error at key \"{0}\"")]
    Schema(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no components")]
    NoComponents,

    #[error("empty volume")]
    EmptyVolume,

    #[error("coordinate {0:?} outside volume of dims {1:?}")]
    OutOfBounds([i64; 3], [usize; 3]),

    #[error("phantom out of bounds")]
    PhantomOutOfBounds,

    #[error("no eligible branch")]
    NoEligibleBranch,

    #[error("keypoint separation infeasible: {0}")]
    InfeasibleSeparation(String),

    #[error("carve produced invalid topology: {0}")]
    InvalidTopology(String),

    #[error("backward called before forward")]
    BackwardBeforeForward,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io(_)
            | Error::MalformedHeader(_)
            | Error::UnsupportedVersion(_)
            | Error::UnsupportedDtype(_)
            | Error::PayloadSizeMismatch { .. }
            | Error::InvalidBoolByte { .. }
            | Error::UnexpectedEndOfCheckpoint
            | Error::TensorCountMismatch { .. }
            | Error::ChecksumMismatch { .. }
            | Error::Schema(_)
            | Error::Json(_) => ErrorClass::Io,
            Error::InvalidArgument(_) => ErrorClass::Usage,
            Error::NonFinite(_) | Error::ShapeMismatch(_) | Error::BackwardBeforeForward => {
                ErrorClass::Numeric
            }
            _ => ErrorClass::Validation,
        }
    }
}
