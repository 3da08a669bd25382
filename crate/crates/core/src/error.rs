use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point lies behind the camera (z = {z}, z_min = {z_min})")]
    BehindCamera { z: f64, z_min: f64 },

    #[error("invalid rotation matrix: {0}")]
    InvalidRotation(String),

    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("joint q{joint} = {value} outside [{min}, {max}]")]
    JointOutOfRange {
        joint: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid tool model at {path}: {msg}")]
    InvalidModel { path: String, msg: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("render cache is stale: cache holds {cached} gaussians, got {given}")]
    StaleCache { cached: usize, given: usize },

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("mask has no foreground pixels")]
    EmptyMask,

    #[error("every coarse candidate diverged")]
    AllCandidatesDiverged,

    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFiniteLoss { iteration: usize, detail: String },

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("canonical fitting needs at least 2 views, got {0}")]
    InsufficientViews(usize),

    #[error("trajectory length mismatch: {est} vs {gt}")]
    LengthMismatch { est: usize, gt: usize },

    #[error("frame index mismatch at record {position}: {est} vs {gt}")]
    IndexMismatch { position: usize, est: u64, gt: u64 },

    #[error("empty input")]
    EmptyInput,

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("image error for {}: {msg}", path.display())]
    Image { path: PathBuf, msg: String },

    #[error("io error for {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Coarse classification used by the command-line front end.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonFiniteLoss { .. } | Error::AllCandidatesDiverged => ErrorKind::Numerical,
            Error::Frame { source, .. } => source.kind(),
            Error::InvalidConfig(_) | Error::InvalidSpec(_) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
