use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite input in {0}")]
    NonFiniteInput(&'static str),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate initialization: {0}")]
    DegenerateInit(String),
    #[error("invalid weights: {0}")]
    WeightError(String),
    #[error("rank error: {0}")]
    RankError(String),
    #[error("degenerate state: {0}")]
    Degenerate(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("grid shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty patch grid")]
    EmptyGrid,
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("invalid decision rule: {0}")]
    InvalidRule(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(PathBuf),
    #[error("corrupt image {path}: {reason}")]
    CorruptImage { path: PathBuf, reason: String },
    #[error("downsample target {target_w}x{target_h} exceeds source {width}x{height}")]
    UpsampleRequested {
        width: usize,
        height: usize,
        target_w: usize,
        target_h: usize,
    },
    #[error("no valid patch placement")]
    NoValidPlacement,
    #[error("image {width}x{height} too small for patch size {size}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        size: usize,
    },
    #[error("class {0} has no patches")]
    EmptyClass(usize),
    #[error("invalid synthetic spec: {0}")]
    DimensionError(String),
    #[error("model file version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model file checksum mismatch")]
    ChecksumFailure,
    #[error("malformed model file: {0}")]
    CorruptModel(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("manifest error at line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("data error: {0}")]
    Data(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
