use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate configuration: {0}")]
    DegenerateConfig(String),

    #[error("placement out of bounds: {0}")]
    OutOfBounds(String),

    #[error("resample budget exhausted after {} attempts: {}", .attempts.len(), .attempts.join("; "))]
    ResampleExhausted { attempts: Vec<String> },

    #[error("AUROC undefined: only one class present ({positives} positives, {negatives} negatives)")]
    SingleClass { positives: usize, negatives: usize },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("corrupt or undecodable image {}: {reason}", .path.display())]
    CorruptImage { path: PathBuf, reason: String },

    #[error("unsupported image format in {}: {detail}", .path.display())]
    UnsupportedFormat { path: PathBuf, detail: String },

    #[error("unsupported bit depth in {}: {detail}", .path.display())]
    UnsupportedBitDepth { path: PathBuf, detail: String },

    #[error("i/o error at {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to encode {}: {reason}", .path.display())]
    Encode { path: PathBuf, reason: String },

    #[error("malformed record in {} at line {line}: {reason}", .path.display())]
    Parse { path: PathBuf, line: u64, reason: String },

    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
