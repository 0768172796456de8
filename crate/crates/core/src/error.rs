use std::path::PathBuf;

/// Errors produced by every stage of the onset-detection pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("sample-count mismatch: header declares {expected} values, payload holds {found}")]
    SampleCountMismatch { expected: usize, found: usize },

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("unknown neighbor channel {neighbor:?} listed for {channel:?}")]
    UnknownNeighbor { channel: String, neighbor: String },

    #[error("invalid recording: {0}")]
    InvalidRecording(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("incompatible recordings: {0}")]
    Incompatible(String),

    #[error("unstable filter: pole magnitude {0} is outside the unit circle")]
    UnstableFilter(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("constant series for channel {channel}, scale {scale}: cannot fit a quantizer range")]
    ConstantSeries { channel: usize, scale: usize },

    #[error("level {level} out of range for {levels} levels")]
    LevelOutOfRange { level: usize, levels: usize },

    #[error("input row {0} is not a one-hot vector")]
    NotOneHot(usize),

    #[error("probability row {row} sums to {sum}, expected 1")]
    NotNormalized { row: usize, sum: f64 },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("threshold not tuned")]
    ThresholdNotTuned,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
