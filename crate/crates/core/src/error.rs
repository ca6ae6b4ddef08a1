use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library. Each variant maps to one named failure of
/// a public operation; [`Error::name`] gives the stable identifier used in
/// command-line diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("cannot decode {}: {reason}", path.display())]
    Decode { path: PathBuf, reason: String },

    #[error("image has a zero dimension ({width}x{height})")]
    EmptyImage { width: u32, height: u32 },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("probability value {value} at pixel {index} is outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f32 },

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("length mismatch: {left} predictions vs {right} ground truths")]
    LengthMismatch { left: usize, right: usize },

    #[error("initial prediction has no crack pixels")]
    EmptyPrediction,

    #[error("no thresholds to aggregate")]
    EmptyInput,

    #[error("manifest entry {id}: {reason}")]
    Manifest { id: String, reason: String },

    #[error("image {} has no matching mask", .0.display())]
    MissingMask(PathBuf),

    #[error("no prediction for entry {0}")]
    MissingPrediction(String),

    #[error("entry {0} is not in the train split")]
    NonTrainEntries(String),

    #[error("{}:{line}: {reason}", path.display())]
    Parse { path: PathBuf, line: u64, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn name(&self) -> &'static str {
        match self {
            Error::FileNotFound(_) => "FileNotFound",
            Error::Decode { .. } => "DecodeError",
            Error::EmptyImage { .. } => "EmptyImage",
            Error::InvalidRaster(_) => "InvalidRaster",
            Error::ValueOutOfRange { .. } => "ValueOutOfRange",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::EmptyPrediction => "EmptyPrediction",
            Error::EmptyInput => "EmptyInput",
            Error::Manifest { .. } => "ManifestError",
            Error::MissingMask(_) => "MissingMask",
            Error::MissingPrediction(_) => "MissingPrediction",
            Error::NonTrainEntries(_) => "NonTrainEntries",
            Error::Parse { .. } => "ParseError",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io { .. } => "IoError",
        }
    }

    /// Maps a read-side I/O failure, turning `NotFound` into [`Error::FileNotFound`].
    pub(crate) fn read_io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path)
        } else {
            Error::Io { path, source }
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn write_io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
    Error::Io {
        path: path.into(),
        source,
    }
}
