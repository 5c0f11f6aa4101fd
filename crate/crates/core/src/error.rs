use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type. Variant names double as the stable diagnostic
/// tokens emitted by the CLI, so they are kept in every message.
#[derive(Debug, Error)]
pub enum Error {
    #[error("MissingFile: {}", path.display())]
    MissingFile { path: PathBuf },

    #[error("IoFailure: {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("MalformedPgm: {}: {reason}", path.display())]
    MalformedPgm { path: PathBuf, reason: String },

    #[error("MalformedManifest: {}: {reason}", path.display())]
    MalformedManifest { path: PathBuf, reason: String },

    #[error("DimensionMismatch: {context}: expected {}x{}, got {}x{}", expected.0, expected.1, actual.0, actual.1)]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
        context: String,
    },

    #[error("EmptySequence: at least one frame is required")]
    EmptySequence,

    #[error("EmptySignal: at least one sample is required")]
    EmptySignal,

    #[error("BadTargetSize: requested {}x{} from {}x{}", requested.0, requested.1, available.0, available.1)]
    BadTargetSize {
        requested: (usize, usize),
        available: (usize, usize),
    },

    #[error("BadWindow: window {window} invalid for signal of length {len} (must be odd, 1..=len)")]
    BadWindow { window: usize, len: usize },

    #[error("BadConfig: {reason}")]
    BadConfig { reason: String },

    #[error("BadHyperparams: {reason}")]
    BadHyperparams { reason: String },

    #[error("BadLabel: label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },

    #[error("UnlabeledSample: training sample has no label")]
    UnlabeledSample,

    #[error("ShapeMismatch: {reason}")]
    ShapeMismatch { reason: String },

    #[error("EmptyInterval: interval selects no frames of the sequence")]
    EmptyInterval,

    #[error("EmptyDataset: at least one labeled window is required")]
    EmptyDataset,

    #[error("DegenerateSegment: {reason}")]
    DegenerateSegment { reason: String },

    #[error("EmptyGroundTruth: at least one ground-truth activity is required")]
    EmptyGroundTruth,

    #[error("MalformedCsv: {}: {reason}", path.display())]
    MalformedCsv { path: PathBuf, reason: String },

    #[error("BadBinaryFile: {}: {reason}", path.display())]
    BadBinaryFile { path: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile { path }
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn bad_config(reason: impl Into<String>) -> Self {
        Error::BadConfig {
            reason: reason.into(),
        }
    }
}
