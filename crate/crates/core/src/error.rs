use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library reports.
///
/// Variants are grouped by the exit code the command line harness maps
/// them to: configuration problems, data problems and numeric failures.
#[derive(Debug, Error)]
pub enum Error {
    // audio / dataset ingestion
    #[error("malformed WAV data: {0}")]
    Format(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedFormat(String),
    #[error("truncated WAV data chunk: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("unparsable dataset entries (expected `{{fold}}-{{id}}-{{take}}-{{target}}.wav` or a CSV index): {}", .0.join(", "))]
    Manifest(Vec<String>),
    #[error("dataset directory {0} contains no WAV files")]
    EmptyDataset(PathBuf),
    #[error("{path}: sample rate {found} Hz does not match the configured {expected} Hz")]
    SampleRate {
        path: String,
        expected: u32,
        found: u32,
    },

    // feature extraction
    #[error("window {window} needs {needed} samples but the clip has {available}")]
    WindowOutOfRange {
        window: usize,
        needed: usize,
        available: usize,
    },
    #[error("invalid band ({low} Hz, {high} Hz): {reason}")]
    InvalidBand { low: f64, high: f64, reason: String },
    #[error("band ({low} Hz, {high} Hz) is too narrow for the requested filters; no FFT bin falls inside filters {filters:?}")]
    DegenerateBand {
        low: f64,
        high: f64,
        filters: Vec<usize>,
    },
    #[error("delta features need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("feature extraction failed for {} file(s): {}", .0.len(), .0.join("; "))]
    Extraction(Vec<String>),
    #[error("normalization statistics: {0}")]
    Stats(String),

    // tensors and training
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid label vector: {0}")]
    Label(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    // fusion and evaluation
    #[error("weight search: {0}")]
    Search(String),
    #[error("metric: {0}")]
    Metric(String),

    #[error("configuration: {0}")]
    Config(String),
    #[error("feature cache: {0}")]
    Cache(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidBand { .. }
            | Error::DegenerateBand { .. }
            | Error::Config(_)
            | Error::Shape(_)
            | Error::State(_) => ErrorClass::Config,
            Error::NonFinite(_) => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}

pub(crate) trait IoContext<T> {
    fn ctx(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn ctx(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| Error::io(context(), e))
    }
}
