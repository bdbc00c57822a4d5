use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("night too short: {duration_s:.1} s (need at least 30 s)")]
    NightTooShort { duration_s: f64 },

    #[error("segment length mismatch: expected {expected} samples, got {got}")]
    SegmentLength { expected: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("insufficient valid data: {0}")]
    InsufficientData(String),

    #[error("window [{start_s:.1}, {end_s:.1}] s outside trace [{trace_start_s:.1}, {trace_end_s:.1}] s")]
    WindowOutsideTrace {
        start_s: f64,
        end_s: f64,
        trace_start_s: f64,
        trace_end_s: f64,
    },

    #[error("no estimable events: {0}")]
    NoEvents(String),

    #[error("unsupported sample rate: {0} Hz (expected 16000)")]
    UnsupportedSampleRate(u32),

    #[error("unsupported wav: {0}")]
    UnsupportedWav(String),

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("manifest schema: {0}")]
    Schema(String),

    #[error("non-positive sleep time: {0} h")]
    NonPositiveSleepTime(f64),

    #[error("fewer groups than folds: {groups} patient groups, {folds} folds")]
    TooFewGroups { groups: usize, folds: usize },

    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
