use thiserror::Error;

/// Errors raised by the simulator and its analysis tools.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("field length {found} does not match grid point count {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("fixed-point iteration did not converge after {iterations} iterations (last update {last_update:e}, tolerance {tolerance:e})")]
    FixedPointDivergence {
        iterations: usize,
        last_update: f64,
        tolerance: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration errors:\n{}", .0.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<String>),

    #[error("unknown preset `{name}`; available presets: {}", .available.join(", "))]
    UnknownPreset {
        name: String,
        available: Vec<&'static str>,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
