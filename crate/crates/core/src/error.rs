use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} {value} outside supported range [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("need ≥ {needed} events, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("{what} not strictly increasing at index {index}")]
    Ordering { what: &'static str, index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pressure {pressure:.3} mbar at t = {time:.6} s leaves the calibrated range [{min}, {max}] mbar")]
    PressureExcursion {
        time: f64,
        pressure: f64,
        min: f64,
        max: f64,
    },

    #[error("sequence length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("non-uniform sampling at sample index {index}")]
    NonUniformSampling { index: usize },

    #[error("{what} not found: {}", path.display())]
    NotFound { what: &'static str, path: PathBuf },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input files or configuration rather
    /// than by the model itself.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::NonUniformSampling { .. }
            | Error::NotFound { .. }
            | Error::Config(_)
            | Error::Io(_) => true,
            Error::Stage { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}
