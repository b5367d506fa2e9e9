use std::io;

use thiserror::Error;

use crate::experiment::CalibrationTable;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum MsdError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// No grid point kept the empirical FWER at or below the target level.
    #[error("calibration failed: no c1 in the grid keeps the empirical FWER at or below {alpha}")]
    Calibration { alpha: f64, table: CalibrationTable },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, MsdError>;

pub(crate) fn invalid(msg: impl Into<String>) -> MsdError {
    MsdError::InvalidArgument(msg.into())
}
