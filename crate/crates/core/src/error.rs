use thiserror::Error;

/// Errors raised by the geometric operators and file codecs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value for `{field}`: {value}")]
    NonFinite { field: &'static str, value: f64 },

    #[error("degenerate box: w={w}, h={h} (both extents must be > 0)")]
    DegenerateBox { w: f64, h: f64 },

    #[error("invalid rectangle: ({x1}, {y1}, {x2}, {y2})")]
    InvalidRect { x1: f64, y1: f64, x2: f64, y2: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("empty ground-truth list")]
    EmptyGroundTruth,

    #[error("scene spec unsatisfiable: could not place box {index} after {attempts} attempts")]
    Unsatisfiable { index: usize, attempts: usize },

    #[error("malformed {format} data: {reason}")]
    Format {
        format: &'static str,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_finite(field: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { field, value })
    }
}
