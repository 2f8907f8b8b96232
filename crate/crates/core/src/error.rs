use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// The flow-equation logarithm argument fell to (or below) the spinodal bound.
    #[error("spinodal reached at q = {position:?}, scale = {scale:e} (log argument {argument:e})")]
    Spinodal {
        position: Option<f64>,
        scale: f64,
        argument: f64,
    },

    #[error("flow did not converge (stop reason: {0})")]
    NotConverged(String),

    #[error("invalid observables: {0}")]
    InvalidObservables(String),

    #[error("eigensolver failed to converge: {0}")]
    NoConvergence(String),

    #[error("box too small: ground-state density at the wall is {density:e}")]
    BoxTooSmall { density: f64 },

    #[error(
        "unstable finite difference: estimates {coarse} and {fine} differ by {relative:e} relative"
    )]
    UnstableDifference {
        coarse: f64,
        fine: f64,
        relative: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("config parse error in {source_name}: {message}")]
    Parse {
        source_name: String,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
