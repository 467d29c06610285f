use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("incommensurable grids: {0}")]
    Incommensurable(String),

    #[error(
        "quadrature did not converge on cell pair ({row}, {col}): error estimate {estimate:e} > tolerance {tolerance:e}"
    )]
    QuadratureNonConvergence {
        row: usize,
        col: usize,
        estimate: f64,
        tolerance: f64,
    },

    #[error("aliasing: {modes} eigenpairs need at least {required} cells, got {n_fine}")]
    Aliasing {
        modes: usize,
        n_fine: usize,
        required: usize,
    },

    #[error("non-finite value in cell {cell} at step {step}")]
    NonFinite { cell: usize, step: usize },

    #[error("resolution mismatch: expected {expected} cells, got {found}")]
    ResolutionMismatch { expected: usize, found: usize },

    #[error("unbounded kernel: non-finite sample at ({x}, {y})")]
    UnboundedKernel { x: f64, y: f64 },

    #[error("trial {trial} failed (replay seed {seed}): {source}")]
    Trial {
        trial: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
