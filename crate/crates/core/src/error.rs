//! Error type shared by every stage of the pipeline.

use std::path::PathBuf;
use thiserror::Error;

/// Coarse error category used for machine-readable CLI reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Geometry,
    Assembly,
    Solver,
    Io,
}

impl std::fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Geometry => "geometry",
            ErrorCategory::Assembly => "assembly",
            ErrorCategory::Solver => "solver",
            ErrorCategory::Io => "io",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate gradient at ({x}, {y}): |grad phi| = {norm:e}")]
    DegenerateGradient { x: f64, y: f64, norm: f64 },

    #[error("mesh subdivision counts must be at least 1 (got nx={nx}, ny={ny})")]
    ZeroCount { nx: usize, ny: usize },

    #[error("cell index {index} out of bounds for mesh with {cells} cells")]
    CellIndexOutOfBounds { index: usize, cells: usize },

    #[error("interface endpoint coincides with a cell vertex (snap tolerance too small)")]
    DegenerateCut,

    #[error("quadrature degree {0} unsupported (expected 1..=6)")]
    UnsupportedDegree(usize),

    #[error("porosity {0} outside [0, 1)")]
    PorosityOutOfRange(f64),

    #[error("invalid material: E = {e}, nu = {nu}")]
    InvalidMaterial { e: f64, nu: f64 },

    #[error("ghost penalty requested on boundary facet {0}")]
    BoundaryFacet(usize),

    #[error("inconsistent configuration: {0}")]
    ConfigInconsistency(String),

    #[error("reduced system is singular or semidefinite: {0}")]
    SingularSystem(String),

    #[error("matrix is not positive definite (pivot {pivot:e} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },

    #[error("iterative solver did not converge within {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Category used by the CLI exit path and the C API status codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::ConfigInconsistency(_)
            | Error::InvalidMaterial { .. }
            | Error::PorosityOutOfRange(_)
            | Error::UnsupportedDegree(_)
            | Error::Parse { .. } => ErrorCategory::Config,
            Error::DegenerateGradient { .. }
            | Error::ZeroCount { .. }
            | Error::CellIndexOutOfBounds { .. }
            | Error::DegenerateCut => ErrorCategory::Geometry,
            Error::BoundaryFacet(_) => ErrorCategory::Assembly,
            Error::SingularSystem(_)
            | Error::NotPositiveDefinite { .. }
            | Error::NonConvergence { .. } => ErrorCategory::Solver,
            Error::Io { .. } => ErrorCategory::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
