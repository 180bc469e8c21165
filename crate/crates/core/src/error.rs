use std::path::PathBuf;

use thiserror::Error;

use crate::solver::GrowthIndicator;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model, grid or control value violates its admissible range.
    #[error("{field} {requirement}")]
    InvalidParameter { field: String, requirement: String },

    #[error("negative density {value} in cell {cell}")]
    NegativeDensity { cell: usize, value: f64 },

    #[error("degenerate parameters: {0}")]
    DegenerateParameters(String),

    #[error("no coexistence steady state for these parameters (br <= f*mu)")]
    NoCoexistence,

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("divergence suspected: {0}")]
    Divergence(GrowthIndicator),

    #[error("insufficient data for rate fit: {usable} usable samples, need {required}")]
    InsufficientData { usable: usize, required: usize },

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, requirement: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            requirement: requirement.into(),
        }
    }

    /// Process exit code: 1 for configuration problems, 2 for solver
    /// divergence or breakdown, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence(_) | Error::CgNotConverged { .. } | Error::NegativeDensity { .. } => {
                2
            }
            Error::Io { .. } => 3,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
