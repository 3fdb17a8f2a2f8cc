use std::path::PathBuf;

use thiserror::Error;

use crate::planner::InfeasibilityReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("singular fit: {0}")]
    SingularFit(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("target resistance {target} Ω is below the reachable floor {floor} Ω (resistance only grows)")]
    Monotonicity { target: f64, floor: f64 },

    #[error("plan/model mismatch for qubit {qubit}: {message}")]
    ModelMismatch { qubit: usize, message: String },

    #[error("infeasible plan: blocking qubits {:?}", .0.blocking_ids())]
    Infeasible(Box<InfeasibilityReport>),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("ODE solver failed: {0}")]
    Solver(String),

    #[error("pole in perturbative expression: {0}")]
    Pole(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
