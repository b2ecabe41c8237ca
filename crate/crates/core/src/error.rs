use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),

    /// A slope (deformation gradient) that must be positive is not.
    #[error("degenerate mesh: nonpositive slope {value:e} at {location} {index}")]
    DegenerateMesh {
        location: &'static str,
        index: usize,
        value: f64,
    },

    #[error("trajectory left the admissible set: {0}")]
    Inadmissible(String),

    #[error("singular tridiagonal system: pivot {pivot:e} at row {row}")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("Hessian is not positive definite: g.H^-1.g = {value:e}")]
    SpdViolation { value: f64 },

    #[error(
        "Newton iteration did not converge in {iterations} iterations \
         (last lambda {last_lambda:e}, residual {residual:e})"
    )]
    NewtonNonConvergence {
        iterations: usize,
        last_lambda: f64,
        residual: f64,
        lambda_history: Vec<f64>,
    },

    #[error(
        "energy increased at step {step}: E(n+1) - E(n) = {lhs:e} exceeds \
         -A0 tau |D(x(n+1) - x(n))|^2 = {rhs:e}"
    )]
    EnergyIncrease { step: usize, lhs: f64, rhs: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
