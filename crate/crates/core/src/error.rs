use thiserror::Error;

/// Errors surfaced by the numerical kernels.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quadrature did not converge: {what} (estimate {estimate:e}, error {error:e})")]
    NonConvergence {
        what: String,
        estimate: f64,
        error: f64,
    },

    #[error("grid cannot resolve the state: {0}")]
    GridResolution(String),

    #[error("aliasing detected: {0}")]
    Aliasing(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("step size violates stability bound: {0}")]
    Stability(String),

    #[error("extrapolation is not converging: {0}")]
    Extrapolation(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
