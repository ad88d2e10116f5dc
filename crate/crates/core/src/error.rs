use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("field value {value} at element {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("field is not binary: element {index} has value {value}")]
    NonBinaryField { index: usize, value: f64 },

    #[error("ill-posed elasticity problem: {0}")]
    IllPosed(String),

    #[error("conjugate gradients did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("elastic state was computed for a different density field")]
    StaleState,
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}
