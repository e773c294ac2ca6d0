use thiserror::Error;

/// Errors raised by the solvers and their input validation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid mass {0}: target mass must be nonnegative")]
    InvalidMass(f64),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("problem of size {size} exceeds the cap of {cap}")]
    TooLarge { size: usize, cap: usize },

    #[error("degenerate cost: {0}")]
    DegenerateCost(String),

    #[error("degenerate instance: {0}")]
    DegenerateInstance(String),

    #[error("mass imbalance: source total {source_mass}, target total {target_mass}")]
    Imbalance { source_mass: f64, target_mass: f64 },

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("training did not converge: {0}")]
    Training(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape { expected, actual })
    }
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::InvalidInput(format!(
            "{what} has a non-finite entry at index {i}"
        ))),
    }
}
