use thiserror::Error;

use crate::model::CarrierDistribution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: &'static str, reason: String },

    #[error("{quantity} = {value} is outside the domain ({reason})")]
    Domain {
        quantity: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("occupation n[{index}] = {value} violates the Pauli bound [0, 1]")]
    PauliViolation { index: usize, value: f64 },

    #[error("spectral density Jacobian vanishes at node {index}; cannot recover n from N")]
    DegenerateNode { index: usize },

    #[error("Fermi-Dirac fit is degenerate: {0}")]
    DegenerateFit(&'static str),

    #[error("banded system is singular at row {row} (condition estimate {condition_estimate:e})")]
    SingularSystem { row: usize, condition_estimate: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("Newton iterate left (0, 1) at node {index} and damping could not recover it")]
    Bracket { index: usize },

    #[error("non-finite value at t = {t} fs")]
    NumericalBlowup {
        t: f64,
        last_good: Box<CarrierDistribution>,
    },

    #[error("field grows without saturation at t = {t} fs (|e|^2 = {abs_e_sq:e})")]
    Instability { t: f64, abs_e_sq: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),
}

impl Error {
    pub(crate) fn invalid(key: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularSystem { .. }
                | Error::NoConvergence { .. }
                | Error::Bracket { .. }
                | Error::NumericalBlowup { .. }
                | Error::Instability { .. }
                | Error::Calibration(_)
        )
    }
}
