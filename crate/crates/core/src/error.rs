use thiserror::Error;

/// Errors raised by the model, solvers and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A model parameter violates its domain. `field` names the offending
    /// parameter (e.g. `betas[2]`) so callers can qualify it with a path.
    #[error("{field}: {reason}")]
    Parameter { field: String, reason: String },

    /// An argument outside the domain of an operation (negative age, non-finite state, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("least-squares design matrix is rank deficient (pivot {pivot:e} at column {column})")]
    SingularFit { column: usize, pivot: f64 },

    #[error("root bracket expansion diverged: R(x) >= 1 up to x = {upper:e}")]
    Divergence { upper: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("step size underflow at t = {t}: h = {h:e}")]
    Stiffness { t: f64, h: f64 },

    #[error("integration failure at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    #[error("query {value} outside the available range [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("fixed-point iteration did not converge in {iterations} iterations (last update {update_norm:e})")]
    NonConvergence { iterations: usize, update_norm: f64 },

    #[error("QR iteration failed to converge; {} of {} eigenvalues found", .found.len(), .dim)]
    Eigen { dim: usize, found: Vec<(f64, f64)> },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Parameter {
        field: field.into(),
        reason: reason.into(),
    }
}
