//! Nonlinear age-structured population model with separable fertility and
//! mortality.
//!
//! The density `p(a, t)` obeys the McKendrick equation with death rate
//! `mu0 + psi(P)` and birth rate `r0 phi(P) sum_i beta_i a^i exp(-rho a)`,
//! where `P` is the total population. For this class the dynamics of `P`
//! close on the `n` moments `P_i = int a^(i-1) exp(-rho a) p da`, giving an
//! exact system of `n + 1` ordinary differential equations.
//!
//! - [`model`]: parameters, feedback families, initial densities.
//! - [`steady`]: net reproduction number, equilibria, the `r0` sweep.
//! - [`reduce`]: the moment system and its integration.
//! - [`reconstruct`]: the age density rebuilt along characteristics.
//! - [`stability`]: Jacobian, spectrum and local stability.
//! - [`oracle`]: independent Volterra fixed-point solver.

pub mod error;
pub mod export;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod reconstruct;
pub mod reduce;
pub mod stability;
pub mod state;
pub mod steady;

pub use error::{Error, Result};
pub use state::StateVector;
