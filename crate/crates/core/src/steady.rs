//! Net reproduction number, nontrivial steady state, the explicit
//! equilibrium of the reduced system and the forward-bifurcation sweep in
//! `r0`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{gamma_weighted_sum, Feedback, FeedbackSpec, ModelParams};
use crate::quadrature::factorials;
use crate::reduce::{birth_rate, rhs};
use crate::state::StateVector;

/// Default bracket width for the steady-state root.
pub const ROOT_TOL: f64 = 1e-12;
/// Residual gate for the explicit equilibrium.
pub const RESIDUAL_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 5;
const MAX_BRACKET_EXP: i32 = 60;

fn check_size(x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("population size must be finite and nonnegative, got {x}")))
    }
}

/// Net reproduction number at population size `x`:
/// `R(x) = r0 phi(x) sum_i beta_i i! / (rho + mu0 + psi(x))^(i+1)`.
pub fn net_reproduction(x: f64, params: &ModelParams, feedback: &FeedbackSpec) -> Result<f64> {
    check_size(x)?;
    Ok(net_reproduction_unchecked(x, params, feedback))
}

fn net_reproduction_unchecked(x: f64, params: &ModelParams, feedback: &FeedbackSpec) -> f64 {
    let rate = params.rho() + params.mu0() + feedback.psi(x);
    params.r0() * feedback.phi(x) * gamma_weighted_sum(params.betas(), rate)
}

/// Closed-form `R'(x)`; strictly negative under the shape assumptions.
pub fn reproduction_derivative(x: f64, params: &ModelParams, feedback: &FeedbackSpec) -> Result<f64> {
    check_size(x)?;
    if feedback.is_linear_mode() {
        return Err(Error::Unsupported(
            "R(x) is constant in linear mode; its derivative is not defined by the feedback".into(),
        ));
    }
    Ok(reproduction_derivative_unchecked(x, params, feedback))
}

fn reproduction_derivative_unchecked(x: f64, params: &ModelParams, feedback: &FeedbackSpec) -> f64 {
    let r0 = params.r0();
    let d = params.rho() + params.mu0() + feedback.psi(x);
    let (phi, dphi, dpsi) = (feedback.phi(x), feedback.dphi(x), feedback.dpsi(x));
    let fact = factorials(params.n());
    let mut pow = d * d;
    let mut sum = 0.0;
    for (i, (b, f)) in params.betas().iter().zip(&fact).enumerate() {
        let direct = b * f * (r0 * dphi * d - r0 * phi * dpsi);
        let from_power = i as f64 * b * f * r0 * phi * dpsi;
        sum += (direct - from_power) / pow;
        pow *= d;
    }
    sum
}

/// Unique nontrivial root of `R(x) = 1`, or `None` when `R(0) <= 1`.
///
/// The root is bracketed by doubling the upper end of `[0, 1]` until
/// `R < 1`, bisected to width `tol`, then polished by at most five Newton
/// steps that are kept inside the bracket.
pub fn steady_state(params: &ModelParams, feedback: &FeedbackSpec, tol: f64) -> Result<Option<f64>> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("root tolerance must be positive, got {tol}")));
    }
    let g = |x: f64| net_reproduction_unchecked(x, params, feedback) - 1.0;
    if g(0.0) <= 0.0 {
        return Ok(None);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while g(hi) >= 0.0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_BRACKET_EXP {
            return Err(Error::Divergence { upper: hi });
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    if feedback.is_linear_mode() {
        return Ok(Some(x));
    }
    for _ in 0..MAX_NEWTON {
        let gx = g(x);
        if gx == 0.0 {
            break;
        }
        let dg = reproduction_derivative_unchecked(x, params, feedback);
        if !(dg < 0.0) {
            break;
        }
        let next = x - gx / dg;
        // Stay inside the (slightly widened) bracket.
        let slack = 4.0 * tol;
        if !(next >= lo - slack && next <= hi + slack) || next < 0.0 {
            break;
        }
        if next == x {
            break;
        }
        x = next;
    }
    Ok(Some(x))
}

/// Explicit equilibrium of the reduced system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    /// Nontrivial equilibrium exists (iff `R(0) > 1`).
    pub exists: bool,
    pub p_star: f64,
    /// `P_1*, .., P_n*`
    pub moments_star: Vec<f64>,
    pub birth_rate_star: f64,
    /// `R(P*)` at the returned root; zero when no root exists.
    pub reproduction_at_root: f64,
    /// Infinity norm of the reduced right-hand side at the equilibrium.
    pub residual_inf_norm: f64,
    /// The zero state is always an equilibrium.
    pub trivial: StateVector,
}

impl EquilibriumReport {
    pub fn state(&self) -> StateVector {
        StateVector::new(self.p_star, self.moments_star.clone())
    }
}

/// Nontrivial equilibrium from the closed forms
/// `P_1* = (mu0 + psi(P*)) / (rho + mu0 + psi(P*)) P*` and
/// `P_{i+1}* = i! / (rho + mu0 + psi(P*))^i P_1*`.
pub fn equilibrium(params: &ModelParams, feedback: &FeedbackSpec) -> Result<EquilibriumReport> {
    let n = params.n();
    let trivial = StateVector::zeros(n);
    let Some(p_star) = steady_state(params, feedback, ROOT_TOL)? else {
        return Ok(EquilibriumReport {
            exists: false,
            p_star: 0.0,
            moments_star: vec![0.0; n],
            birth_rate_star: 0.0,
            reproduction_at_root: 0.0,
            residual_inf_norm: 0.0,
            trivial,
        });
    };
    let state = equilibrium_state(p_star, params, feedback);
    let residual = rhs(&state, params, feedback)?.inf_norm();
    Ok(EquilibriumReport {
        exists: true,
        p_star,
        birth_rate_star: birth_rate(&state, params, feedback),
        reproduction_at_root: net_reproduction_unchecked(p_star, params, feedback),
        moments_star: state.moments,
        residual_inf_norm: residual,
        trivial,
    })
}

/// Moments implied by a stationary population size `p_star`.
pub fn equilibrium_state(p_star: f64, params: &ModelParams, feedback: &FeedbackSpec) -> StateVector {
    let psi = feedback.psi(p_star);
    let mortality = params.mu0() + psi;
    let decay = params.rho() + mortality;
    let p1 = mortality / decay * p_star;
    let mut moments = Vec::with_capacity(params.n());
    moments.push(p1);
    let mut coeff = 1.0;
    for i in 1..params.n() {
        coeff *= i as f64 / decay;
        moments.push(coeff * p1);
    }
    StateVector::new(p_star, moments)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub r0: f64,
    /// `None` when only the trivial equilibrium exists.
    pub p_star: Option<f64>,
}

impl SweepRow {
    pub fn exists(&self) -> bool {
        self.p_star.is_some()
    }
}

/// Steady state for each `r0` in the grid, in grid order.
pub fn bifurcation_sweep(base: &ModelParams, feedback: &FeedbackSpec, r0_grid: &[f64]) -> Result<Vec<SweepRow>> {
    if r0_grid.is_empty() {
        return Err(Error::Domain("the r0 grid is empty".into()));
    }
    r0_grid
        .iter()
        .map(|&r0| {
            let params = base.with_r0(r0)?;
            Ok(SweepRow {
                r0,
                p_star: steady_state(&params, feedback, ROOT_TOL)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PhiFamily, PsiFamily};

    fn hill_linear() -> FeedbackSpec {
        FeedbackSpec::new(PhiFamily::Hill { k: 1.0, m: 1.0 }, PsiFamily::Linear { c: 1.0 }).unwrap()
    }

    fn ref1(r0: f64) -> ModelParams {
        ModelParams::new(vec![1.0], 0.5, 0.5, r0).unwrap()
    }

    fn ref2() -> ModelParams {
        ModelParams::new(vec![0.5, 0.5], 0.5, 0.5, 16.0 / 3.0).unwrap()
    }

    #[test]
    fn reproduction_hand_values() {
        let f = hill_linear();
        assert!((net_reproduction(1.0, &ref1(4.0), &f).unwrap() - 1.0).abs() < 1e-15);
        assert!((net_reproduction(3.0, &ref1(4.0), &f).unwrap() - 0.25).abs() < 1e-15);
        assert!((net_reproduction(0.0, &ref1(4.0), &f).unwrap() - 4.0).abs() < 1e-15);
        assert!(net_reproduction(-1.0, &ref1(4.0), &f).is_err());
    }

    #[test]
    fn derivative_hand_values() {
        let f = hill_linear();
        assert!((reproduction_derivative(1.0, &ref1(4.0), &f).unwrap() + 1.0).abs() < 1e-14);
        assert!((reproduction_derivative(0.0, &ref1(4.0), &f).unwrap() + 8.0).abs() < 1e-14);
        assert!(matches!(
            reproduction_derivative(1.0, &ref1(4.0), &FeedbackSpec::linear()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn ref_steady_states() {
        let f = hill_linear();
        assert_eq!(steady_state(&ref1(1.0), &f, ROOT_TOL).unwrap(), None);
        let p = steady_state(&ref1(4.0), &f, ROOT_TOL).unwrap().unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        let p = steady_state(&ref1(9.0), &f, ROOT_TOL).unwrap().unwrap();
        assert!((p - 2.0).abs() < 1e-12);
        let p = steady_state(&ref2(), &f, ROOT_TOL).unwrap().unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_mode_with_growth_diverges() {
        let params = ModelParams::new(vec![1.0], 0.5, 0.5, 2.0).unwrap();
        assert!(matches!(
            steady_state(&params, &FeedbackSpec::linear(), ROOT_TOL),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn ref1_equilibrium() {
        let eq = equilibrium(&ref1(4.0), &hill_linear()).unwrap();
        assert!(eq.exists);
        assert!((eq.p_star - 1.0).abs() < 1e-12);
        assert!((eq.moments_star[0] - 0.75).abs() < 1e-12);
        assert!((eq.birth_rate_star - 1.5).abs() < 1e-12);
        assert!(eq.residual_inf_norm <= RESIDUAL_TOL);
        assert_eq!(eq.trivial, StateVector::zeros(1));
    }

    #[test]
    fn ref2_equilibrium() {
        let eq = equilibrium(&ref2(), &hill_linear()).unwrap();
        assert!((eq.p_star - 1.0).abs() < 1e-12);
        assert!((eq.moments_star[0] - 0.75).abs() < 1e-12);
        assert!((eq.moments_star[1] - 0.375).abs() < 1e-12);
        assert!((eq.birth_rate_star - 1.5).abs() < 1e-12);
        assert!(eq.residual_inf_norm <= RESIDUAL_TOL);
    }

    #[test]
    fn subcritical_equilibrium_is_trivial() {
        let eq = equilibrium(&ref1(0.5), &hill_linear()).unwrap();
        assert!(!eq.exists);
        assert_eq!(eq.p_star, 0.0);
        assert_eq!(eq.moments_star, vec![0.0]);
    }

    #[test]
    fn sweep_matches_square_root_law() {
        let rows = bifurcation_sweep(&ref1(4.0), &hill_linear(), &[1.0, 1.21, 4.0, 9.0]).unwrap();
        assert_eq!(rows[0].p_star, None);
        for (row, expected) in rows[1..].iter().zip([0.1, 1.0, 2.0]) {
            assert!((row.p_star.unwrap() - expected).abs() < 1e-10, "{row:?}");
        }
        let low = bifurcation_sweep(&ref1(4.0), &hill_linear(), &[0.2, 0.7, 1.0]).unwrap();
        assert!(low.iter().all(|r| !r.exists()));
        assert!(bifurcation_sweep(&ref1(4.0), &hill_linear(), &[]).is_err());
    }
}
