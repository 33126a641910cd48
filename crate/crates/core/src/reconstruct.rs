//! Age density rebuilt along characteristics from a finished trajectory.
//!
//! For `a >= t` the density is the initial profile transported and thinned,
//! `p0(a - t) exp(-mu0 t - I(t))`; for `a < t` it is the cohort born at
//! `t - a`, `B(t - a) exp(-mu0 a - (I(t) - I(t - a)))`, with
//! `I(t) = int_0^t psi(P)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Feedback, FeedbackSpec, InitialDensity, ModelParams};
use crate::quadrature::simpson;
use crate::reduce::Trajectory;

/// Default age spacing.
pub const DEFAULT_AGE_STEP: f64 = 0.01;
/// Target for the truncated mass beyond the default grid.
pub const TRUNCATION_TARGET: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityField {
    pub age_grid: Vec<f64>,
    pub time: f64,
    pub values: Vec<f64>,
    /// Limit of the birth branch as `a -> t` from below.
    pub limit_below: f64,
    /// Limit of the initial-data branch as `a -> t` from above.
    pub limit_above: f64,
}

impl DensityField {
    /// Size of the discontinuity on the characteristic `a = t`; zero when
    /// `p0(0) = B(0)`.
    pub fn jump(&self) -> f64 {
        (self.limit_above - self.limit_below).abs()
    }
}

/// Evaluates both branches of the characteristic formula at a fixed time.
struct Characteristics<'a> {
    traj: &'a Trajectory,
    p0: &'a InitialDensity,
    mu0: f64,
    t: f64,
    psi_t: f64,
}

impl<'a> Characteristics<'a> {
    fn new(traj: &'a Trajectory, p0: &'a InitialDensity, params: &ModelParams, t: f64) -> Result<Self> {
        let psi_t = traj.psi_integral_at(t)?;
        Ok(Self {
            traj,
            p0,
            mu0: params.mu0(),
            t,
            psi_t,
        })
    }

    fn survival(&self) -> f64 {
        (-self.mu0 * self.t - self.psi_t).exp()
    }

    fn from_initial(&self, a: f64) -> f64 {
        self.p0.eval(a - self.t) * self.survival()
    }

    fn from_births(&self, a: f64) -> Result<f64> {
        let born = (self.t - a).max(0.0);
        let b = self.traj.birth_rate_at(born)?.max(0.0);
        let psi_born = self.traj.psi_integral_at(born)?;
        Ok(b * (-self.mu0 * a - (self.psi_t - psi_born)).exp())
    }

    fn eval(&self, a: f64) -> Result<f64> {
        if a >= self.t {
            Ok(self.from_initial(a))
        } else {
            self.from_births(a)
        }
    }
}

fn check_grid(age_grid: &[f64]) -> Result<()> {
    if age_grid.is_empty() {
        return Err(Error::Domain("age grid is empty".into()));
    }
    if !age_grid.iter().all(|a| a.is_finite() && *a >= 0.0) {
        return Err(Error::Domain("age grid must be finite and nonnegative".into()));
    }
    if age_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("age grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Density `p(a, t)` on `age_grid`.
pub fn reconstruct_density(
    traj: &Trajectory,
    p0: &InitialDensity,
    params: &ModelParams,
    t: f64,
    age_grid: &[f64],
) -> Result<DensityField> {
    check_grid(age_grid)?;
    let ch = Characteristics::new(traj, p0, params, t)?;
    let values = age_grid.iter().map(|&a| ch.eval(a)).collect::<Result<Vec<_>>>()?;
    Ok(DensityField {
        age_grid: age_grid.to_vec(),
        time: t,
        values,
        limit_below: ch.from_births(t)?,
        limit_above: ch.from_initial(t),
    })
}

/// Uniform grid `[0, a_max]` with `a_max` chosen so that
/// `exp(-mu0 a_max) (mass(p0) + sup B) < 1e-10`.
pub fn default_age_grid(traj: &Trajectory, p0: &InitialDensity, params: &ModelParams) -> Vec<f64> {
    let scale = p0.mass() + traj.max_birth_rate();
    let a_max = if scale > 0.0 {
        ((scale / TRUNCATION_TARGET).ln() / params.mu0()).max(1.0)
    } else {
        1.0
    };
    uniform_grid(a_max, DEFAULT_AGE_STEP)
}

/// `0, step, 2 step, ..` up to the first point at or beyond `a_max`.
pub fn uniform_grid(a_max: f64, step: f64) -> Vec<f64> {
    let count = (a_max / step - 1e-9).ceil().max(1.0) as usize;
    (0..=count).map(|k| k as f64 * step).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassReport {
    pub time: f64,
    /// Quadrature over the grid plus the tail.
    pub integral: f64,
    /// Mass attributed beyond the last grid age.
    pub tail: f64,
    /// `P(t)` from the reduced system.
    pub p_reduced: f64,
    pub relative_error: f64,
}

/// Compares the mass of a reconstructed field with `P(t)`.
///
/// The Simpson sum is split at `a = t`, each side closed with its own
/// one-sided limit, so the jump on the characteristic costs no accuracy.
/// Beyond the last grid age `A`, the initial-data branch is added exactly
/// and the birth branch (when `A < t`) is extended with decay rate
/// `mu0 + psi(P(t))`.
pub fn consistency_check(
    field: &DensityField,
    traj: &Trajectory,
    p0: &InitialDensity,
    params: &ModelParams,
    feedback: &FeedbackSpec,
) -> Result<MassReport> {
    let t = field.time;
    let ch = Characteristics::new(traj, p0, params, t)?;
    let grid = &field.age_grid;
    let last = *grid.last().expect("field grid is nonempty");

    let split = grid.partition_point(|&a| a < t);
    let mut below_x: Vec<f64> = grid[..split].to_vec();
    let mut below_y: Vec<f64> = field.values[..split].to_vec();
    let mut above_x: Vec<f64> = Vec::new();
    let mut above_y: Vec<f64> = Vec::new();
    if t <= last {
        below_x.push(t);
        below_y.push(field.limit_below);
        if grid[split] > t {
            above_x.push(t);
            above_y.push(field.limit_above);
        }
        above_x.extend_from_slice(&grid[split..]);
        above_y.extend_from_slice(&field.values[split..]);
    }
    let piece = |x: &[f64], y: &[f64]| if x.len() >= 2 { simpson(x, y) } else { 0.0 };
    let on_grid = piece(&below_x, &below_y) + piece(&above_x, &above_y);

    let tail = if last >= t {
        ch.survival() * p0.mass_beyond(last - t)
    } else {
        let state = traj.state_at(t)?;
        let k = params.mu0() + feedback.psi(state.p);
        let edge = field.values[grid.len() - 1];
        edge * (1.0 - (-k * (t - last)).exp()) / k + ch.survival() * p0.mass()
    };

    let integral = on_grid + tail;
    let p_reduced = traj.state_at(t)?.p;
    let relative_error = (integral - p_reduced).abs() / p_reduced.max(f64::MIN_POSITIVE);
    Ok(MassReport {
        time: t,
        integral,
        tail,
        p_reduced,
        relative_error,
    })
}

/// File name for the density at time `t`.
pub fn density_file_name(t: f64) -> String {
    format!("density_t{t:?}.csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{density_moments, PhiFamily, PsiFamily};
    use crate::reduce::{integrate, IntegrateOptions, Sampling, Stepper};

    fn ref1() -> (ModelParams, FeedbackSpec) {
        (
            ModelParams::new(vec![1.0], 0.5, 0.5, 4.0).unwrap(),
            FeedbackSpec::new(PhiFamily::Hill { k: 1.0, m: 1.0 }, PsiFamily::Linear { c: 1.0 }).unwrap(),
        )
    }

    fn run(p0: &InitialDensity, params: &ModelParams, fb: &FeedbackSpec, t_end: f64) -> Trajectory {
        let init = density_moments(p0, params.rho(), params.n());
        let opts = IntegrateOptions {
            stepper: Stepper::Rk45 { rtol: 1e-10, atol: 1e-12 },
            sampling: Sampling::Uniform(11),
        };
        integrate(&init, params, fb, t_end, &opts).unwrap()
    }

    #[test]
    fn initial_time_returns_initial_density() {
        let (p, f) = ref1();
        let p0 = InitialDensity::exponential(2.0, 1.0).unwrap();
        let traj = run(&p0, &p, &f, 1.0);
        let grid = uniform_grid(5.0, 0.5);
        let field = reconstruct_density(&traj, &p0, &p, 0.0, &grid).unwrap();
        for (a, v) in grid.iter().zip(&field.values) {
            assert_eq!(*v, p0.eval(*a));
        }
    }

    #[test]
    fn linear_mode_initial_branch() {
        let p = ModelParams::new(vec![1.0], 0.5, 0.5, 2.0).unwrap();
        let f = FeedbackSpec::linear();
        let p0 = InitialDensity::exponential(1.0, 1.0).unwrap();
        let traj = run(&p0, &p, &f, 1.0);
        let field = reconstruct_density(&traj, &p0, &p, 1.0, &[2.0]).unwrap();
        assert!((field.values[0] - (-1.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn stationary_field_mass() {
        let (p, f) = ref1();
        let p0 = InitialDensity::exponential(1.5, 1.5).unwrap();
        let traj = run(&p0, &p, &f, 60.0);
        let grid = uniform_grid(30.0, 0.005);
        let field = reconstruct_density(&traj, &p0, &p, 60.0, &grid).unwrap();
        for (a, v) in grid.iter().zip(&field.values).step_by(50) {
            assert!((v - 1.5 * (-1.5 * a).exp()).abs() < 1e-8, "a={a}");
        }
        let rep = consistency_check(&field, &traj, &p0, &p, &f).unwrap();
        assert!(rep.relative_error <= 1e-6, "{rep:?}");
    }

    #[test]
    fn zero_density_mass_is_exact() {
        let (p, f) = ref1();
        let p0 = InitialDensity::zero();
        let traj = run(&p0, &p, &f, 1.0);
        let field = reconstruct_density(&traj, &p0, &p, 0.0, &uniform_grid(5.0, 0.1)).unwrap();
        let rep = consistency_check(&field, &traj, &p0, &p, &f).unwrap();
        assert_eq!(rep.relative_error, 0.0);
    }

    #[test]
    fn initial_mass_matches_closed_form() {
        let (p, f) = ref1();
        let p0 = InitialDensity::exponential(2.0, 0.8).unwrap();
        let traj = run(&p0, &p, &f, 1.0);
        let field = reconstruct_density(&traj, &p0, &p, 0.0, &uniform_grid(20.0, 0.01)).unwrap();
        let rep = consistency_check(&field, &traj, &p0, &p, &f).unwrap();
        assert!(rep.relative_error <= 1e-6, "{rep:?}");
    }

    #[test]
    fn jump_on_characteristic() {
        let (p, f) = ref1();
        // p0(0) = 1 while B(0) = 4 * 1 * 0.5 * 1 / (0.5 + 1) != 1.
        let p0 = InitialDensity::exponential(1.0, 1.0).unwrap();
        let traj = run(&p0, &p, &f, 2.0);
        let field = reconstruct_density(&traj, &p0, &p, 1.0, &uniform_grid(10.0, 0.01)).unwrap();
        let s = (-0.5 - traj.psi_integral_at(1.0).unwrap()).exp();
        let b0 = traj.birth_rate_at(0.0).unwrap();
        assert!((field.jump() - (1.0 - b0).abs() * s).abs() < 1e-12);
        let rep = consistency_check(&field, &traj, &p0, &p, &f).unwrap();
        assert!(rep.relative_error < 1e-6, "{rep:?}");
    }

    #[test]
    fn short_grid_uses_tail() {
        let (p, f) = ref1();
        let p0 = InitialDensity::exponential(1.5, 1.5).unwrap();
        let traj = run(&p0, &p, &f, 10.0);
        let field = reconstruct_density(&traj, &p0, &p, 10.0, &uniform_grid(6.0, 0.01)).unwrap();
        let rep = consistency_check(&field, &traj, &p0, &p, &f).unwrap();
        assert!(rep.tail > 0.0);
        assert!(rep.relative_error < 1e-6, "{rep:?}");
    }

    #[test]
    fn errors() {
        let (p, f) = ref1();
        let p0 = InitialDensity::exponential(1.0, 1.0).unwrap();
        let traj = run(&p0, &p, &f, 1.0);
        assert!(matches!(
            reconstruct_density(&traj, &p0, &p, 2.0, &[0.0, 1.0]),
            Err(Error::Range { .. })
        ));
        assert!(reconstruct_density(&traj, &p0, &p, 0.5, &[1.0, 0.5]).is_err());
        assert!(reconstruct_density(&traj, &p0, &p, 0.5, &[]).is_err());
    }

    #[test]
    fn file_names() {
        assert_eq!(density_file_name(1.0), "density_t1.0.csv");
        assert_eq!(density_file_name(0.25), "density_t0.25.csv");
    }
}
