//! Fixed-point solver for the Volterra integral form of the general model,
//! used to cross-validate the moment reduction.
//!
//! With `pi(a, t, x, P) = exp(-int_0^x mu(a - s, P(t - s)) ds)`:
//!
//! ```text
//! B(t) = int_0^t beta(s, P(t)) pi(s, t, s, P) B(t - s) ds + F(t, P)
//! P(t) = int_0^t pi(s, t, s, P) B(t - s) ds + G(t, P)
//! F(t, P) = int_0^inf beta(u + t, P(t)) pi(u + t, t, t, P) p0(u) du
//! G(t, P) = int_0^inf pi(u + t, t, t, P) p0(u) du
//! ```
//!
//! The iteration evaluates the right-hand sides at the previous iterate.
//! Time integrals use the composite trapezoid rule on a uniform grid and the
//! survival factor is accumulated along characteristics with the same rule.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    age_profile_unchecked, density_moments, Feedback, FeedbackSpec, InitialDensity, ModelParams,
};
use crate::quadrature::simpson_weights;
use crate::reduce::{birth_rate, integrate, IntegrateOptions, Sampling, Stepper};

type RateOfSize = Box<dyn Fn(f64) -> f64 + Send + Sync>;
type RateOfAgeSize = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type RateOfAge = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Death rate `mu(a, P)`.
pub enum Mortality {
    /// `mu(P)`, the same at every age.
    AgeIndependent(RateOfSize),
    General(RateOfAgeSize),
}

impl Mortality {
    pub fn eval(&self, a: f64, p: f64) -> f64 {
        match self {
            Self::AgeIndependent(f) => f(p),
            Self::General(f) => f(a, p),
        }
    }
}

/// Fertility rate `beta(a, P)`.
pub enum Fertility {
    /// `size(P) * age(a)`.
    Separable { size: RateOfSize, age: RateOfAge },
    General(RateOfAgeSize),
}

impl Fertility {
    pub fn eval(&self, a: f64, p: f64) -> f64 {
        match self {
            Self::Separable { size, age } => size(p) * age(a),
            Self::General(f) => f(a, p),
        }
    }
}

pub struct GeneralModel {
    pub mortality: Mortality,
    pub fertility: Fertility,
    pub p0: InitialDensity,
}

impl GeneralModel {
    /// `mu = mu0 + psi(P)`, `beta = r0 phi(P) sum_i beta_i a^i exp(-rho a)`.
    pub fn separable(params: &ModelParams, feedback: &FeedbackSpec, p0: InitialDensity) -> Self {
        let (mu0, r0, rho) = (params.mu0(), params.r0(), params.rho());
        let betas = params.betas().to_vec();
        let (fm, fs) = (*feedback, *feedback);
        Self {
            mortality: Mortality::AgeIndependent(Box::new(move |p| mu0 + fm.psi(p))),
            fertility: Fertility::Separable {
                size: Box::new(move |p| r0 * fs.phi(p)),
                age: Box::new(move |a| age_profile_unchecked(a, &betas, rho)),
            },
            p0,
        }
    }

    /// The same model with its structure hidden, forcing the general code
    /// path.
    pub fn into_general(self) -> Self {
        let GeneralModel { mortality, fertility, p0 } = self;
        Self {
            mortality: Mortality::General(Box::new(move |a, p| mortality.eval(a, p))),
            fertility: Fertility::General(Box::new(move |a, p| fertility.eval(a, p))),
            p0,
        }
    }
}

/// Population size sampled on a uniform grid starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl History {
    pub fn end(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dt
    }

    /// Linear interpolation; range error outside the recorded interval.
    pub fn at(&self, t: f64) -> Result<f64> {
        let end = self.end();
        let slack = 1e-9 * self.dt;
        if !(t >= -slack && t <= end + slack) {
            return Err(Error::Range { value: t, lo: 0.0, hi: end });
        }
        let s = (t / self.dt).clamp(0.0, (self.values.len() - 1) as f64);
        let k = s.floor() as usize;
        if k + 1 >= self.values.len() {
            return Ok(self.values[self.values.len() - 1]);
        }
        let w = s - k as f64;
        Ok(self.values[k] * (1.0 - w) + self.values[k + 1] * w)
    }
}

/// `pi(a, t, x, P) = exp(-int_0^x mu(a - s, P(t - s)) ds)`, the exponent by
/// the trapezoid rule on the history grid restricted to `[0, x]`.
pub fn survival_factor(a: f64, t: f64, x: f64, history: &History, model: &GeneralModel) -> Result<f64> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("lookback must be finite and nonnegative, got {x}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    history.at(t)?;
    history.at(t - x)?;
    let steps = (x / history.dt - 1e-9).ceil().max(1.0) as usize;
    let h = x / steps as f64;
    let mut exponent = 0.0;
    let mut prev = model.mortality.eval(a, history.at(t)?);
    for k in 1..=steps {
        let s = k as f64 * h;
        let next = model.mortality.eval(a - s, history.at(t - s)?);
        exponent += 0.5 * h * (prev + next);
        prev = next;
    }
    Ok((-exponent).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSolution {
    pub times: Vec<f64>,
    pub b: Vec<f64>,
    pub p: Vec<f64>,
    pub iterations: usize,
    pub update_norm: f64,
    /// `(iteration, update norm)` for every sweep.
    pub log: Vec<(usize, f64)>,
}

/// Target spacing of the initial-age grid used for `F` and `G`.
const INITIAL_AGE_STEP: f64 = 0.0025;
const MAX_INITIAL_AGE_NODES: usize = 40_000;
/// Exponential profiles are truncated at `lambda a = 40`.
const EXP_TRUNCATION: f64 = 40.0;

pub struct VolterraSolver<'m> {
    model: &'m GeneralModel,
    dt: f64,
    times: Vec<f64>,
    /// Initial ages and `w_k p0(u_k)` with Simpson weights `w_k`.
    u: Vec<f64>,
    u_mass: Vec<f64>,
    /// Separable fertility: `age(s_m)` on the time grid.
    age_on_grid: Option<Vec<f64>>,
    /// Separable fertility with age-independent mortality:
    /// `int age(u + t_j) p0(u) du`.
    shifted_age_moment: Option<Vec<f64>>,
}

impl<'m> VolterraSolver<'m> {
    pub fn new(model: &'m GeneralModel, horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("dt must be positive, got {dt}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        let steps = if horizon < dt {
            0
        } else {
            let ratio = horizon / dt;
            let steps = ratio.round();
            if (ratio - steps).abs() > 1e-6 * ratio.max(1.0) {
                return Err(Error::Domain(format!("dt = {dt} does not divide the horizon {horizon}")));
            }
            steps as usize
        };
        let times: Vec<f64> = (0..=steps).map(|j| j as f64 * dt).collect();

        let u = match &model.p0 {
            InitialDensity::Exponential { lambda, .. } => {
                let u_max = EXP_TRUNCATION / lambda;
                let count = ((u_max / INITIAL_AGE_STEP).ceil() as usize).clamp(2, MAX_INITIAL_AGE_NODES);
                let du = u_max / count as f64;
                (0..=count).map(|k| k as f64 * du).collect::<Vec<_>>()
            }
            InitialDensity::Tabulated { ages, .. } => ages.clone(),
        };
        let u_mass: Vec<f64> = simpson_weights(&u)
            .iter()
            .zip(&u)
            .map(|(w, &a)| w * model.p0.eval(a))
            .collect();

        let (age_on_grid, shifted_age_moment) = match &model.fertility {
            Fertility::Separable { age, .. } => {
                let on_grid = times.iter().map(|&s| age(s)).collect::<Vec<_>>();
                let shifted = matches!(model.mortality, Mortality::AgeIndependent(_)).then(|| {
                    times
                        .iter()
                        .map(|&t| u.iter().zip(&u_mass).map(|(&a, w)| w * age(a + t)).sum())
                        .collect::<Vec<f64>>()
                });
                (Some(on_grid), shifted)
            }
            Fertility::General(_) => (None, None),
        };

        Ok(Self {
            model,
            dt,
            times,
            u,
            u_mass,
            age_on_grid,
            shifted_age_moment,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn nodes(&self) -> usize {
        self.times.len()
    }

    /// `F(t_j, P)` and `G(t_j, P)` for every node.
    fn source_terms(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let nodes = self.nodes();
        let mut f = vec![0.0; nodes];
        let mut g = vec![0.0; nodes];
        let model = self.model;
        match &model.mortality {
            Mortality::AgeIndependent(mu) => {
                let mass: f64 = self.u_mass.iter().sum();
                let mut cumulative = 0.0;
                let mut prev = mu(p[0]);
                for j in 0..nodes {
                    if j > 0 {
                        let next = mu(p[j]);
                        cumulative += 0.5 * self.dt * (prev + next);
                        prev = next;
                    }
                    let s = (-cumulative).exp();
                    g[j] = s * mass;
                    f[j] = s * match (&model.fertility, &self.shifted_age_moment) {
                        (Fertility::Separable { size, .. }, Some(moment)) => size(p[j]) * moment[j],
                        _ => self.fertility_against_initial(j, p[j], |_| 1.0),
                    };
                }
            }
            Mortality::General(mu) => {
                let mut survival = vec![1.0; self.u.len()];
                for j in 0..nodes {
                    if j > 0 {
                        let (t0, t1) = (self.times[j - 1], self.times[j]);
                        for (s, &a) in survival.iter_mut().zip(&self.u) {
                            *s *= (-0.5 * self.dt * (mu(a + t0, p[j - 1]) + mu(a + t1, p[j]))).exp();
                        }
                    }
                    g[j] = survival.iter().zip(&self.u_mass).map(|(s, w)| s * w).sum();
                    f[j] = self.fertility_against_initial(j, p[j], |k| survival[k]);
                }
            }
        }
        (f, g)
    }

    /// `int beta(u + t_j, P_j) s(u) p0(u) du` on the initial-age grid.
    fn fertility_against_initial(&self, j: usize, p: f64, survival: impl Fn(usize) -> f64) -> f64 {
        let t = self.times[j];
        self.u
            .iter()
            .zip(&self.u_mass)
            .enumerate()
            .map(|(k, (&a, w))| w * survival(k) * self.model.fertility.eval(a + t, p))
            .sum()
    }

    /// One sweep of the fixed-point map at the iterate `(b, p)`.
    pub fn iterate_once(&self, b: &[f64], p: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let nodes = self.nodes();
        if b.len() != nodes || p.len() != nodes {
            return Err(Error::Domain(format!("iterate must have {nodes} nodes")));
        }
        let (mut b_next, mut p_next) = self.source_terms(p);
        let dt = self.dt;
        let weight = |m: usize, j: usize| if m == 0 || m == j { 0.5 * dt } else { dt };
        let model = self.model;

        match &model.mortality {
            Mortality::AgeIndependent(mu) => {
                let mut cumulative = vec![0.0; nodes];
                for j in 1..nodes {
                    cumulative[j] = cumulative[j - 1] + 0.5 * dt * (mu(p[j - 1]) + mu(p[j]));
                }
                for j in 1..nodes {
                    let mut births = 0.0;
                    let mut mass = 0.0;
                    for m in 0..=j {
                        let term = weight(m, j) * (cumulative[j - m] - cumulative[j]).exp() * b[j - m];
                        mass += term;
                        births += term * self.fertility_at(m, p[j]);
                    }
                    b_next[j] += self.fertility_size(p[j]) * births;
                    p_next[j] += mass;
                }
            }
            Mortality::General(mu) => {
                // Row j holds pi(s_m, t_j, s_m, P) for m = 0..=j.
                let mut row = vec![1.0];
                for j in 1..nodes {
                    let mut next = Vec::with_capacity(j + 1);
                    next.push(1.0);
                    for m in 1..=j {
                        let (s0, s1) = (self.times[m - 1], self.times[m]);
                        let rate = 0.5 * dt * (mu(s1, p[j]) + mu(s0, p[j - 1]));
                        next.push(row[m - 1] * (-rate).exp());
                    }
                    row = next;
                    let mut births = 0.0;
                    let mut mass = 0.0;
                    for m in 0..=j {
                        let term = weight(m, j) * row[m] * b[j - m];
                        mass += term;
                        births += term * self.fertility_at(m, p[j]);
                    }
                    b_next[j] += self.fertility_size(p[j]) * births;
                    p_next[j] += mass;
                }
            }
        }

        if let Some(j) = (0..nodes).find(|&j| !(b_next[j] >= 0.0 && p_next[j] >= 0.0 && b_next[j].is_finite() && p_next[j].is_finite())) {
            return Err(Error::Domain(format!(
                "model evaluators produced an invalid iterate at t = {} (B = {}, P = {})",
                self.times[j], b_next[j], p_next[j]
            )));
        }
        Ok((b_next, p_next))
    }

    /// Age factor of the fertility at grid age `s_m`, or the full rate for
    /// general fertility (paired with a unit size factor).
    fn fertility_at(&self, m: usize, p: f64) -> f64 {
        match (&self.model.fertility, &self.age_on_grid) {
            (Fertility::Separable { .. }, Some(ages)) => ages[m],
            (fertility, _) => fertility.eval(self.times[m], p),
        }
    }

    fn fertility_size(&self, p: f64) -> f64 {
        match &self.model.fertility {
            Fertility::Separable { size, .. } => size(p),
            Fertility::General(_) => 1.0,
        }
    }

    /// Iterate from `B = F(., P(0))`, `P = G(., P(0))` until the sup-norm
    /// update drops to `tol`.
    pub fn solve(&self, tol: f64, k_max: usize) -> Result<OracleSolution> {
        if !(tol > 0.0) {
            return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
        }
        let seed_size: f64 = self.u_mass.iter().sum();
        let (mut b, mut p) = self.source_terms(&vec![seed_size; self.nodes()]);
        let mut log = Vec::new();
        let mut update = f64::INFINITY;
        for k in 1..=k_max {
            let (b_next, p_next) = self.iterate_once(&b, &p)?;
            update = sup_diff(&b_next, &b).max(sup_diff(&p_next, &p));
            log::debug!("{k},{update:e}");
            log.push((k, update));
            b = b_next;
            p = p_next;
            if update <= tol {
                return Ok(OracleSolution {
                    times: self.times.clone(),
                    b,
                    p,
                    iterations: k,
                    update_norm: update,
                    log,
                });
            }
        }
        Err(Error::NonConvergence {
            iterations: k_max,
            update_norm: update,
        })
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn volterra_solve(model: &GeneralModel, horizon: f64, dt: f64, tol: f64, k_max: usize) -> Result<OracleSolution> {
    VolterraSolver::new(model, horizon, dt)?.solve(tol, k_max)
}

/// Settings for [`cross_validate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    pub dt: f64,
    pub tol: f64,
    pub k_max: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            dt: 0.002,
            tol: 1e-10,
            k_max: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossValidation {
    pub horizon: f64,
    pub dt: f64,
    /// `sup_t |P_ode - P_oracle|` on the oracle grid.
    pub gap_p: f64,
    /// `sup_t |B_ode - B_oracle|` on the oracle grid.
    pub gap_b: f64,
    pub oracle: OracleSolution,
    pub ode_p: Vec<f64>,
    pub ode_b: Vec<f64>,
}

impl CrossValidation {
    pub fn max_gap(&self) -> f64 {
        self.gap_p.max(self.gap_b)
    }
}

/// Tolerances of the reduced-system run inside [`cross_validate`].
const ODE_RTOL: f64 = 1e-10;
const ODE_ATOL: f64 = 1e-12;

/// Runs the oracle on the separable model and the reduced system from the
/// moments of `p0`, and compares `P` and `B` on the oracle grid.
pub fn cross_validate(
    params: &ModelParams,
    feedback: &FeedbackSpec,
    p0: &InitialDensity,
    horizon: f64,
    settings: &OracleSettings,
) -> Result<CrossValidation> {
    let model = GeneralModel::separable(params, feedback, p0.clone());
    let oracle = volterra_solve(&model, horizon, settings.dt, settings.tol, settings.k_max)?;
    let initial = density_moments(p0, params.rho(), params.n());
    let (ode_p, ode_b) = if oracle.times.len() == 1 {
        (vec![initial.p], vec![birth_rate(&initial, params, feedback)])
    } else {
        let t_end = *oracle.times.last().expect("grid has nodes");
        let opts = IntegrateOptions {
            stepper: Stepper::Rk45 {
                rtol: ODE_RTOL,
                atol: ODE_ATOL,
            },
            sampling: Sampling::Times(oracle.times.clone()),
        };
        let traj = integrate(&initial, params, feedback, t_end, &opts)?;
        (traj.states.iter().map(|s| s.p).collect(), traj.birth_rates.clone())
    };
    Ok(CrossValidation {
        horizon,
        dt: settings.dt,
        gap_p: sup_diff(&ode_p, &oracle.p),
        gap_b: sup_diff(&ode_b, &oracle.b),
        oracle,
        ode_p,
        ode_b,
    })
}
