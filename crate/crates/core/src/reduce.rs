//! The moment-reduced ODE system and its time integration.
//!
//! With separable mortality `mu0 + psi(P)` and fertility
//! `r0 phi(P) sum_i beta_i a^i exp(-rho a)`, the total population `P` and the
//! weighted moments `P_1..P_n` close into an `(n+1)`-dimensional ODE system.
//! Integration also carries the running integral of `psi(P)`, which the
//! characteristics reconstruction needs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Feedback, FeedbackSpec, ModelParams};
pub use crate::state::StateVector;

/// Negative values down to this are clamped to zero during integration.
pub const NEGATIVE_SLACK: f64 = 1e-9;

/// Right-hand side of the reduced system at `state`.
pub fn rhs(state: &StateVector, params: &ModelParams, feedback: &FeedbackSpec) -> Result<StateVector> {
    check_dim(state, params)?;
    state.check_finite()?;
    let y = state.to_vec();
    let mut dy = vec![0.0; y.len()];
    rhs_into(&y, params, feedback, &mut dy);
    Ok(StateVector::from_slice(&dy))
}

/// Newborn flux `B = r0 phi(P) sum_i beta_i P_{i+1}`.
pub fn birth_rate(state: &StateVector, params: &ModelParams, feedback: &FeedbackSpec) -> f64 {
    birth_rate_flat(&state.to_vec(), params, feedback)
}

fn check_dim(state: &StateVector, params: &ModelParams) -> Result<()> {
    if state.n() != params.n() {
        return Err(Error::Domain(format!(
            "state carries {} moments but the model has n = {}",
            state.n(),
            params.n()
        )));
    }
    Ok(())
}

fn birth_rate_flat(y: &[f64], params: &ModelParams, feedback: &FeedbackSpec) -> f64 {
    let weighted: f64 = params.betas().iter().zip(&y[1..]).map(|(b, m)| b * m).sum();
    params.r0() * feedback.phi(y[0]) * weighted
}

/// `y = [P, P_1, .., P_n]` (an optional trailing entry is ignored);
/// writes the first `n + 1` entries of `dy`.
pub(crate) fn rhs_into(y: &[f64], params: &ModelParams, feedback: &FeedbackSpec, dy: &mut [f64]) {
    let n = params.n();
    let betas = params.betas();
    let p = y[0];
    let m = &y[1..=n];
    let phi = feedback.phi(p);
    let psi = feedback.psi(p);
    let r0phi = params.r0() * phi;
    let tail: f64 = betas[1..].iter().zip(&m[1..]).map(|(b, v)| b * v).sum();
    let birth = r0phi * (betas[0] * m[0] + tail);
    let decay = params.rho() + params.mu0() + psi;

    dy[0] = birth - (params.mu0() + psi) * p;
    dy[1] = (r0phi * betas[0] - decay) * m[0] + r0phi * tail;
    for i in 1..n {
        dy[i + 1] = i as f64 * m[i - 1] - decay * m[i];
    }
}

/// Augmented field: `[P, P_1..P_n, I]` with `I' = psi(P)`.
fn augmented_rhs(y: &[f64], params: &ModelParams, feedback: &FeedbackSpec, dy: &mut [f64]) {
    rhs_into(y, params, feedback, dy);
    let last = y.len() - 1;
    dy[last] = feedback.psi(y[0]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Stepper {
    /// Classical fixed-step fourth-order Runge–Kutta.
    Rk4 { h: f64 },
    /// Dormand–Prince 5(4) with step-size control.
    Rk45 { rtol: f64, atol: f64 },
}

impl Default for Stepper {
    fn default() -> Self {
        Stepper::Rk45 {
            rtol: 1e-8,
            atol: 1e-10,
        }
    }
}

/// Where the trajectory is reported.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Sampling {
    /// `count` equally spaced times on `[0, t_end]`, both ends included.
    Uniform(usize),
    /// Explicit increasing times in `[0, t_end]`.
    Times(Vec<f64>),
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::Uniform(1001)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntegrateOptions {
    pub stepper: Stepper,
    pub sampling: Sampling,
}

#[derive(Debug, Clone)]
struct Knot {
    t: f64,
    y: Vec<f64>,
    dy: Vec<f64>,
}

/// Solution of the reduced system on `[0, t_end]`.
///
/// The sampled arrays (`times`, `states`, `birth_rates`, `psi_integral`)
/// are what gets exported. Every accepted step is also kept so that the
/// state can be evaluated anywhere in the interval by cubic Hermite
/// interpolation.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub birth_rates: Vec<f64>,
    /// `int_0^t psi(P(s)) ds` at each sample.
    pub psi_integral: Vec<f64>,
    /// Number of small negative values clamped to zero.
    pub clamped: usize,
    knots: Vec<Knot>,
    params: ModelParams,
    feedback: FeedbackSpec,
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k.t)
    }

    /// Number of accepted integration steps.
    pub fn steps(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn feedback(&self) -> &FeedbackSpec {
        &self.feedback
    }

    fn dense(&self, t: f64) -> Result<Vec<f64>> {
        let (lo, hi) = (0.0, self.t_end());
        if !(t >= lo && t <= hi) {
            return Err(Error::Range { value: t, lo, hi });
        }
        let j = self.knots.partition_point(|k| k.t < t);
        if j < self.knots.len() && self.knots[j].t == t {
            return Ok(self.knots[j].y.clone());
        }
        let (k0, k1) = (&self.knots[j - 1], &self.knots[j]);
        Ok(hermite(k0, k1, t))
    }

    /// Reduced state at an arbitrary time in `[0, t_end]`.
    pub fn state_at(&self, t: f64) -> Result<StateVector> {
        let y = self.dense(t)?;
        Ok(StateVector::from_slice(&y[..y.len() - 1]))
    }

    pub fn birth_rate_at(&self, t: f64) -> Result<f64> {
        let y = self.dense(t)?;
        Ok(birth_rate_flat(&y, &self.params, &self.feedback))
    }

    pub fn psi_integral_at(&self, t: f64) -> Result<f64> {
        let y = self.dense(t)?;
        Ok(y[y.len() - 1])
    }

    /// Largest birth rate over the accepted steps.
    pub fn max_birth_rate(&self) -> f64 {
        self.knots
            .iter()
            .map(|k| birth_rate_flat(&k.y, &self.params, &self.feedback))
            .fold(0.0, f64::max)
    }
}

fn hermite(k0: &Knot, k1: &Knot, t: f64) -> Vec<f64> {
    let h = k1.t - k0.t;
    let s = (t - k0.t) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    (0..k0.y.len())
        .map(|i| h00 * k0.y[i] + h10 * h * k0.dy[i] + h01 * k1.y[i] + h11 * h * k1.dy[i])
        .collect()
}

const MAX_STEPS: usize = 50_000_000;

/// Integrate the reduced system from `initial` over `[0, t_end]`.
pub fn integrate(
    initial: &StateVector,
    params: &ModelParams,
    feedback: &FeedbackSpec,
    t_end: f64,
    options: &IntegrateOptions,
) -> Result<Trajectory> {
    check_dim(initial, params)?;
    initial.check_finite()?;
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::Domain(format!("t_end must be finite and positive, got {t_end}")));
    }
    if let Some((i, v)) = initial.to_vec().iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::Domain(format!("initial state entry {i} is negative ({v})")));
    }
    let sample_times = sample_times(&options.sampling, t_end)?;

    let mut y0 = initial.to_vec();
    y0.push(0.0);
    let mut integrator = Integrator {
        params,
        feedback,
        knots: Vec::new(),
        clamped: 0,
    };
    let dy0 = integrator.field(&y0);
    integrator.knots.push(Knot { t: 0.0, y: y0, dy: dy0 });

    match options.stepper {
        Stepper::Rk4 { h } => integrator.run_rk4(t_end, h)?,
        Stepper::Rk45 { rtol, atol } => integrator.run_rk45(t_end, rtol, atol)?,
    }
    if integrator.clamped > 0 {
        log::warn!(
            "clamped {} negative state entries (>= -{NEGATIVE_SLACK:e}) to zero",
            integrator.clamped
        );
    }

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        birth_rates: Vec::new(),
        psi_integral: Vec::new(),
        clamped: integrator.clamped,
        knots: integrator.knots,
        params: params.clone(),
        feedback: *feedback,
    };
    for t in sample_times {
        let y = traj.dense(t)?;
        let n1 = y.len() - 1;
        traj.birth_rates.push(birth_rate_flat(&y, params, feedback));
        traj.psi_integral.push(y[n1]);
        traj.states.push(StateVector::from_slice(&y[..n1]));
        traj.times.push(t);
    }
    Ok(traj)
}

fn sample_times(sampling: &Sampling, t_end: f64) -> Result<Vec<f64>> {
    match sampling {
        Sampling::Uniform(count) => {
            if *count < 2 {
                return Err(Error::Domain(format!("need at least 2 samples, got {count}")));
            }
            let last = count - 1;
            Ok((0..=last)
                .map(|i| if i == last { t_end } else { t_end * i as f64 / last as f64 })
                .collect())
        }
        Sampling::Times(ts) => {
            if ts.is_empty() {
                return Err(Error::Domain("sample time list is empty".into()));
            }
            for (i, &t) in ts.iter().enumerate() {
                if !(t >= 0.0 && t <= t_end) {
                    return Err(Error::Range { value: t, lo: 0.0, hi: t_end });
                }
                if i > 0 && t <= ts[i - 1] {
                    return Err(Error::Domain("sample times must be strictly increasing".into()));
                }
            }
            Ok(ts.clone())
        }
    }
}

struct Integrator<'a> {
    params: &'a ModelParams,
    feedback: &'a FeedbackSpec,
    knots: Vec<Knot>,
    clamped: usize,
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

impl Integrator<'_> {
    fn field(&self, y: &[f64]) -> Vec<f64> {
        let mut dy = vec![0.0; y.len()];
        augmented_rhs(y, self.params, self.feedback, &mut dy);
        dy
    }

    fn last(&self) -> &Knot {
        self.knots.last().expect("integration starts with a knot")
    }

    /// Validate and clamp a freshly computed state, then record it.
    fn accept(&mut self, t: f64, mut y: Vec<f64>) -> Result<()> {
        let n1 = y.len() - 1;
        for (i, v) in y.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::IntegrationFailure {
                    t,
                    reason: format!("component {i} became non-finite"),
                });
            }
            if i < n1 && *v < 0.0 {
                if *v >= -NEGATIVE_SLACK {
                    *v = 0.0;
                    self.clamped += 1;
                } else {
                    return Err(Error::IntegrationFailure {
                        t,
                        reason: format!("component {i} went negative ({v:e}); reduce the step size"),
                    });
                }
            }
        }
        let dy = self.field(&y);
        self.knots.push(Knot { t, y, dy });
        Ok(())
    }

    fn run_rk4(&mut self, t_end: f64, h: f64) -> Result<()> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Domain(format!("rk4 step must be finite and positive, got {h}")));
        }
        let steps = ((t_end / h) - 1e-9).ceil().max(1.0) as usize;
        if steps > MAX_STEPS {
            return Err(Error::Domain(format!("rk4 would need {steps} steps")));
        }
        let dim = self.last().y.len();
        let mut tmp = vec![0.0; dim];
        for k in 0..steps {
            let t0 = self.last().t;
            let t1 = if k + 1 == steps { t_end } else { (k + 1) as f64 * h };
            let hk = t1 - t0;
            let y0 = self.last().y.clone();
            let k1 = self.last().dy.clone();
            for i in 0..dim {
                tmp[i] = y0[i] + 0.5 * hk * k1[i];
            }
            let k2 = self.field(&tmp);
            for i in 0..dim {
                tmp[i] = y0[i] + 0.5 * hk * k2[i];
            }
            let k3 = self.field(&tmp);
            for i in 0..dim {
                tmp[i] = y0[i] + hk * k3[i];
            }
            let k4 = self.field(&tmp);
            let y1 = (0..dim)
                .map(|i| y0[i] + hk / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect();
            self.accept(t1, y1)?;
        }
        Ok(())
    }

    fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], rtol: f64, atol: f64) -> f64 {
        let sum: f64 = err
            .iter()
            .zip(y0.iter().zip(y1))
            .map(|(e, (a, b))| {
                let sc = atol + rtol * a.abs().max(b.abs());
                (e / sc) * (e / sc)
            })
            .sum();
        (sum / err.len() as f64).sqrt()
    }

    fn initial_step(&self, t_end: f64, rtol: f64, atol: f64) -> f64 {
        let knot = self.last();
        let (y0, f0) = (&knot.y, &knot.dy);
        let scale: Vec<f64> = y0.iter().map(|v| atol + rtol * v.abs()).collect();
        let norm = |v: &[f64]| {
            (v.iter().zip(&scale).map(|(x, s)| (x / s) * (x / s)).sum::<f64>() / v.len() as f64).sqrt()
        };
        let d0 = norm(y0);
        let d1 = norm(f0);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
        let f1 = self.field(&y1);
        let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
        let d2 = norm(&diff) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 5.0)
        };
        (100.0 * h0).min(h1).min(t_end)
    }

    fn run_rk45(&mut self, t_end: f64, rtol: f64, atol: f64) -> Result<()> {
        if !(rtol > 0.0 && atol > 0.0) {
            return Err(Error::Domain(format!("rk45 tolerances must be positive (rtol {rtol}, atol {atol})")));
        }
        let dim = self.last().y.len();
        let h_min = 1e-14 * t_end;
        let mut h = self.initial_step(t_end, rtol, atol);
        let mut tmp = vec![0.0; dim];
        let mut rejected_last = false;
        let mut steps = 0usize;

        while self.last().t < t_end {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::IntegrationFailure {
                    t: self.last().t,
                    reason: format!("exceeded {MAX_STEPS} steps"),
                });
            }
            let t0 = self.last().t;
            let mut last_step = false;
            if t0 + h >= t_end || t_end - (t0 + h) < h_min {
                h = t_end - t0;
                last_step = true;
            }
            if h < h_min {
                return Err(Error::Stiffness { t: t0, h });
            }
            let y0 = self.last().y.clone();
            let k1 = self.last().dy.clone();

            for i in 0..dim {
                tmp[i] = y0[i] + h * A21 * k1[i];
            }
            let k2 = self.field(&tmp);
            for i in 0..dim {
                tmp[i] = y0[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            let k3 = self.field(&tmp);
            for i in 0..dim {
                tmp[i] = y0[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            let k4 = self.field(&tmp);
            for i in 0..dim {
                tmp[i] = y0[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            let k5 = self.field(&tmp);
            for i in 0..dim {
                tmp[i] = y0[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let k6 = self.field(&tmp);
            let y1: Vec<f64> = (0..dim)
                .map(|i| y0[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]))
                .collect();
            let k7 = self.field(&y1);
            let err: Vec<f64> = (0..dim)
                .map(|i| h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]))
                .collect();
            let en = Self::error_norm(&err, &y0, &y1, rtol, atol);

            if en <= 1.0 {
                let t1 = if last_step { t_end } else { t0 + h };
                self.accept(t1, y1)?;
                let mut factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
                if rejected_last {
                    factor = factor.min(1.0);
                }
                rejected_last = false;
                h *= factor;
            } else {
                rejected_last = true;
                h *= (0.9 * en.powf(-0.2)).clamp(0.1, 1.0);
                if !en.is_finite() {
                    h *= 0.1;
                }
            }
        }
        Ok(())
    }
}
