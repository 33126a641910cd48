use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Size-dependent feedback on fertility (`phi`) and mortality (`psi`).
///
/// Implemented by [`FeedbackSpec`]; [`check_assumptions`] accepts any
/// implementation so arbitrary functions can be audited.
pub trait Feedback {
    fn phi(&self, x: f64) -> f64;
    fn dphi(&self, x: f64) -> f64;
    fn psi(&self, x: f64) -> f64;
    fn dpsi(&self, x: f64) -> f64;

    /// Degenerate `phi = 1`, `psi = 0` mode, exempt from the shape assumptions.
    fn is_linear_mode(&self) -> bool {
        false
    }
}

/// Fertility damping families. Both satisfy `phi(0) = 1`, `phi' < 0` and
/// `phi(inf) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiFamily {
    /// `exp(-x / k)`
    Exponential { k: f64 },
    /// `1 / (1 + (x / k)^m)`
    Hill { k: f64, m: f64 },
}

/// Crowding mortality families. Both satisfy `psi(0) = 0`, `psi' > 0` and
/// `psi(inf) = inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PsiFamily {
    /// `c * x`
    Linear { c: f64 },
    /// `c * x^gamma`
    Power { c: f64, gamma: f64 },
}

impl PhiFamily {
    fn validate(&self) -> Result<()> {
        match *self {
            PhiFamily::Exponential { k } => positive("phi.k", k),
            PhiFamily::Hill { k, m } => {
                positive("phi.k", k)?;
                if m.is_finite() && m >= 1.0 {
                    Ok(())
                } else {
                    Err(param("phi.m", format!("must be finite and >= 1, got {m}")))
                }
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            PhiFamily::Exponential { k } => (-x / k).exp(),
            PhiFamily::Hill { k, m } => 1.0 / (1.0 + (x / k).powf(m)),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            PhiFamily::Exponential { k } => -(-x / k).exp() / k,
            PhiFamily::Hill { k, m } => {
                let r = x / k;
                let denom = 1.0 + r.powf(m);
                -m / k * r.powf(m - 1.0) / (denom * denom)
            }
        }
    }
}

impl PsiFamily {
    fn validate(&self) -> Result<()> {
        match *self {
            PsiFamily::Linear { c } => positive("psi.c", c),
            PsiFamily::Power { c, gamma } => {
                positive("psi.c", c)?;
                if gamma.is_finite() && gamma >= 1.0 {
                    Ok(())
                } else {
                    Err(param("psi.gamma", format!("must be finite and >= 1, got {gamma}")))
                }
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            PsiFamily::Linear { c } => c * x,
            PsiFamily::Power { c, gamma } => c * x.powf(gamma),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            PsiFamily::Linear { c } => c,
            PsiFamily::Power { c, gamma } => c * gamma * x.powf(gamma - 1.0),
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(param(field, format!("must be a finite positive number, got {v}")))
    }
}

/// A concrete choice of feedback functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeedbackSpec {
    phi: PhiFamily,
    psi: PsiFamily,
    linear_mode: bool,
}

impl FeedbackSpec {
    pub fn new(phi: PhiFamily, psi: PsiFamily) -> Result<Self> {
        phi.validate()?;
        psi.validate()?;
        Ok(Self {
            phi,
            psi,
            linear_mode: false,
        })
    }

    /// `phi = 1`, `psi = 0`: the linear model. The stored families are
    /// placeholders and never evaluated.
    pub fn linear() -> Self {
        Self {
            phi: PhiFamily::Exponential { k: 1.0 },
            psi: PsiFamily::Linear { c: 1.0 },
            linear_mode: true,
        }
    }

    pub fn phi_family(&self) -> PhiFamily {
        self.phi
    }

    pub fn psi_family(&self) -> PsiFamily {
        self.psi
    }
}

impl Feedback for FeedbackSpec {
    fn phi(&self, x: f64) -> f64 {
        if self.linear_mode {
            1.0
        } else {
            self.phi.eval(x)
        }
    }

    fn dphi(&self, x: f64) -> f64 {
        if self.linear_mode {
            0.0
        } else {
            self.phi.derivative(x)
        }
    }

    fn psi(&self, x: f64) -> f64 {
        if self.linear_mode {
            0.0
        } else {
            self.psi.eval(x)
        }
    }

    fn dpsi(&self, x: f64) -> f64 {
        if self.linear_mode {
            0.0
        } else {
            self.psi.derivative(x)
        }
    }

    fn is_linear_mode(&self) -> bool {
        self.linear_mode
    }
}

/// Point used to probe the limits at infinity.
pub const LIMIT_PROBE: f64 = 1e12;
/// `phi(LIMIT_PROBE)` must fall below this.
pub const PHI_LIMIT_EPS: f64 = 1e-6;
/// `psi(LIMIT_PROBE)` must exceed this.
pub const PSI_LIMIT_BOUND: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Clause {
    PhiNonnegative,
    PhiDecreasing,
    PhiAtZero,
    PhiVanishes,
    PsiNonnegative,
    PsiIncreasing,
    PsiAtZero,
    PsiUnbounded,
}

impl Clause {
    pub const ALL: [Clause; 8] = [
        Clause::PhiNonnegative,
        Clause::PhiDecreasing,
        Clause::PhiAtZero,
        Clause::PhiVanishes,
        Clause::PsiNonnegative,
        Clause::PsiIncreasing,
        Clause::PsiAtZero,
        Clause::PsiUnbounded,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Clause::PhiNonnegative => "Φ(x) ≥ 0",
            Clause::PhiDecreasing => "Φ′(x) < 0",
            Clause::PhiAtZero => "Φ(0) = 1",
            Clause::PhiVanishes => "Φ(+∞) = 0",
            Clause::PsiNonnegative => "Ψ(x) ≥ 0",
            Clause::PsiIncreasing => "Ψ′(x) > 0",
            Clause::PsiAtZero => "Ψ(0) = 0",
            Clause::PsiUnbounded => "Ψ(+∞) = +∞",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClauseResult {
    pub clause: Clause,
    pub passed: bool,
    /// First point at which the clause failed.
    pub violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub clauses: Vec<ClauseResult>,
    /// Linear mode is exempt; clauses are still evaluated and listed.
    pub exempt: bool,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.exempt || self.clauses.iter().all(|c| c.passed)
    }

    pub fn clause(&self, clause: Clause) -> &ClauseResult {
        self.clauses
            .iter()
            .find(|c| c.clause == clause)
            .expect("every clause is evaluated")
    }

    pub fn failures(&self) -> impl Iterator<Item = &ClauseResult> {
        self.clauses.iter().filter(|c| !c.passed)
    }
}

/// Evaluate the shape assumptions on `phi` and `psi` at every grid point.
///
/// Derivative clauses, and the strict monotonicity between consecutive grid
/// points, are checked on `x > 0` only since the functions need only be
/// differentiable on the open half-line. The limits at infinity are probed
/// at [`LIMIT_PROBE`].
pub fn check_assumptions<F: Feedback + ?Sized>(feedback: &F, grid: &[f64]) -> AssumptionReport {
    let first_failure = |pred: &dyn Fn(f64) -> bool| grid.iter().copied().find(|&x| !pred(x));
    let monotone_failure = |decreasing: bool, f: &dyn Fn(f64) -> f64| {
        grid.windows(2).find_map(|w| {
            let (a, b) = (f(w[0]), f(w[1]));
            let ok = if decreasing { b < a } else { b > a };
            (!ok).then_some(w[1])
        })
    };

    let mut clauses = Vec::with_capacity(8);
    let mut push = |clause, violation: Option<f64>| {
        clauses.push(ClauseResult {
            clause,
            passed: violation.is_none(),
            violation,
        })
    };

    push(Clause::PhiNonnegative, first_failure(&|x| feedback.phi(x) >= 0.0));
    push(
        Clause::PhiDecreasing,
        first_failure(&|x| x == 0.0 || feedback.dphi(x) < 0.0)
            .or_else(|| monotone_failure(true, &|x| feedback.phi(x))),
    );
    push(
        Clause::PhiAtZero,
        (feedback.phi(0.0) != 1.0).then_some(0.0),
    );
    push(
        Clause::PhiVanishes,
        (feedback.phi(LIMIT_PROBE) >= PHI_LIMIT_EPS).then_some(LIMIT_PROBE),
    );
    push(Clause::PsiNonnegative, first_failure(&|x| feedback.psi(x) >= 0.0));
    push(
        Clause::PsiIncreasing,
        first_failure(&|x| x == 0.0 || feedback.dpsi(x) > 0.0)
            .or_else(|| monotone_failure(false, &|x| feedback.psi(x))),
    );
    push(Clause::PsiAtZero, (feedback.psi(0.0) != 0.0).then_some(0.0));
    push(
        Clause::PsiUnbounded,
        (feedback.psi(LIMIT_PROBE) <= PSI_LIMIT_BOUND).then_some(LIMIT_PROBE),
    );

    AssumptionReport {
        clauses,
        exempt: feedback.is_linear_mode(),
    }
}
