//! Analytic Jacobian of the reduced system and local stability
//! classification by spectral abscissa.

use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, Matrix};
use crate::model::{Feedback, FeedbackSpec, ModelParams};
use crate::state::StateVector;
use crate::steady::EquilibriumReport;

/// Real parts within this margin of zero are classified as marginal.
pub const MARGIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    AsymptoticallyStable,
    Unstable,
    Marginal,
}

impl Verdict {
    pub fn from_abscissa(abscissa: f64) -> Self {
        if abscissa.abs() <= MARGIN {
            Verdict::Marginal
        } else if abscissa < 0.0 {
            Verdict::AsymptoticallyStable
        } else {
            Verdict::Unstable
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::AsymptoticallyStable => "asymptotically stable",
            Verdict::Unstable => "unstable",
            Verdict::Marginal => "marginal",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Verdict {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// Which equilibrium of an [`EquilibriumReport`] to classify.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumKind {
    Nontrivial,
    Trivial,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub jacobian: Matrix,
    #[serde(serialize_with = "serialize_complex")]
    pub eigenvalues: Vec<Complex64>,
    pub spectral_abscissa: f64,
    pub verdict: Verdict,
    pub trace: f64,
}

fn serialize_complex<S: Serializer>(values: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(values.len()))?;
    for z in values {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

/// Jacobian of the reduced right-hand side at `state`, ordered
/// `(P, P_1, .., P_n)`.
pub fn jacobian_at(state: &StateVector, params: &ModelParams, feedback: &FeedbackSpec) -> Result<Matrix> {
    state.check_finite()?;
    if state.n() != params.n() {
        return Err(Error::Domain(format!(
            "state has {} moments but the model has n = {}",
            state.n(),
            params.n()
        )));
    }
    let n = params.n();
    let betas = params.betas();
    let r0 = params.r0();
    let x = state.p;
    let m = &state.moments;
    let (phi, dphi, psi, dpsi) = (feedback.phi(x), feedback.dphi(x), feedback.psi(x), feedback.dpsi(x));
    let decay = params.rho() + params.mu0() + psi;
    let weighted: f64 = betas.iter().zip(m).map(|(b, p)| b * p).sum();

    let mut j = Matrix::zeros(n + 1, n + 1);
    j[(0, 0)] = -(params.mu0() + psi) - dpsi * x + r0 * dphi * weighted;
    for i in 0..n {
        j[(0, i + 1)] = r0 * phi * betas[i];
    }

    let tail: f64 = betas[1..].iter().zip(&m[1..]).map(|(b, p)| b * p).sum();
    j[(1, 0)] = (r0 * betas[0] * dphi - dpsi) * m[0] + r0 * dphi * tail;
    j[(1, 1)] = r0 * betas[0] * phi - decay;
    for i in 1..n {
        j[(1, i + 1)] = r0 * phi * betas[i];
    }

    for i in 1..n {
        j[(i + 1, 0)] = -dpsi * m[i];
        j[(i + 1, i)] = i as f64;
        j[(i + 1, i + 1)] = -decay;
    }
    Ok(j)
}

/// Spectrum, abscissa and verdict for an arbitrary square matrix.
pub fn classify_matrix(jacobian: Matrix) -> Result<StabilityReport> {
    let eig = eigenvalues(&jacobian)?;
    let spectral_abscissa = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(StabilityReport {
        trace: jacobian.trace(),
        verdict: Verdict::from_abscissa(spectral_abscissa),
        eigenvalues: eig,
        spectral_abscissa,
        jacobian,
    })
}

pub fn classify_state(state: &StateVector, params: &ModelParams, feedback: &FeedbackSpec) -> Result<StabilityReport> {
    classify_matrix(jacobian_at(state, params, feedback)?)
}

pub fn classify(
    equilibrium: &EquilibriumReport,
    kind: EquilibriumKind,
    params: &ModelParams,
    feedback: &FeedbackSpec,
) -> Result<StabilityReport> {
    let state = match kind {
        EquilibriumKind::Trivial => equilibrium.trivial.clone(),
        EquilibriumKind::Nontrivial if equilibrium.exists => equilibrium.state(),
        EquilibriumKind::Nontrivial => {
            return Err(Error::Domain(
                "no nontrivial equilibrium exists (R(0) <= 1); classify the trivial one instead".into(),
            ))
        }
    };
    classify_state(&state, params, feedback)
}
