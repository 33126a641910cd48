use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::quadrature::factorials;

/// Relative tolerance for the normalization identity.
pub const NORMALIZATION_RTOL: f64 = 1e-12;

/// Scalar parameters of the separable model.
///
/// The fertility age profile is `sum_i betas[i] * a^i * exp(-rho * a)`,
/// intrinsic mortality is `mu0`, and `r0` scales the whole birth term.
/// `n` is `betas.len()`, which is also the number of weighted moments
/// carried by the reduced system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    betas: Vec<f64>,
    rho: f64,
    mu0: f64,
    r0: f64,
}

impl ModelParams {
    pub fn new(betas: Vec<f64>, rho: f64, mu0: f64, r0: f64) -> Result<Self> {
        if betas.is_empty() {
            return Err(param("betas", "at least one coefficient is required"));
        }
        for (i, &b) in betas.iter().enumerate() {
            check_positive(&format!("betas[{i}]"), b)?;
        }
        check_positive("rho", rho)?;
        check_positive("mu0", mu0)?;
        check_positive("r0", r0)?;
        Ok(Self {
            betas,
            rho,
            mu0,
            r0,
        })
    }

    /// Same parameters with the betas rescaled by [`normalize_betas`].
    pub fn normalized(&self) -> Self {
        let betas = normalize_betas(&self.betas, self.rho, self.mu0)
            .expect("validated parameters always normalize");
        Self {
            betas,
            ..self.clone()
        }
    }

    pub fn with_r0(&self, r0: f64) -> Result<Self> {
        check_positive("r0", r0)?;
        Ok(Self { r0, ..self.clone() })
    }

    pub fn n(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    /// `sum_i betas[i] * i! / (rho + mu0)^(i+1)`; equals one for normalized betas.
    pub fn normalization_sum(&self) -> f64 {
        gamma_weighted_sum(&self.betas, self.rho + self.mu0)
    }

    pub fn is_normalized(&self) -> bool {
        (self.normalization_sum() - 1.0).abs() <= NORMALIZATION_RTOL
    }
}

fn check_positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(param(field, format!("must be a finite positive number, got {v}")))
    }
}

/// `sum_i betas[i] * i! / rate^(i+1)`, i.e. the integral of the fertility
/// polynomial against `exp(-rate * a)` over `[0, inf)`.
pub(crate) fn gamma_weighted_sum(betas: &[f64], rate: f64) -> f64 {
    let fact = factorials(betas.len());
    let mut pow = rate;
    let mut sum = 0.0;
    for (b, f) in betas.iter().zip(&fact) {
        sum += b * f / pow;
        pow *= rate;
    }
    sum
}

/// Rescale fertility coefficients so that
/// `sum_i betas[i] * i! / (rho + mu0)^(i+1) = 1`.
///
/// The output depends only on the direction of `raw_betas`: any positive
/// multiple of the input yields the same result.
pub fn normalize_betas(raw_betas: &[f64], rho: f64, mu0: f64) -> Result<Vec<f64>> {
    if raw_betas.is_empty() {
        return Err(param("betas", "at least one coefficient is required"));
    }
    for (i, &b) in raw_betas.iter().enumerate() {
        check_positive(&format!("betas[{i}]"), b)?;
    }
    check_positive("rho", rho)?;
    check_positive("mu0", mu0)?;
    let s = gamma_weighted_sum(raw_betas, rho + mu0);
    Ok(raw_betas.iter().map(|b| b / s).collect())
}

/// Fertility age profile `sum_i betas[i] * a^i * exp(-rho * a)`.
///
/// The `r0 * Phi(P)` size factor is not included.
pub fn fertility_age_profile(a: f64, params: &ModelParams) -> Result<f64> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!("age must be finite and nonnegative, got {a}")));
    }
    Ok(age_profile_unchecked(a, params.betas(), params.rho()))
}

pub(crate) fn age_profile_unchecked(a: f64, betas: &[f64], rho: f64) -> f64 {
    // Horner on the polynomial part.
    let poly = betas.iter().rev().fold(0.0, |acc, b| acc * a + b);
    poly * (-rho * a).exp()
}
