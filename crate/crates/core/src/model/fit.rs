use serde::Serialize;

use crate::error::{param, Result};
use crate::linalg::{solve, Matrix};

/// Relative pivot threshold below which the normal equations are singular.
const FIT_PIVOT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FertilityFit {
    pub betas: Vec<f64>,
    /// Euclidean norm of `F(a_k) - sum_i betas[i] a_k^i exp(-rho a_k)`.
    pub residual_norm: f64,
}

/// Least-squares fit of `sum_{i<n} beta_i a^i exp(-rho a)` to a sampled
/// age profile, via the normal equations of the design matrix with entries
/// `a_k^i exp(-rho a_k)`.
pub fn fit_fertility_profile(ages: &[f64], values: &[f64], n: usize, rho: f64) -> Result<FertilityFit> {
    if ages.len() != values.len() {
        return Err(param(
            "values",
            format!("expected {} values, got {}", ages.len(), values.len()),
        ));
    }
    if n == 0 {
        return Err(param("n", "must be at least 1"));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(param("rho", format!("must be a finite positive number, got {rho}")));
    }
    for (i, a) in ages.iter().enumerate() {
        if !(a.is_finite() && *a >= 0.0) {
            return Err(param(format!("ages[{i}]"), "must be finite and nonnegative"));
        }
    }
    let mut distinct = ages.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < n {
        return Err(param(
            "ages",
            format!("need at least {n} distinct ages, got {}", distinct.len()),
        ));
    }

    let design = design_matrix(ages, n, rho);
    let gram = design.transpose().mul(&design);
    let rhs = design.transpose().mul_vec(values);
    let betas = solve(&gram, &rhs, FIT_PIVOT_TOL)?;
    let fitted = design.mul_vec(&betas);
    let residual_norm = fitted
        .iter()
        .zip(values)
        .map(|(f, v)| (f - v) * (f - v))
        .sum::<f64>()
        .sqrt();
    Ok(FertilityFit { betas, residual_norm })
}

fn design_matrix(ages: &[f64], n: usize, rho: f64) -> Matrix {
    let mut m = Matrix::zeros(ages.len(), n);
    for (k, &a) in ages.iter().enumerate() {
        let mut v = (-rho * a).exp();
        for i in 0..n {
            m[(k, i)] = v;
            v *= a;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn recovers_exact_coefficients() {
        let ages: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let values: Vec<f64> = ages.iter().map(|a| (0.5 + 0.5 * a) * (-0.5 * a).exp()).collect();
        let fit = fit_fertility_profile(&ages, &values, 2, 0.5).unwrap();
        assert!((fit.betas[0] - 0.5).abs() < 1e-8);
        assert!((fit.betas[1] - 0.5).abs() < 1e-8);
        assert!(fit.residual_norm < 1e-10);
    }

    #[test]
    fn zero_profile() {
        let ages = [0.0, 1.0, 2.0, 3.0];
        let fit = fit_fertility_profile(&ages, &[0.0; 4], 3, 0.5).unwrap();
        assert!(fit.betas.iter().all(|&b| b == 0.0));
        assert_eq!(fit.residual_norm, 0.0);
    }

    #[test]
    fn too_few_ages_is_singular() {
        let err = fit_fertility_profile(&[1.0, 1.0, 2.0], &[1.0, 1.0, 0.5], 3, 0.5).unwrap_err();
        assert!(matches!(err, Error::Parameter { .. }));
    }

    #[test]
    fn duplicated_column_is_singular() {
        // Ages clustered at 0: the a and a^2 columns are numerically zero.
        let err = fit_fertility_profile(&[0.0, 1e-9, 2e-9, 3e-9], &[1.0; 4], 3, 0.5).unwrap_err();
        assert!(matches!(err, Error::SingularFit { .. }), "{err:?}");
    }
}
