use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::quadrature::{factorials, simpson};
use crate::state::StateVector;

/// Initial age density `p0(a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDensity {
    /// `c * exp(-lambda * a)`
    Exponential { c: f64, lambda: f64 },
    /// Nodal values on a strictly increasing age grid, linearly interpolated
    /// between nodes and zero outside `[ages[0], ages[last]]`.
    Tabulated { ages: Vec<f64>, values: Vec<f64> },
}

impl InitialDensity {
    pub fn exponential(c: f64, lambda: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(param("c", format!("must be finite and nonnegative, got {c}")));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(param("lambda", format!("must be a finite positive number, got {lambda}")));
        }
        Ok(Self::Exponential { c, lambda })
    }

    pub fn tabulated(ages: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if ages.len() != values.len() {
            return Err(param(
                "values",
                format!("expected {} values to match the age grid, got {}", ages.len(), values.len()),
            ));
        }
        if ages.len() < 2 {
            return Err(param("ages", "need at least two ages"));
        }
        for (i, &a) in ages.iter().enumerate() {
            if !(a.is_finite() && a >= 0.0) {
                return Err(param(format!("ages[{i}]"), format!("must be finite and nonnegative, got {a}")));
            }
            if i > 0 && a <= ages[i - 1] {
                return Err(param(format!("ages[{i}]"), "ages must be strictly increasing"));
            }
        }
        for (i, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(param(format!("values[{i}]"), format!("must be finite and nonnegative, got {v}")));
            }
        }
        Ok(Self::Tabulated { ages, values })
    }

    /// Sample `f` on a uniform grid `[0, a_max]` with the given step.
    pub fn tabulate(f: impl Fn(f64) -> f64, a_max: f64, step: f64) -> Result<Self> {
        let n = (a_max / step).round() as usize;
        let ages: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
        let values = ages.iter().map(|&a| f(a)).collect();
        Self::tabulated(ages, values)
    }

    pub fn zero() -> Self {
        Self::Exponential { c: 0.0, lambda: 1.0 }
    }

    pub fn eval(&self, a: f64) -> f64 {
        match self {
            Self::Exponential { c, lambda } => {
                if a < 0.0 {
                    0.0
                } else {
                    c * (-lambda * a).exp()
                }
            }
            Self::Tabulated { ages, values } => interpolate(ages, values, a),
        }
    }

    /// Total mass `int p0`: closed form for the exponential kind, composite
    /// Simpson on the table otherwise.
    pub fn mass(&self) -> f64 {
        match self {
            Self::Exponential { c, lambda } => c / lambda,
            Self::Tabulated { ages, values } => simpson(ages, values),
        }
    }

    /// `int_u^inf p0(a) da`. Exact for the exponential kind and for the
    /// piecewise-linear interpolant of a table.
    pub fn mass_beyond(&self, u: f64) -> f64 {
        match self {
            Self::Exponential { c, lambda } => c * (-lambda * u.max(0.0)).exp() / lambda,
            Self::Tabulated { ages, values } => {
                let mut total = 0.0;
                for i in 0..ages.len() - 1 {
                    let (a0, a1) = (ages[i], ages[i + 1]);
                    if a1 <= u {
                        continue;
                    }
                    let lo = a0.max(u);
                    let vlo = interpolate(ages, values, lo);
                    total += 0.5 * (a1 - lo) * (vlo + values[i + 1]);
                }
                total
            }
        }
    }

    /// Largest age carrying mass; `None` for unbounded support.
    pub fn support_end(&self) -> Option<f64> {
        match self {
            Self::Exponential { .. } => None,
            Self::Tabulated { ages, .. } => ages.last().copied(),
        }
    }
}

fn interpolate(ages: &[f64], values: &[f64], a: f64) -> f64 {
    let last = ages.len() - 1;
    if a < ages[0] || a > ages[last] {
        return 0.0;
    }
    let j = match ages.binary_search_by(|x| x.total_cmp(&a)) {
        Ok(j) => return values[j],
        Err(j) => j,
    };
    let (a0, a1) = (ages[j - 1], ages[j]);
    let w = (a - a0) / (a1 - a0);
    values[j - 1] * (1.0 - w) + values[j] * w
}

/// Initial condition of the reduced system.
///
/// `P(0) = int p0` and `P_i(0) = int a^(i-1) exp(-rho a) p0(a) da` for
/// `i = 1..n`: closed form `c (i-1)! / (rho + lambda)^i` for the exponential
/// kind, composite Simpson on the table's own grid otherwise (zero beyond the
/// last age, so there is no truncation error).
pub fn density_moments(p0: &InitialDensity, rho: f64, n: usize) -> StateVector {
    match p0 {
        InitialDensity::Exponential { c, lambda } => {
            let rate = rho + lambda;
            let fact = factorials(n);
            let moments = fact
                .iter()
                .enumerate()
                .map(|(i, f)| c * f / rate.powi(i as i32 + 1))
                .collect();
            StateVector::new(c / lambda, moments)
        }
        InitialDensity::Tabulated { ages, values } => {
            let mut weighted: Vec<f64> = ages
                .iter()
                .zip(values)
                .map(|(a, v)| (-rho * a).exp() * v)
                .collect();
            let mut moments = Vec::with_capacity(n);
            for _ in 0..n {
                moments.push(simpson(ages, &weighted));
                for (w, a) in weighted.iter_mut().zip(ages) {
                    *w *= a;
                }
            }
            StateVector::new(simpson(ages, values), moments)
        }
    }
}
