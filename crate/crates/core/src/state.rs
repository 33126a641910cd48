use serde::Serialize;

use crate::error::{Error, Result};

/// Reduced state of the separable model: total population `p` and the
/// weighted moments `P_i = int a^(i-1) exp(-rho a) p(a) da`, `i = 1..n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateVector {
    pub p: f64,
    pub moments: Vec<f64>,
}

impl StateVector {
    pub fn new(p: f64, moments: Vec<f64>) -> Self {
        Self { p, moments }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            p: 0.0,
            moments: vec![0.0; n],
        }
    }

    /// Build from a flat `[p, P_1, .., P_n]` slice.
    pub fn from_slice(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "state needs at least the total population");
        Self {
            p: values[0],
            moments: values[1..].to_vec(),
        }
    }

    pub fn n(&self) -> usize {
        self.moments.len()
    }

    /// Flat `[p, P_1, .., P_n]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.moments.len() + 1);
        v.push(self.p);
        v.extend_from_slice(&self.moments);
        v
    }

    pub fn inf_norm(&self) -> f64 {
        self.moments.iter().fold(self.p.abs(), |m, v| m.max(v.abs()))
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if self.p.is_finite() && self.moments.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Domain(format!("state has non-finite entries: {self:?}")))
        }
    }
}
