//! Run configuration: a single strict JSON document.

use std::path::{Path, PathBuf};

use agestruct::model::{normalize_betas, FeedbackSpec, InitialDensity, ModelParams, PhiFamily, PsiFamily};
use agestruct::oracle::OracleSettings;
use agestruct::reduce::{IntegrateOptions, Sampling, Stepper};
use agestruct::Error;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub feedback: FeedbackSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_density: Option<InitialDensity>,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconstruction: Option<ReconstructionSection>,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub betas: Vec<f64>,
    pub rho: f64,
    pub mu0: f64,
    pub r0: f64,
    #[serde(default)]
    pub normalize_betas: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<PhiFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<PsiFamily>,
    #[serde(default)]
    pub linear_mode: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4,
    #[default]
    Rk45,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default)]
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_rtol() -> f64 {
    1e-8
}
fn default_atol() -> f64 {
    1e-10
}
fn default_t_end() -> f64 {
    50.0
}
fn default_samples() -> usize {
    1001
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            method: Method::default(),
            h: None,
            rtol: default_rtol(),
            atol: default_atol(),
            t_end: default_t_end(),
            samples: default_samples(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionSection {
    pub times: Vec<f64>,
    /// Last grid age; chosen from the truncation bound when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_max: Option<f64>,
    #[serde(default = "default_age_step")]
    pub age_step: f64,
}

fn default_age_step() -> f64 {
    agestruct::reconstruct::DEFAULT_AGE_STEP
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_gap_threshold")]
    pub gap_threshold: f64,
}

fn default_horizon() -> f64 {
    5.0
}
fn default_dt() -> f64 {
    0.002
}
fn default_tol() -> f64 {
    1e-10
}
fn default_k_max() -> usize {
    500
}
fn default_gap_threshold() -> f64 {
    5e-3
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            dt: default_dt(),
            tol: default_tol(),
            k_max: default_k_max(),
            gap_threshold: default_gap_threshold(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub r0_grid: Vec<f64>,
}

/// A configuration checked against the model invariants.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub raw: RunConfig,
    pub params: ModelParams,
    pub feedback: FeedbackSpec,
    pub p0: Option<InitialDensity>,
    pub integrate: IntegrateOptions,
    pub t_end: f64,
    pub oracle: OracleSettings,
}

impl Resolved {
    pub fn initial_density(&self, command: &str) -> Result<&InitialDensity, Failure> {
        self.p0.as_ref().ok_or_else(|| missing("initial_density", command))
    }

    pub fn reconstruction(&self, command: &str) -> Result<&ReconstructionSection, Failure> {
        self.raw.reconstruction.as_ref().ok_or_else(|| missing("reconstruction", command))
    }

    pub fn sweep(&self, command: &str) -> Result<&SweepSection, Failure> {
        self.raw.sweep.as_ref().ok_or_else(|| missing("sweep", command))
    }
}

fn missing(section: &str, command: &str) -> Failure {
    Failure::schema(format!("missing section `{section}`, required by `{command}`"))
}

/// Read, parse and validate a configuration file.
pub fn load_config(path: &Path) -> Result<Resolved, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::schema(format!("cannot read {}: {e}", path.display())))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let raw: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let at = e.path().to_string();
        if at == "." {
            Failure::schema(e.into_inner().to_string())
        } else {
            Failure::schema(format!("{at}: {}", e.into_inner()))
        }
    })?;
    de.end().map_err(|e| Failure::schema(e.to_string()))?;
    resolve(raw)
}

fn qualify(prefix: &str) -> impl Fn(Error) -> Failure + '_ {
    move |e| match e {
        Error::Parameter { field, reason } => Failure::invariant(format!("{prefix}.{field}: {reason}")),
        other => Failure::invariant(format!("{prefix}: {other}")),
    }
}

fn positive(field: &str, v: f64) -> Result<(), Failure> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Failure::invariant(format!("{field}: must be a finite positive number, got {v}")))
    }
}

pub fn resolve(raw: RunConfig) -> Result<Resolved, Failure> {
    let m = &raw.model;
    let params = ModelParams::new(m.betas.clone(), m.rho, m.mu0, m.r0).map_err(qualify("model"))?;
    let params = if m.normalize_betas {
        let betas = normalize_betas(params.betas(), m.rho, m.mu0).map_err(qualify("model"))?;
        ModelParams::new(betas, m.rho, m.mu0, m.r0).map_err(qualify("model"))?
    } else {
        params
    };

    let f = &raw.feedback;
    let feedback = match (f.linear_mode, f.phi, f.psi) {
        (true, None, None) => FeedbackSpec::linear(),
        (true, _, _) => {
            return Err(Failure::invariant(
                "feedback: phi and psi must be omitted when linear_mode is true",
            ))
        }
        (false, Some(phi), Some(psi)) => FeedbackSpec::new(phi, psi).map_err(qualify("feedback"))?,
        (false, None, _) => return Err(Failure::schema("feedback.phi: missing (required unless linear_mode)")),
        (false, _, None) => return Err(Failure::schema("feedback.psi: missing (required unless linear_mode)")),
    };

    let p0 = match &raw.initial_density {
        None => None,
        Some(InitialDensity::Exponential { c, lambda }) => {
            Some(InitialDensity::exponential(*c, *lambda).map_err(qualify("initial_density"))?)
        }
        Some(InitialDensity::Tabulated { ages, values }) => Some(
            InitialDensity::tabulated(ages.clone(), values.clone()).map_err(qualify("initial_density"))?,
        ),
    };

    let g = &raw.integrator;
    positive("integrator.t_end", g.t_end)?;
    if g.samples < 2 {
        return Err(Failure::invariant(format!("integrator.samples: must be at least 2, got {}", g.samples)));
    }
    let stepper = match (g.method, g.h) {
        (Method::Rk4, Some(h)) => {
            positive("integrator.h", h)?;
            Stepper::Rk4 { h }
        }
        (Method::Rk4, None) => return Err(Failure::schema("integrator.h: required when method is rk4")),
        (Method::Rk45, Some(_)) => {
            return Err(Failure::invariant("integrator.h: only meaningful when method is rk4"))
        }
        (Method::Rk45, None) => {
            positive("integrator.rtol", g.rtol)?;
            positive("integrator.atol", g.atol)?;
            Stepper::Rk45 { rtol: g.rtol, atol: g.atol }
        }
    };

    if let Some(r) = &raw.reconstruction {
        if r.times.is_empty() {
            return Err(Failure::invariant("reconstruction.times: at least one time is required"));
        }
        for (i, &t) in r.times.iter().enumerate() {
            if !(t.is_finite() && t >= 0.0 && t <= g.t_end) {
                return Err(Failure::invariant(format!(
                    "reconstruction.times[{i}]: must lie in [0, integrator.t_end = {}], got {t}",
                    g.t_end
                )));
            }
        }
        if let Some(a) = r.age_max {
            positive("reconstruction.age_max", a)?;
        }
        positive("reconstruction.age_step", r.age_step)?;
    }

    let o = &raw.oracle;
    positive("oracle.horizon", o.horizon)?;
    positive("oracle.dt", o.dt)?;
    positive("oracle.tol", o.tol)?;
    positive("oracle.gap_threshold", o.gap_threshold)?;
    if o.k_max == 0 {
        return Err(Failure::invariant("oracle.k_max: must be at least 1"));
    }

    if let Some(s) = &raw.sweep {
        if s.r0_grid.is_empty() {
            return Err(Failure::invariant("sweep.r0_grid: at least one value is required"));
        }
        for (i, &r) in s.r0_grid.iter().enumerate() {
            positive(&format!("sweep.r0_grid[{i}]"), r)?;
        }
    }

    Ok(Resolved {
        integrate: IntegrateOptions {
            stepper,
            sampling: Sampling::Uniform(g.samples),
        },
        t_end: g.t_end,
        oracle: OracleSettings {
            dt: o.dt,
            tol: o.tol,
            k_max: o.k_max,
        },
        params,
        feedback,
        p0,
        raw,
    })
}
