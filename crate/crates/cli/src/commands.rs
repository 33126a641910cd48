use agestruct::export::{convergence_log, density_csv, oracle_csv, sweep_csv, trajectory_csv};
use agestruct::model::density_moments;
use agestruct::oracle::cross_validate;
use agestruct::reconstruct::{
    consistency_check, default_age_grid, density_file_name, reconstruct_density, uniform_grid,
};
use agestruct::reduce::{integrate, Trajectory};
use agestruct::stability::{classify, EquilibriumKind, StabilityReport};
use agestruct::steady::{bifurcation_sweep, equilibrium, EquilibriumReport};
use serde::Serialize;
use serde_json::json;

use crate::config::Resolved;
use crate::failure::Failure;
use crate::output::OutputDir;

#[derive(Debug, Serialize)]
struct SteadyReport {
    equilibrium: EquilibriumReport,
    /// Nontrivial equilibrium, when it exists.
    stability: Option<StabilityReport>,
    trivial_stability: StabilityReport,
}

fn steady_report(cfg: &Resolved) -> Result<SteadyReport, Failure> {
    let eq = equilibrium(&cfg.params, &cfg.feedback)?;
    let stability = if eq.exists {
        Some(classify(&eq, EquilibriumKind::Nontrivial, &cfg.params, &cfg.feedback)?)
    } else {
        None
    };
    let trivial_stability = classify(&eq, EquilibriumKind::Trivial, &cfg.params, &cfg.feedback)?;
    Ok(SteadyReport {
        equilibrium: eq,
        stability,
        trivial_stability,
    })
}

pub fn steady(cfg: &Resolved, out: &mut OutputDir) -> Result<(), Failure> {
    let report = steady_report(cfg)?;
    let eq = &report.equilibrium;
    if eq.exists {
        let st = report.stability.as_ref().expect("classified above");
        eprintln!("nontrivial equilibrium P* = {:?}", eq.p_star);
        eprintln!("  moments P_i*    = {:?}", eq.moments_star);
        eprintln!("  birth rate B*   = {:?}", eq.birth_rate_star);
        eprintln!("  residual        = {:e}", eq.residual_inf_norm);
        eprintln!("  verdict         = {} (spectral abscissa {:e})", st.verdict, st.spectral_abscissa);
    } else {
        eprintln!("R(0) <= 1: only the trivial equilibrium exists");
    }
    eprintln!("trivial equilibrium: {}", report.trivial_stability.verdict);
    let text = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
    println!("{text}");
    out.write_json("steady.json", &report, "steady")?;
    Ok(())
}

fn run_trajectory(cfg: &Resolved, command: &str) -> Result<Trajectory, Failure> {
    let p0 = cfg.initial_density(command)?;
    let init = density_moments(p0, cfg.params.rho(), cfg.params.n());
    Ok(integrate(&init, &cfg.params, &cfg.feedback, cfg.t_end, &cfg.integrate)?)
}

pub fn simulate(cfg: &Resolved, out: &mut OutputDir) -> Result<(), Failure> {
    let traj = run_trajectory(cfg, "simulate")?;
    out.write("trajectory.csv", &trajectory_csv(&traj), "simulate")?;
    let last = traj.states.last().expect("trajectory has samples");
    eprintln!(
        "integrated to t = {:?} in {} steps; P(t_end) = {:?}",
        traj.t_end(),
        traj.steps(),
        last.p
    );
    if traj.clamped > 0 {
        eprintln!("warning: {} small negative values were clamped to zero", traj.clamped);
    }
    Ok(())
}

pub fn reconstruct(cfg: &Resolved, out: &mut OutputDir) -> Result<(), Failure> {
    let section = cfg.reconstruction("reconstruct")?;
    let traj = run_trajectory(cfg, "reconstruct")?;
    let p0 = cfg.initial_density("reconstruct")?;
    let a_max = match section.age_max {
        Some(a) => a,
        None => *default_age_grid(&traj, p0, &cfg.params).last().expect("grid is nonempty"),
    };
    let grid = uniform_grid(a_max, section.age_step);
    let mut reports = Vec::new();
    for &t in &section.times {
        let field = reconstruct_density(&traj, p0, &cfg.params, t, &grid)?;
        let mass = consistency_check(&field, &traj, p0, &cfg.params, &cfg.feedback)?;
        eprintln!(
            "t = {:?}: mass {:?} vs P(t) {:?}, relative error {:e}",
            t, mass.integral, mass.p_reduced, mass.relative_error
        );
        out.write(&density_file_name(t), &density_csv(&field), "reconstruct")?;
        reports.push(json!({
            "time": t,
            "integral": mass.integral,
            "tail": mass.tail,
            "p_reduced": mass.p_reduced,
            "relative_error": mass.relative_error,
            "characteristic_jump": field.jump(),
        }));
    }
    out.write_json("mass_consistency.json", &reports, "reconstruct")?;
    Ok(())
}

pub fn sweep(cfg: &Resolved, out: &mut OutputDir) -> Result<(), Failure> {
    let section = cfg.sweep("sweep")?;
    let rows = bifurcation_sweep(&cfg.params, &cfg.feedback, &section.r0_grid)?;
    out.write("bifurcation.csv", &sweep_csv(&rows), "sweep")?;
    let nontrivial = rows.iter().filter(|r| r.exists()).count();
    eprintln!("{} of {} grid values carry a nontrivial equilibrium", nontrivial, rows.len());
    Ok(())
}

pub fn validate(cfg: &Resolved, out: &mut OutputDir) -> Result<(), Failure> {
    let p0 = cfg.initial_density("validate")?;
    let o = &cfg.raw.oracle;
    let rep = cross_validate(&cfg.params, &cfg.feedback, p0, o.horizon, &cfg.oracle)?;
    for (k, u) in &rep.oracle.log {
        log::debug!("{k},{u:e}");
    }
    out.write("oracle.csv", &oracle_csv(&rep.oracle), "validate")?;
    out.write("oracle_convergence.csv", &convergence_log(&rep.oracle), "validate")?;
    let passed = rep.max_gap() <= o.gap_threshold;
    let summary = json!({
        "horizon": rep.horizon,
        "dt": rep.dt,
        "gap_p": rep.gap_p,
        "gap_b": rep.gap_b,
        "gap_threshold": o.gap_threshold,
        "passed": passed,
        "iterations": rep.oracle.iterations,
        "update_norm": rep.oracle.update_norm,
    });
    out.write_json("validate.json", &summary, "validate")?;
    eprintln!(
        "oracle converged in {} iterations; gap P {:e}, gap B {:e} (threshold {:e})",
        rep.oracle.iterations, rep.gap_p, rep.gap_b, o.gap_threshold
    );
    if passed {
        Ok(())
    } else {
        Err(Failure::threshold(format!(
            "cross-validation gap {:e} exceeds the threshold {:e}",
            rep.max_gap(),
            o.gap_threshold
        )))
    }
}

pub fn report(cfg: &Resolved, out: &mut OutputDir) -> Result<(), Failure> {
    let missing = out.missing_files();
    if !missing.is_empty() {
        return Err(Failure::module(format!(
            "manifest lists files missing from {}: {}",
            out.root().display(),
            missing.join(", ")
        )));
    }
    let read = |name: &str| -> Result<Option<serde_json::Value>, Failure> {
        if !out.manifest.files.contains_key(name) {
            return Ok(None);
        }
        let text = std::fs::read_to_string(out.root().join(name))
            .map_err(|e| Failure::module(format!("cannot read {name}: {e}")))?;
        let value = serde_json::from_str(&text).map_err(|e| Failure::module(format!("malformed {name}: {e}")))?;
        Ok(Some(value))
    };
    let (equilibrium, stability) = match steady_report(cfg) {
        Ok(r) => (Some(r.equilibrium), r.stability),
        Err(e) => {
            eprintln!("equilibrium unavailable: {e}");
            (None, None)
        }
    };
    let summary = json!({
        "config": cfg.raw,
        "equilibrium": equilibrium,
        "stability": stability,
        "metrics": {
            "validate": read("validate.json")?,
            "mass_consistency": read("mass_consistency.json")?,
        },
        "manifest": out.manifest.files,
        "timings": out.manifest.timings,
    });
    out.write_json("summary.json", &summary, "report")?;
    eprintln!("summary of {} files written", out.manifest.files.len());
    Ok(())
}
