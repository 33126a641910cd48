//! Acceptance suite: ten criteria, one PASS/FAIL line each, exit code 0 only
//! when all pass.
//!
//! Reference configurations:
//! - REF1: n = 1, beta = [1], rho = mu0 = 0.5, phi = 1/(1+x), psi = x, r0 = 4,
//!   equilibrium (P, P1) = (1, 0.75), B* = 1.5.
//! - REF2: n = 2, beta = [0.5, 0.5], same rates and feedback, r0 = 16/3,
//!   equilibrium (1, 0.75, 0.375), B* = 1.5.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use agestruct::linalg::Matrix;
use agestruct::model::{
    density_moments, normalize_betas, Feedback, FeedbackSpec, InitialDensity, ModelParams, PhiFamily, PsiFamily,
};
use agestruct::oracle::{cross_validate, OracleSettings};
use agestruct::reconstruct::{consistency_check, default_age_grid, reconstruct_density};
use agestruct::reduce::{integrate, rhs, IntegrateOptions, Sampling, Stepper};
use agestruct::stability::{classify, jacobian_at, EquilibriumKind, Verdict};
use agestruct::steady::{
    bifurcation_sweep, equilibrium, net_reproduction, reproduction_derivative, steady_state, ROOT_TOL,
};
use agestruct::StateVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn hill_linear() -> FeedbackSpec {
    FeedbackSpec::new(PhiFamily::Hill { k: 1.0, m: 1.0 }, PsiFamily::Linear { c: 1.0 }).unwrap()
}

fn ref1_params(r0: f64) -> ModelParams {
    ModelParams::new(vec![1.0], 0.5, 0.5, r0).unwrap()
}

fn ref2_params() -> ModelParams {
    ModelParams::new(vec![0.5, 0.5], 0.5, 0.5, 16.0 / 3.0).unwrap()
}

fn random_feedback(rng: &mut ChaCha8Rng) -> FeedbackSpec {
    let phi = if rng.gen_bool(0.5) {
        PhiFamily::Exponential { k: rng.gen_range(0.5..3.0) }
    } else {
        PhiFamily::Hill {
            k: rng.gen_range(0.5..3.0),
            m: rng.gen_range(1.0..3.0),
        }
    };
    let psi = if rng.gen_bool(0.5) {
        PsiFamily::Linear { c: rng.gen_range(0.2..2.0) }
    } else {
        PsiFamily::Power {
            c: rng.gen_range(0.2..2.0),
            gamma: rng.gen_range(1.0..3.0),
        }
    };
    FeedbackSpec::new(phi, psi).unwrap()
}

/// Normalized random model with `n <= max_n` and `r0` in `r0_range`.
fn random_params(rng: &mut ChaCha8Rng, max_n: usize, r0_lo: f64, r0_hi: f64) -> ModelParams {
    let n = rng.gen_range(1..=max_n);
    let rho = rng.gen_range(0.1..2.0);
    let mu0 = rng.gen_range(0.1..2.0);
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..2.0)).collect();
    let betas = normalize_betas(&raw, rho, mu0).unwrap();
    // Half-open (r0_lo, r0_hi].
    let r0 = r0_hi - rng.gen::<f64>() * (r0_hi - r0_lo);
    ModelParams::new(betas, rho, mu0, r0).unwrap()
}

/// `sum_i beta_i i! / rate^(i+1)` with the factorial built up term by term.
fn gamma_sum(betas: &[f64], rate: f64) -> f64 {
    let mut total = 0.0;
    let mut fact = 1.0;
    for (i, b) in betas.iter().enumerate() {
        if i > 0 {
            fact *= i as f64;
        }
        total += b * fact / rate.powi(i as i32 + 1);
    }
    total
}

/// The moment system written out directly, without the library.
fn moment_field(y: &[f64], params: &ModelParams, fb: &FeedbackSpec) -> Vec<f64> {
    let betas = params.betas();
    let n = betas.len();
    let (x, mu0, rho, r0) = (y[0], params.mu0(), params.rho(), params.r0());
    let (phi, psi) = (fb.phi(x), fb.psi(x));
    let mut out = vec![0.0; n + 1];
    let weighted: f64 = (0..n).map(|i| betas[i] * y[i + 1]).sum();
    out[0] = -(mu0 + psi) * x + r0 * phi * weighted;
    let tail: f64 = (1..n).map(|i| betas[i] * y[i + 1]).sum();
    out[1] = (r0 * betas[0] * phi - rho - mu0 - psi) * y[1] + r0 * phi * tail;
    for i in 1..n {
        out[i + 1] = i as f64 * y[i] - (rho + mu0 + psi) * y[i + 1];
    }
    out
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_norm = 0.0f64;
    let mut worst_r0 = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=8);
        let rho = rng.gen_range(0.05..3.0);
        let mu0 = rng.gen_range(0.05..3.0);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..5.0)).collect();
        let betas = normalize_betas(&raw, rho, mu0).map_err(|e| e.to_string())?;
        worst_norm = worst_norm.max((gamma_sum(&betas, rho + mu0) - 1.0).abs());
        let r0 = rng.gen_range(0.1..20.0);
        let params = ModelParams::new(betas, rho, mu0, r0).unwrap();
        let r = net_reproduction(0.0, &params, &random_feedback(&mut rng)).unwrap();
        worst_r0 = worst_r0.max((r - r0).abs() / r0);
    }
    check(
        worst_norm <= 1e-12 && worst_r0 <= 1e-12,
        format!("max |sum - 1| = {worst_norm:.2e}, max |R(0) - r0|/r0 = {worst_r0:.2e}"),
    )
}

fn criterion_2() -> Outcome {
    let fb = hill_linear();
    let mut worst = 0.0f64;
    for r0 in [1.21, 4.0, 9.0] {
        let p = steady_state(&ref1_params(r0), &fb, ROOT_TOL)
            .unwrap()
            .ok_or(format!("no root for r0 = {r0}"))?;
        worst = worst.max((p - (r0.sqrt() - 1.0)).abs());
    }
    for r0 in [0.25, 0.9, 1.0] {
        if steady_state(&ref1_params(r0), &fb, ROOT_TOL).unwrap().is_some() {
            return Err(format!("nontrivial root reported for r0 = {r0}"));
        }
    }
    for r0 in [1.0001, 1.01, 100.0] {
        if steady_state(&ref1_params(r0), &fb, ROOT_TOL).unwrap().is_none() {
            return Err(format!("no root reported for r0 = {r0} > 1"));
        }
    }
    check(worst <= 1e-10, format!("max |P* - (sqrt(r0) - 1)| = {worst:.2e}; r0 <= 1 gives none"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let params = random_params(&mut rng, 6, 1.0, 20.0);
        let fb = random_feedback(&mut rng);
        let eq = equilibrium(&params, &fb).map_err(|e| e.to_string())?;
        if !eq.exists {
            return Err(format!("no equilibrium for r0 = {}", params.r0()));
        }
        let mut y = vec![eq.p_star];
        y.extend(&eq.moments_star);
        let residual = moment_field(&y, &params, &fb).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(residual).max(eq.residual_inf_norm);
    }
    check(worst <= 1e-10, format!("max residual inf-norm over 50 configs = {worst:.2e}"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_rel = 0.0f64;
    for _ in 0..20 {
        let params = random_params(&mut rng, 6, 1.0, 20.0);
        let fb = random_feedback(&mut rng);
        let mut xs: Vec<f64> = (0..100).map(|_| rng.gen_range(1e-3..5.0)).collect();
        xs.sort_by(f64::total_cmp);
        let mut prev = f64::INFINITY;
        for &x in &xs {
            let r = net_reproduction(x, &params, &fb).unwrap();
            if !(r < prev) {
                return Err(format!("R not strictly decreasing at x = {x}"));
            }
            prev = r;
            let d = reproduction_derivative(x, &params, &fb).unwrap();
            if !(d < 0.0) {
                return Err(format!("R'({x}) = {d} is not negative"));
            }
            let h = f64::EPSILON.cbrt() * x.max(1.0);
            let fd = (net_reproduction(x + h, &params, &fb).unwrap() - net_reproduction(x - h, &params, &fb).unwrap())
                / (2.0 * h);
            worst_rel = worst_rel.max((fd - d).abs() / d.abs());
        }
    }
    check(
        worst_rel <= 1e-6,
        format!("2000 points strictly decreasing, R' < 0; max |fd - R'|/|R'| = {worst_rel:.2e}"),
    )
}

fn criterion_5() -> Outcome {
    let params = ModelParams::new(vec![1.0], 0.5, 0.5, 2.0).unwrap();
    let fb = FeedbackSpec::linear();
    let init = StateVector::new(1.0, vec![1.0]);
    let exact = 1f64.exp();
    let p1_at_1 = |stepper: Stepper| -> Result<f64, String> {
        let opts = IntegrateOptions {
            stepper,
            sampling: Sampling::Uniform(2),
        };
        let traj = integrate(&init, &params, &fb, 1.0, &opts).map_err(|e| e.to_string())?;
        Ok(traj.states[1].moments[0])
    };
    let rk4 = (p1_at_1(Stepper::Rk4 { h: 1e-3 })? - exact).abs() / exact;
    let rk45 = (p1_at_1(Stepper::default())? - exact).abs() / exact;
    // The order is read off where truncation error dominates round-off:
    // at h = 1e-3 the rk4 error is already at the 1e-14 level.
    let coarse = (p1_at_1(Stepper::Rk4 { h: 0.1 })? - exact).abs();
    let fine = (p1_at_1(Stepper::Rk4 { h: 0.05 })? - exact).abs();
    let ratio = coarse / fine;
    check(
        rk4 <= 1e-8 && rk45 <= 1e-8 && (12.0..=20.0).contains(&ratio),
        format!("rel err rk4(h=1e-3) {rk4:.2e}, rk45 {rk45:.2e}; rk4 ratio e(0.1)/e(0.05) = {ratio:.2}"),
    )
}

fn criterion_6() -> Outcome {
    let params = ref1_params(4.0);
    let fb = hill_linear();
    let mut lines = Vec::new();
    let mut ok = true;
    for (label, c, horizon) in [("stationary", 1.5, 5.0), ("perturbed", 1.65, 10.0)] {
        let p0 = InitialDensity::exponential(c, 1.5).unwrap();
        let run = |dt: f64| {
            cross_validate(&params, &fb, &p0, horizon, &OracleSettings { dt, tol: 1e-10, k_max: 500 })
                .map_err(|e| e.to_string())
        };
        let coarse = run(0.004)?;
        let fine = run(0.002)?;
        let order_p = (coarse.gap_p / fine.gap_p).log2();
        let order_b = (coarse.gap_b / fine.gap_b).log2();
        ok &= fine.max_gap() <= 5e-3 && order_p >= 1.8 && order_b >= 1.8;
        lines.push(format!(
            "{label} T={horizon}: gaps P {:.2e} B {:.2e} at dt=0.002, order {order_p:.2}/{order_b:.2}",
            fine.gap_p, fine.gap_b
        ));
    }
    check(ok, lines.join("; "))
}

fn criterion_7() -> Outcome {
    let fb = hill_linear();
    let mut worst = 0.0f64;
    for (params, p0) in [
        (ref1_params(4.0), InitialDensity::exponential(1.0, 1.0).unwrap()),
        (ref2_params(), InitialDensity::exponential(2.0, 0.8).unwrap()),
    ] {
        let init = density_moments(&p0, params.rho(), params.n());
        let traj = integrate(&init, &params, &fb, 20.0, &IntegrateOptions::default()).map_err(|e| e.to_string())?;
        let grid = default_age_grid(&traj, &p0, &params);
        for k in 1..=10 {
            let t = 2.0 * k as f64 - 0.5;
            let field = reconstruct_density(&traj, &p0, &params, t, &grid).map_err(|e| e.to_string())?;
            if field.values.iter().any(|v| *v < 0.0) {
                return Err(format!("negative density at t = {t}"));
            }
            let rep = consistency_check(&field, &traj, &p0, &params, &fb).map_err(|e| e.to_string())?;
            worst = worst.max(rep.relative_error);
        }
    }

    let params = ref1_params(4.0);
    let p0 = InitialDensity::exponential(1.65, 1.5).unwrap();
    let init = density_moments(&p0, params.rho(), params.n());
    let traj = integrate(&init, &params, &fb, 60.0, &IntegrateOptions::default()).map_err(|e| e.to_string())?;
    let grid = default_age_grid(&traj, &p0, &params);
    let field = reconstruct_density(&traj, &p0, &params, 60.0, &grid).map_err(|e| e.to_string())?;
    let pointwise = grid
        .iter()
        .zip(&field.values)
        .map(|(a, v)| (v - 1.5 * (-1.5 * a).exp()).abs())
        .fold(0.0f64, f64::max);
    check(
        worst <= 1e-4 && pointwise <= 1e-6,
        format!("max relative mass error {worst:.2e} (20 fields); stationary sup error at t=60 {pointwise:.2e}"),
    )
}

fn finite_difference_jacobian(y: &[f64], params: &ModelParams, fb: &FeedbackSpec) -> Matrix {
    let dim = y.len();
    let mut j = Matrix::zeros(dim, dim);
    for c in 0..dim {
        let h = 1e-6 * y[c].abs().max(1.0);
        let mut plus = y.to_vec();
        let mut minus = y.to_vec();
        plus[c] += h;
        minus[c] -= h;
        let fp = rhs(&StateVector::from_slice(&plus), params, fb).unwrap().to_vec();
        let fm = rhs(&StateVector::from_slice(&minus), params, fb).unwrap().to_vec();
        for r in 0..dim {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

fn criterion_8() -> Outcome {
    let params = ref1_params(4.0);
    let fb = hill_linear();
    let eq = equilibrium(&params, &fb).unwrap();
    let rep = classify(&eq, EquilibriumKind::Nontrivial, &params, &fb).map_err(|e| e.to_string())?;
    let jac_err = rep
        .jacobian
        .max_abs_diff(&Matrix::from_rows(&[vec![-3.25, 2.0], vec![-1.5, 0.0]]));
    // lambda^2 + 3.25 lambda + 3 = 0
    let im = (3.0f64 - 1.625 * 1.625).sqrt();
    let eig_err = rep
        .eigenvalues
        .iter()
        .map(|z| (z.re + 1.625).abs().max((z.im.abs() - im).abs()))
        .fold(0.0f64, f64::max);
    let conj = rep.eigenvalues.len() == 2 && rep.eigenvalues[0].im * rep.eigenvalues[1].im < 0.0;
    let trivial = classify(&eq, EquilibriumKind::Trivial, &params, &fb).map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut fd_err = 0.0f64;
    for _ in 0..50 {
        let params = random_params(&mut rng, 6, 1.0, 20.0);
        let fb = random_feedback(&mut rng);
        let mut y = vec![rng.gen_range(0.1..3.0)];
        y.extend((0..params.n()).map(|_| rng.gen_range(0.0..3.0)));
        let analytic = jacobian_at(&StateVector::from_slice(&y), &params, &fb).unwrap();
        fd_err = fd_err.max(analytic.max_abs_diff(&finite_difference_jacobian(&y, &params, &fb)));
    }
    check(
        jac_err <= 1e-10
            && eig_err <= 1e-6
            && conj
            && rep.verdict == Verdict::AsymptoticallyStable
            && trivial.verdict == Verdict::Unstable
            && fd_err <= 1e-5,
        format!(
            "jacobian err {jac_err:.1e}, eigenvalue err {eig_err:.1e}, verdict {}, trivial {}, fd gap {fd_err:.1e}",
            rep.verdict, trivial.verdict
        ),
    )
}

fn criterion_9() -> Outcome {
    let fb = hill_linear();
    let grid: Vec<f64> = (0..100).map(|k| 1.01 + (10.0 - 1.01) * k as f64 / 99.0).collect();
    let mut details = Vec::new();
    let mut ok = true;
    for (label, base) in [("REF1", ref1_params(4.0)), ("REF2", ref2_params())] {
        let rows = bifurcation_sweep(&base, &fb, &grid).map_err(|e| e.to_string())?;
        let p: Option<Vec<f64>> = rows.iter().map(|r| r.p_star).collect();
        let Some(p) = p else {
            return Err(format!("{label}: missing nontrivial root on the grid"));
        };
        let increasing = p.windows(2).all(|w| w[1] > w[0]);
        ok &= increasing && p[0] < 0.01;
        details.push(format!("{label}: increasing={increasing}, P*(1.01)={:.3e}", p[0]));
    }
    check(ok, details.join("; "))
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_agestruct"))
        .args(args)
        .env_remove("AGESTRUCT_OUTDIR")
        .output()
        .expect("binary runs")
}

fn run_cli_case(dir: &Path, name: &str, text: &str, command: &str) -> std::process::Output {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    let out = dir.join(format!("{name}.out"));
    cli(&[command, "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn criterion_10() -> Outcome {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let ref1 = std::fs::read_to_string(fixtures.join("ref1.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = run_cli_case(dir.path(), "a.json", &ref1, "simulate");
    let b = run_cli_case(dir.path(), "b.json", &ref1, "simulate");
    if !(a.status.success() && b.status.success()) {
        return Err(format!("simulate failed: {}", String::from_utf8_lossy(&a.stderr)));
    }
    let ca = std::fs::read(dir.path().join("a.json.out/trajectory.csv")).unwrap();
    let cb = std::fs::read(dir.path().join("b.json.out/trajectory.csv")).unwrap();
    if ca != cb {
        return Err("trajectory.csv differs between identical runs".into());
    }

    let cases: [(&str, String, &str, i32, &str); 5] = [
        ("negative beta", ref1.replace("[1.0]", "[-1.0]"), "steady", 3, "betas[0]"),
        ("unknown key", ref1.replace("\"rho\"", "\"betaa\": 1.0, \"rho\""), "steady", 2, "betaa"),
        ("malformed", "{\"model\": ".to_string(), "steady", 2, ""),
        (
            "missing section",
            ref1.replace("\"sweep\": {\"r0_grid\": [1.0, 1.21, 4.0, 9.0]},", ""),
            "sweep",
            2,
            "missing section `sweep`",
        ),
        (
            "threshold",
            ref1.replace("\"gap_threshold\": 5e-3", "\"gap_threshold\": 1e-12"),
            "validate",
            1,
            "threshold",
        ),
    ];
    let mut seen = Vec::new();
    for (i, (label, text, command, code, needle)) in cases.iter().enumerate() {
        let out = run_cli_case(dir.path(), &format!("case{i}.json"), text, command);
        let stderr = String::from_utf8_lossy(&out.stderr);
        if out.status.code() != Some(*code) || !stderr.contains(needle) {
            return Err(format!("{label}: exit {:?}, stderr {stderr}", out.status.code()));
        }
        seen.push(format!("{label}={code}"));
    }
    let missing_cfg = cli(&["steady", "--config", dir.path().join("nope.json").to_str().unwrap()]);
    if missing_cfg.status.code() != Some(2) {
        return Err(format!("missing config: exit {:?}", missing_cfg.status.code()));
    }
    Ok(format!("{} identical bytes; exit codes {}", ca.len(), seen.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("normalization identity", criterion_1, Duration::from_secs(1)),
        ("steady-state closed form", criterion_2, Duration::from_secs(1)),
        ("explicit equilibrium residual", criterion_3, Duration::from_secs(5)),
        ("monotone net reproduction", criterion_4, Duration::from_secs(5)),
        ("linear-mode exact solution", criterion_5, Duration::from_secs(5)),
        ("reduction vs Volterra oracle", criterion_6, Duration::from_secs(60)),
        ("reconstruction mass consistency", criterion_7, Duration::from_secs(30)),
        ("stability of the equilibria", criterion_8, Duration::from_secs(5)),
        ("forward bifurcation", criterion_9, Duration::from_secs(5)),
        ("CLI determinism and exit codes", criterion_10, Duration::from_secs(10)),
    ];
    let mut failed = 0;
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {budget:?} budget")),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "{} {:>2} {name} ({:.2} s): {detail}",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
