//! CSV renderings of results. Floats use the shortest representation that
//! round-trips, so identical runs give identical bytes.

use std::fmt::Write;

use crate::oracle::OracleSolution;
use crate::reconstruct::DensityField;
use crate::reduce::Trajectory;
use crate::steady::SweepRow;

/// Header `t,p,p1,..,pn,b,psi_int`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.params().n();
    let mut out = String::from("t,p");
    for i in 1..=n {
        let _ = write!(out, ",p{i}");
    }
    out.push_str(",b,psi_int\n");
    for (k, t) in traj.times.iter().enumerate() {
        let s = &traj.states[k];
        let _ = write!(out, "{t:?},{:?}", s.p);
        for m in &s.moments {
            let _ = write!(out, ",{m:?}");
        }
        let _ = writeln!(out, ",{:?},{:?}", traj.birth_rates[k], traj.psi_integral[k]);
    }
    out
}

/// Header `r0,p_star,exists`; `p_star` is 0 when no nontrivial root exists.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("r0,p_star,exists\n");
    for row in rows {
        let _ = writeln!(out, "{:?},{:?},{}", row.r0, row.p_star.unwrap_or(0.0), row.exists());
    }
    out
}

/// Header `a,p`.
pub fn density_csv(field: &DensityField) -> String {
    let mut out = String::from("a,p\n");
    for (a, p) in field.age_grid.iter().zip(&field.values) {
        let _ = writeln!(out, "{a:?},{p:?}");
    }
    out
}

/// Header `t,b,p`.
pub fn oracle_csv(sol: &OracleSolution) -> String {
    let mut out = String::from("t,b,p\n");
    for ((t, b), p) in sol.times.iter().zip(&sol.b).zip(&sol.p) {
        let _ = writeln!(out, "{t:?},{b:?},{p:?}");
    }
    out
}

/// Header `iter,update_norm`.
pub fn convergence_log(sol: &OracleSolution) -> String {
    let mut out = String::from("iter,update_norm\n");
    for (k, u) in &sol.log {
        let _ = writeln!(out, "{k},{u:?}");
    }
    out
}
