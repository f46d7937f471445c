//! The acceptance suite: ten criteria exercising the kernel
//! construction, the Poisson identities, the variational machinery and
//! the symmetry-breaking scan at fixed reference sizes (planar 64²,
//! N_z = 32, L = 12, ℓ = 1 unless a criterion states otherwise). Every
//! tolerance is pinned here.

use crate::fields::{
    convolve_direct, convolve_with_table, Field, GridSpec, KernelPart, PotentialSpec,
};
use crate::kernel::{
    build_kernel_table, image_sum_oracle, ode_apply, ode_green, KernelTable, SlabKernel,
};
use crate::poisson::{calibrated_kernel_table, newtonian_limit_experiment, BumpSpec};
use crate::solver::{ell_scan, ground_state, ground_state_with_seeds, SolverConfig, SymmetryClass};
use crate::variational::{random_smooth_field, VariationalContext};
use once_cell::sync::Lazy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

pub const REF_L: f64 = 12.0;
pub const REF_NX: usize = 64;
pub const REF_ELL: f64 = 1.0;
pub const REF_NZ: usize = 32;

/// Outcome of one criterion.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: String,
    pub pass: bool,
    pub seconds: f64,
    pub details: String,
    pub values: BTreeMap<String, f64>,
}

impl CriterionResult {
    fn new(id: &str) -> Self {
        CriterionResult {
            id: id.into(),
            pass: true,
            seconds: 0.0,
            details: String::new(),
            values: BTreeMap::new(),
        }
    }

    fn check(&mut self, ok: bool, what: &str) {
        if !ok {
            self.pass = false;
            if !self.details.is_empty() {
                self.details.push_str("; ");
            }
            self.details.push_str(&format!("FAILED: {what}"));
        }
    }

    fn note(&mut self, key: &str, value: f64) {
        self.values.insert(key.into(), value);
    }

    pub fn line(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        let extras: Vec<String> =
            self.values.iter().map(|(k, v)| format!("{k}={v:.3e}")).collect();
        let mut line = format!("{:<4} {} ({:.1}s) {}", self.id, status, self.seconds, extras.join(" "));
        if !self.details.is_empty() {
            line.push_str(&format!(" [{}]", self.details));
        }
        line
    }
}

pub const ALL_IDS: [&str; 10] =
    ["A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9", "A10"];

fn reference_grid() -> GridSpec {
    GridSpec::new(REF_L, REF_NX, REF_ELL, REF_NZ).unwrap()
}

static REFERENCE_TABLE: Lazy<(KernelTable, crate::poisson::CalibrationReport)> =
    Lazy::new(|| calibrated_kernel_table(&reference_grid(), 1e-10).expect("reference table"));

/// A1 — periodic ODE Green function: analytic cosine solution and the
/// derivative jump of h_r.
pub fn a1() -> CriterionResult {
    let t0 = Instant::now();
    let mut res = CriterionResult::new("A1");
    let ell = REF_ELL;
    let grid = |n: usize| -> Vec<f64> {
        let h = 2.0 * ell / n as f64;
        (0..n).map(|i| -ell + i as f64 * h).collect()
    };
    for &r in &[0.1, 1.0, 10.0] {
        let denom = 2.0 * PI * (r * r + PI * PI / (ell * ell));
        let max_err = |n: usize| -> f64 {
            let ts = grid(n);
            let fs: Vec<f64> = ts.iter().map(|t| (PI * t / ell).cos()).collect();
            let u = ode_apply(r, ell, &ts, &fs).unwrap();
            ts.iter()
                .zip(u.iter())
                .map(|(t, v)| (v + (PI * t / ell).cos() / denom).abs())
                .fold(0.0f64, f64::max)
        };
        let coarse = [max_err(16), max_err(32), max_err(64)];
        let e256 = max_err(256);
        res.note(&format!("err256_r{r}"), e256);
        res.check(e256 < 1e-8, &format!("r={r}: error {e256:.3e} at n=256 >= 1e-8"));
        let o1 = (coarse[0] / coarse[1]).log2();
        let o2 = (coarse[1] / coarse[2]).log2();
        res.note(&format!("order_r{r}"), o1.min(o2));
        res.check(
            o1 >= 1.9 && o2 >= 1.9,
            &format!("r={r}: observed orders {o1:.2}, {o2:.2} below 1.9"),
        );
    }
    // one-sided derivative jump of h_r at t = s
    let (r, s) = (1.3, 0.2);
    for &side in &[1.0f64, -1.0] {
        let g = |d: f64| ode_green(r, ell, s + side * d, s).unwrap();
        let d1 = (g(1e-4) - g(0.0)) / 1e-4;
        let d2 = (g(5e-5) - g(0.0)) / 5e-5;
        let jump = side * (2.0 * d2 - d1);
        let expect = side / (4.0 * PI); // +1/4pi from the right, -1/4pi from the left
        let err = (jump - expect).abs();
        res.note(if side > 0.0 { "jump_plus_err" } else { "jump_minus_err" }, err);
        res.check(err < 1e-6, &format!("derivative jump off by {err:.3e}"));
    }
    res.seconds = t0.elapsed().as_secs_f64();
    res
}

/// A2 — Fourier-route kernel versus the renormalized image sum over 100
/// offsets: one additive constant, deviations below 1e−6.
pub fn a2() -> CriterionResult {
    let t0 = Instant::now();
    let mut res = CriterionResult::new("A2");
    let kern = SlabKernel::new(REF_ELL).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut diffs = Vec::with_capacity(100);
    for _ in 0..100 {
        let target = (0.1f64.ln() + rng.gen::<f64>() * (50.0f64.ln() - 0.1f64.ln())).exp();
        let dz_max = REF_ELL.min(0.9 * target);
        let dz = rng.gen_range(-dz_max..dz_max);
        let rho = (target * target - dz * dz).max(0.0).sqrt();
        let angle = rng.gen_range(0.0..2.0 * PI);
        let offset = [rho * angle.cos(), rho * angle.sin(), dz];
        let kv = kern.k_eval(offset).unwrap();
        let or = image_sum_oracle(offset, REF_ELL, 10_000).unwrap();
        diffs.push(kv.total - or.value);
    }
    let mean: f64 = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let max_dev = diffs.iter().map(|d| (d - mean).abs()).fold(0.0f64, f64::max);
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;
    res.note("constant", mean);
    res.note("max_dev", max_dev);
    res.note("std", var.sqrt());
    res.check(max_dev < 1e-6, &format!("max deviation {max_dev:.3e} >= 1e-6"));
    res.seconds = t0.elapsed().as_secs_f64();
    res
}

/// A3 — table-exact kernel symmetry and the translation identity on 100
/// random grid triples.
pub fn a3() -> CriterionResult {
    let t0 = Instant::now();
    let mut res = CriterionResult::new("A3");
    let g = reference_grid();
    let table = &REFERENCE_TABLE.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // table lookup through the float offset path (round to lattice)
    let lookup = |offset: [f64; 3]| -> f64 {
        let mi = (offset[0] / g.h_x()).round() as i64;
        let ni = (offset[1] / g.h_x()).round() as i64;
        let ki = (offset[2] / g.h_z()).round() as i64;
        let m = mi.rem_euclid(table.dims[0] as i64) as usize;
        let n = ni.rem_euclid(table.dims[1] as i64) as usize;
        let k = ki.rem_euclid(table.dims[2] as i64) as usize;
        let idx = table.index(m, n, k);
        table.k1[idx] + table.k2[idx]
    };
    let mut max_sym: f64 = 0.0;
    let mut max_trans: f64 = 0.0;
    for _ in 0..100 {
        let pt = |rng: &mut ChaCha8Rng| -> [f64; 3] {
            [
                g.x_coord(rng.gen_range(0..g.n_x)),
                g.x_coord(rng.gen_range(0..g.n_x)),
                g.z_coord(rng.gen_range(0..g.n_z)),
            ]
        };
        let x = pt(&mut rng);
        let y = pt(&mut rng);
        let z = pt(&mut rng);
        let d_xy = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
        let d_yx = [y[0] - x[0], y[1] - x[1], y[2] - x[2]];
        max_sym = max_sym.max((lookup(d_xy) - lookup(d_yx)).abs());
        // K(x, y+z) vs K(x-z, y) with z treated as a translation vector
        let lhs = [x[0] - y[0] - z[0], x[1] - y[1] - z[1], x[2] - y[2] - z[2]];
        let rhs = [(x[0] - z[0]) - y[0], (x[1] - z[1]) - y[1], (x[2] - z[2]) - y[2]];
        max_trans = max_trans.max((lookup(lhs) - lookup(rhs)).abs());
    }
    res.note("max_symmetry_dev", max_sym);
    res.note("max_translation_dev", max_trans);
    res.check(max_sym < 1e-12, &format!("symmetry deviation {max_sym:.3e}"));
    res.check(max_trans < 1e-12, &format!("translation deviation {max_trans:.3e}"));
    res.seconds = t0.elapsed().as_secs_f64();
    res
}

/// A4 — logarithmic asymptotics of K₂ along three planar unit
/// directions at s ∈ {10², 10³, 10⁴}.
pub fn a4() -> CriterionResult {
    let t0 = Instant::now();
    let mut res = CriterionResult::new("A4");
    let kern =
        SlabKernel::new(REF_ELL).unwrap().with_calibration(REFERENCE_TABLE.0.calibration);
    let sq = 0.5f64.sqrt();
    let dirs = [[1.0, 0.0], [0.0, 1.0], [sq, sq]];
    let mut ratios = Vec::new();
    for dir in dirs {
        for &s in &[1e2, 1e3, 1e4] {
            let k2 = kern.k2_eval([s * dir[0], s * dir[1], 0.0]).unwrap();
            ratios.push(k2 / (1.0 + s).ln());
        }
    }
    let mx = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mn = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = (mx - mn) / (0.5 * (mx + mn));
    res.note("spread", spread);
    res.note("limit_estimate", *ratios.last().unwrap());
    res.check(spread < 0.01, &format!("relative spread {spread:.3e} >= 1%"));
    res.check(mn > 0.0, "ratio not positive");
    res.seconds = t0.elapsed().as_secs_f64();
    res
}

/// A5 — 2D collapse: calibrate on one Gaussian, validate the planar
/// logarithmic potential on a held-out density.
pub fn a5() -> CriterionResult {
    let t0 = Instant::now();
    let mut res = CriterionResult::new("A5");
    let report = &REFERENCE_TABLE.1;
    res.note("calibration_constant", report.constant);
    res.note("fit_residual", report.fit_residual);
    res.note("validation_residual", report.validation_residual);
    res.check(
        report.validation_residual < 1e-3,
        &format!("validation residual {:.3e} >= 1e-3", report.validation_residual),
    );
    res.seconds = t0.elapsed().as_secs_f64();
    res
}

/// A6 — Newtonian ℓ → ∞ limit: decreasing relative error, below 2% at
/// the largest ℓ = 16 × support radius.
pub fn a6() -> CriterionResult {
    let t0 = Instant::now();
    let mut res = CriterionResult::new("A6");
    let bump = BumpSpec { amplitude: 1.0, sigma: 0.008, support_radius: 0.032 };
    let ells: Vec<f64> =
        [2.0, 4.0, 8.0, 16.0].iter().map(|m| m * bump.support_radius).collect();
    match newtonian_limit_experiment(&bump, &ells, 24, 1e-9) {
        Ok(rows) => {
            for (i, r) in rows.iter().enumerate() {
                res.note(&format!("rel_err_{i}"), r.rel_err);
            }
            for w in rows.windows(2) {
                res.check(
                    w[1].rel_err < w[0].rel_err,
                    &format!("error not decreasing at ell={}", w[1].ell),
                );
            }
            let last = rows.last().unwrap();
            res.check(
                last.rel_err < 0.02,
                &format!("relative error {:.3e} at largest ell >= 2%", last.rel_err),
            );
        }
        Err(e) => res.check(false, &format!("experiment failed: {e}")),
    }
    res.seconds = t0.elapsed().as_secs_f64();
    res
}

/// A7 — FFT convolution equals the direct double sum on a 16×16×8 grid.
pub fn a7() -> CriterionResult {
    let t0 = Instant::now();
    let mut res = CriterionResult::new("A7");
    let g = GridSpec::new(2.0, 16, 1.0, 8).unwrap();
    let kern = SlabKernel::new(g.ell).unwrap();
    let table = build_kernel_table(g.n_x, g.n_z, g.h_x(), &kern).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut f = Field::zeros(g);
    for v in f.values.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let fast = convolve_with_table(&f, &table, KernelPart::Total).unwrap();
    let slow = convolve_direct(&f, &table, KernelPart::Total).unwrap();
    let scale = slow.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = fast
        .values
        .iter()
        .zip(slow.values.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max)
        / scale;
    res.note("rel_linf", err);
    res.check(err < 1e-10, &format!("relative difference {err:.3e} >= 1e-10"));
    res.seconds = t0.elapsed().as_secs_f64();
    res
}

/// A8 — gradient consistency: central finite differences against
/// ⟨g, v⟩_a on 10 random pairs.
pub fn a8() -> CriterionResult {
    let t0 = Instant::now();
    let mut res = CriterionResult::new("A8");
    let g = reference_grid();
    let a = PotentialSpec::constant(1.0).unwrap();
    let table = &REFERENCE_TABLE.0;
    let ctx = VariationalContext::new(g, &a, table).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let u = random_smooth_field(g, &mut rng);
        let v = random_smooth_field(g, &mut rng);
        let grad = ctx.gradient(&u).unwrap();
        let lhs = ctx.inner_a(&grad, &v);
        let eps = 1e-5;
        let fd = (ctx.phi(&u.axpy(eps, &v)).unwrap() - ctx.phi(&u.axpy(-eps, &v)).unwrap())
            / (2.0 * eps);
        let rel = (fd - lhs).abs() / lhs.abs().max(1e-300);
        worst = worst.max(rel);
    }
    res.note("worst_rel_err", worst);
    res.check(worst < 1e-5, &format!("worst relative error {worst:.3e} >= 1e-5"));
    res.seconds = t0.elapsed().as_secs_f64();
    res
}

fn reference_solver_config() -> SolverConfig {
    SolverConfig {
        class: SymmetryClass::Radial,
        max_iters: 6000,
        tol_grad: 1e-6,
        step0: 1.0,
        armijo_factor: 0.5,
        armijo_c: 1e-4,
        seed: 7,
        restarts: 2,
        seed_width: 1.0,
        seed_width_z: 0.7,
        seed_amplitude: 1.0,
    }
}

/// A9 — radial ground state at a ≡ 1: convergence, Nehari residual,
/// restart agreement, fiber maximum, and PDE-residual order under one
/// refinement.
pub fn a9() -> CriterionResult {
    let t0 = Instant::now();
    let mut res = CriterionResult::new("A9");
    let g = reference_grid();
    let a = PotentialSpec::constant(1.0).unwrap();
    let table = &REFERENCE_TABLE.0;
    let ctx = VariationalContext::new(g, &a, table).unwrap();
    let cfg = reference_solver_config();
    let report = match ground_state(&ctx, &cfg) {
        Ok(r) => r,
        Err(e) => {
            res.check(false, &format!("solve failed: {e}"));
            res.seconds = t0.elapsed().as_secs_f64();
            return res;
        }
    };
    res.note("phi", report.energy.phi);
    res.note("grad_norm", report.grad_norm);
    res.note("nehari_residual", report.nehari_residual);
    res.note("restart_dispersion", report.restart_dispersion);
    res.note("pde_residual_coarse", report.pde_residual);
    res.check(report.grad_norm < 1e-6, "gradient norm >= 1e-6");
    res.check(report.nehari_residual < 1e-10, "Nehari residual >= 1e-10");
    res.check(report.energy.phi > 0.0, "phi not positive");
    res.check(report.restart_dispersion < 1e-6, "restarts disagree beyond 1e-6");
    // fiber maximum at t = 1
    let ts = [0.5, 0.9, 1.1, 2.0];
    let phis = ctx.fiber_profile(&report.field, &ts).unwrap();
    for (i, &p) in phis.iter().enumerate() {
        res.check(
            report.energy.phi >= p - 1e-12 * report.energy.phi.abs(),
            &format!("fiber value at t={} above phi(u*)", ts[i]),
        );
    }
    // Refinement study of the PDE residual. The ground state at a = 1,
    // ell = 1 has width well under the reference spacing's asymptotic
    // range, so the order is measured on a tighter truncation box
    // (L = 6; truncation effects sit near 1e-5, three orders below the
    // residual) with the same two grid spacings one refinement apart.
    let study = || -> Result<(f64, f64), String> {
        let g1 = GridSpec::new(6.0, REF_NX, REF_ELL, REF_NZ).map_err(|e| e.to_string())?;
        let (t1, _) = calibrated_kernel_table(&g1, 1e-8).map_err(|e| e.to_string())?;
        let ctx1 = VariationalContext::new(g1, &a, &t1).map_err(|e| e.to_string())?;
        let mut cfg1 = cfg.clone();
        cfg1.restarts = 1;
        cfg1.seed_width = 0.8;
        cfg1.seed_width_z = 0.6;
        let r1 = ground_state(&ctx1, &cfg1).map_err(|e| e.to_string())?;
        let g2 =
            GridSpec::new(6.0, 2 * REF_NX, REF_ELL, 2 * REF_NZ).map_err(|e| e.to_string())?;
        let (t2, _) = calibrated_kernel_table(&g2, 1e-8).map_err(|e| e.to_string())?;
        let ctx2 = VariationalContext::new(g2, &a, &t2).map_err(|e| e.to_string())?;
        let mut cfg2 = cfg.clone();
        cfg2.restarts = 0;
        cfg2.max_iters = 8000;
        let warm = crate::solver::prolong(&r1.field, g2);
        let r2 = ground_state_with_seeds(&ctx2, &cfg2, &[warm]).map_err(|e| e.to_string())?;
        Ok((r1.pde_residual, r2.pde_residual))
    };
    match study() {
        Ok((coarse, fine)) => {
            let order = (coarse / fine).log2();
            res.note("pde_residual_h", coarse);
            res.note("pde_residual_h2", fine);
            res.note("residual_order", order);
            res.check(order >= 1.8, &format!("residual order {order:.2} below 1.8"));
        }
        Err(e) => res.check(false, &format!("refinement study failed: {e}")),
    }
    res.seconds = t0.elapsed().as_secs_f64();
    res
}

fn a10_window(ells: &[f64], res: &mut CriterionResult, label: &str) -> Option<bool> {
    let a = PotentialSpec::constant(1.0).unwrap();
    let cfg = reference_solver_config();
    let scan = match ell_scan(ells, REF_L, REF_NX, REF_NZ, &a, &cfg, 1e-9) {
        Ok(s) => s,
        Err(e) => {
            res.check(false, &format!("scan failed: {e}"));
            return None;
        }
    };
    let mut broken = false;
    for row in &scan.rows {
        if row.status != "ok" {
            res.check(false, &format!("row ell={} failed: {}", row.ell, row.status));
            continue;
        }
        res.note(&format!("{label}cr_minus_2lk_ell{}", row.ell), row.c_r - row.two_ell_kappa);
        res.note(&format!("{label}d3_radial_ell{}", row.ell), row.d3_radial);
        // (i) the planar extension is an admissible competitor
        res.check(
            row.c_r <= row.two_ell_kappa + 1e-6,
            &format!("c_r exceeds 2*l*kappa at ell={} by {:.3e}", row.ell, row.c_r - row.two_ell_kappa),
        );
        // ordering against the G-invariant level
        res.check(
            row.c_r <= row.c_g + 1e-6 * row.c_g.abs().max(1.0),
            &format!("c_r > c_G at ell={}", row.ell),
        );
        // (iii) G-class output invariance and genuine x3-dependence
        res.check(
            row.sigma_invariance < 1e-10,
            &format!("sigma invariance {:.3e} at ell={}", row.sigma_invariance, row.ell),
        );
        res.check(row.d3_g > 0.0, &format!("G-class d3 fraction vanishes at ell={}", row.ell));
        if row.c_r < row.two_ell_kappa * (1.0 - 1e-3) && row.d3_radial > 0.1 {
            broken = true;
        }
    }
    if let Some(ls) = scan.ell_star {
        res.note(&format!("{label}ell_star"), ls);
    }
    Some(broken)
}

/// A10 — symmetry breaking over the ℓ-scan window {0.5, 1, 2, 4, 8}
/// (adjusted upward once if no breaking is seen).
pub fn a10() -> CriterionResult {
    let t0 = Instant::now();
    let mut res = CriterionResult::new("A10");
    let window: Vec<f64> = vec![0.5, 1.0, 2.0, 4.0, 8.0];
    match a10_window(&window, &mut res, "") {
        Some(true) => {}
        Some(false) => {
            // one upward adjustment of the scan window
            let upper: Vec<f64> = vec![16.0];
            match a10_window(&upper, &mut res, "adj_") {
                Some(true) => {}
                Some(false) => res.check(false, "no symmetry breaking found after adjustment"),
                None => {}
            }
        }
        None => {}
    }
    res.seconds = t0.elapsed().as_secs_f64();
    res
}

/// Run one criterion by id.
pub fn run_criterion(id: &str) -> Option<CriterionResult> {
    match id {
        "A1" => Some(a1()),
        "A2" => Some(a2()),
        "A3" => Some(a3()),
        "A4" => Some(a4()),
        "A5" => Some(a5()),
        "A6" => Some(a6()),
        "A7" => Some(a7()),
        "A8" => Some(a8()),
        "A9" => Some(a9()),
        "A10" => Some(a10()),
        _ => None,
    }
}

/// Run the full suite (or one criterion), printing one line each.
pub fn run_all(only: Option<&str>) -> Vec<CriterionResult> {
    let ids: Vec<&str> = match only {
        Some(id) => vec![id],
        None => ALL_IDS.to_vec(),
    };
    let mut out = Vec::new();
    for id in ids {
        if let Some(r) = run_criterion(id) {
            println!("{}", r.line());
            out.push(r);
        } else {
            eprintln!("unknown criterion id '{id}'");
        }
    }
    out
}
