//! The variational structure: the energy Φ(u) = ½‖u‖²_a + ¼V₀(u), the
//! split bilinear forms B₁/B₂ and their estimate checks, the a-metric
//! gradient, and the explicit Nehari rescaling.
//!
//! The gradient is represented in the a-inner product: g solves
//! (−Δ_h + a) g = (−Δ_h + a) u + 𝒦[u²]·u, so ⟨g, v⟩_a = Φ′(u)v holds for
//! every grid field v. With constant a the solve is one spectral
//! factorization; otherwise a preconditioned conjugate gradient
//! iteration runs against the mean-coefficient factorization.

use crate::fields::{
    convolve_with_table, inner, log_weight_norm, lp_norm, norm_a_sq_with_samples, Field,
    FieldError, GridSpec, KernelPart, PotentialSpec,
};
use crate::kernel::KernelTable;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VariationalError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("linear solve did not converge: relative residual {residual:.3e} after {iters} iterations")]
    LinearSolve { residual: f64, iters: usize },
}

/// Energy functional values, split by kernel part.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyBreakdown {
    pub norm_a_sq: f64,
    #[serde(rename = "V1")]
    pub v1: f64,
    #[serde(rename = "V2")]
    pub v2: f64,
    #[serde(rename = "V0")]
    pub v0: f64,
    pub log_norm_sq: f64,
    pub phi: f64,
}

/// The explicit Nehari rescale t_u² = −‖u‖²_a / V₀(u), defined whenever
/// V₀(u) < 0.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NehariScale {
    pub t: f64,
    pub defined: bool,
}

/// Everything an energy evaluation needs: the grid, sampled coefficient,
/// and the kernel table.
pub struct VariationalContext<'a> {
    pub grid: GridSpec,
    pub potential: &'a PotentialSpec,
    pub table: &'a KernelTable,
    pub a_samples: Vec<f64>,
    a_constant: Option<f64>,
    a_mean: f64,
}

impl<'a> VariationalContext<'a> {
    pub fn new(
        grid: GridSpec,
        potential: &'a PotentialSpec,
        table: &'a KernelTable,
    ) -> Result<Self, VariationalError> {
        potential.validate()?;
        let a_samples = potential.sample(&grid);
        let a_mean = a_samples.iter().sum::<f64>() / a_samples.len() as f64;
        let a_constant = match potential {
            PotentialSpec::Constant { value } => Some(*value),
            _ => None,
        };
        Ok(VariationalContext { grid, potential, table, a_samples, a_constant, a_mean })
    }

    pub fn norm_a_sq(&self, u: &Field) -> f64 {
        norm_a_sq_with_samples(u, &self.a_samples)
    }

    /// ⟨u, v⟩_a = ∫ a u v + ∇u·∇v with the shared forward-difference
    /// edge convention.
    pub fn inner_a(&self, u: &Field, v: &Field) -> f64 {
        let g = &self.grid;
        let (n, nz) = (g.n_x, g.n_z);
        let vol = g.cell_volume();
        let inv_hx2 = 1.0 / (g.h_x() * g.h_x());
        let inv_hz2 = 1.0 / (g.h_z() * g.h_z());
        let at = |f: &Field, i: isize, j: isize, k: usize| -> f64 {
            if i < 0 || i >= n as isize || j < 0 || j >= n as isize {
                0.0
            } else {
                f.values[g.index(i as usize, j as usize, k)]
            }
        };
        let mut acc = 0.0;
        for i in -1..n as isize {
            for j in 0..n as isize {
                for k in 0..nz {
                    acc += (at(u, i + 1, j, k) - at(u, i, j, k))
                        * (at(v, i + 1, j, k) - at(v, i, j, k))
                        * inv_hx2;
                }
            }
        }
        for i in 0..n as isize {
            for j in -1..n as isize {
                for k in 0..nz {
                    acc += (at(u, i, j + 1, k) - at(u, i, j, k))
                        * (at(v, i, j + 1, k) - at(v, i, j, k))
                        * inv_hx2;
                }
            }
        }
        let mut mass = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..nz {
                    let idx = g.index(i, j, k);
                    let kp = (k + 1) % nz;
                    let idxp = g.index(i, j, kp);
                    acc += (u.values[idxp] - u.values[idx]) * (v.values[idxp] - v.values[idx])
                        * inv_hz2;
                    mass += self.a_samples[idx] * u.values[idx] * v.values[idx];
                }
            }
        }
        (acc + mass) * vol
    }

    /// The nonlocal potential 𝒦[u²].
    pub fn choquard_potential(&self, u: &Field) -> Result<Field, VariationalError> {
        Ok(convolve_with_table(&u.squared(), self.table, KernelPart::Total)?)
    }

    /// (‖u‖²_a, V₀(u)) — the two numbers Φ and the fiber maps need.
    pub fn phi_parts(&self, u: &Field) -> Result<(f64, f64), VariationalError> {
        let w = self.choquard_potential(u)?;
        Ok((self.norm_a_sq(u), inner(&u.squared(), &w)))
    }

    pub fn phi(&self, u: &Field) -> Result<f64, VariationalError> {
        let (n, v0) = self.phi_parts(u)?;
        Ok(0.5 * n + 0.25 * v0)
    }

    /// Full energy breakdown: V₁ and V₂ through the split kernel.
    pub fn energy(&self, u: &Field) -> Result<EnergyBreakdown, VariationalError> {
        let u2 = u.squared();
        let w1 = convolve_with_table(&u2, self.table, KernelPart::K1)?;
        let w2 = convolve_with_table(&u2, self.table, KernelPart::K2)?;
        let v1 = inner(&u2, &w1);
        let v2 = inner(&u2, &w2);
        let norm_a_sq = self.norm_a_sq(u);
        let log_norm_sq = log_weight_norm(u).powi(2);
        Ok(EnergyBreakdown {
            norm_a_sq,
            v1,
            v2,
            v0: v1 + v2,
            log_norm_sq,
            phi: 0.5 * norm_a_sq + 0.25 * (v1 + v2),
        })
    }

    /// Apply (−Δ_h + a) pointwise.
    fn operator_apply(&self, u: &Field) -> Field {
        let lap = crate::fields::laplacian(u);
        let mut out = Field::zeros(self.grid);
        for idx in 0..self.grid.len() {
            out.values[idx] = -lap.values[idx] + self.a_samples[idx] * u.values[idx];
        }
        out
    }

    /// Solve (−Δ_h + a) x = rhs. Direct for constant a; otherwise PCG
    /// preconditioned by the mean-coefficient factorization.
    pub fn elliptic_solve(&self, rhs: &Field) -> Result<Field, VariationalError> {
        if let Some(c) = self.a_constant {
            let vals =
                crate::fft::helmholtz_solve(&rhs.values, self.grid.dims(), self.grid.spacing(), c);
            return Ok(Field { grid: self.grid, symmetry: rhs.symmetry, values: vals });
        }
        let g = self.grid;
        let precond = |r: &Field| -> Field {
            let vals = crate::fft::helmholtz_solve(&r.values, g.dims(), g.spacing(), self.a_mean);
            Field { grid: g, symmetry: crate::fields::SymmetryTag::General, values: vals }
        };
        let mut x = Field::zeros(g);
        let mut r = rhs.clone();
        let rhs_norm = inner(rhs, rhs).sqrt();
        if rhs_norm == 0.0 {
            return Ok(x);
        }
        let mut z = precond(&r);
        let mut p = z.clone();
        let mut rz = inner(&r, &z);
        let tol = 1e-11 * rhs_norm;
        let mut rn = rhs_norm;
        for _ in 0..400 {
            let ap = self.operator_apply(&p);
            let alpha = rz / inner(&p, &ap);
            x = x.axpy(alpha, &p);
            r = r.axpy(-alpha, &ap);
            rn = inner(&r, &r).sqrt();
            if rn < tol {
                return Ok(x);
            }
            z = precond(&r);
            let rz_new = inner(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p = z.axpy(beta, &p);
        }
        if rn < 1e-8 * rhs_norm {
            return Ok(x);
        }
        Err(VariationalError::LinearSolve { residual: rn / rhs_norm, iters: 400 })
    }

    /// a-metric gradient: g with ⟨g, v⟩_a = Φ′(u)v for all grid fields v.
    pub fn gradient(&self, u: &Field) -> Result<Field, VariationalError> {
        let w = self.choquard_potential(u)?;
        self.gradient_with_potential(u, &w)
    }

    /// Gradient reusing an already-computed 𝒦[u²].
    pub fn gradient_with_potential(
        &self,
        u: &Field,
        kw: &Field,
    ) -> Result<Field, VariationalError> {
        let mut rhs = Field::zeros(self.grid);
        for idx in 0..self.grid.len() {
            rhs.values[idx] = kw.values[idx] * u.values[idx];
        }
        let correction = self.elliptic_solve(&rhs)?;
        Ok(u.axpy(1.0, &correction))
    }

    /// Explicit fiber-map maximum: defined iff V₀(u) < 0.
    pub fn nehari_scale(&self, u: &Field) -> Result<NehariScale, VariationalError> {
        let (n, v0) = self.phi_parts(u)?;
        Ok(nehari_scale_from_parts(n, v0))
    }

    /// Φ(t·u) for each t, from the closed-form quartic
    /// f_u(t) = ‖u‖²_a t²/2 + V₀(u) t⁴/4.
    pub fn fiber_profile(&self, u: &Field, ts: &[f64]) -> Result<Vec<f64>, VariationalError> {
        let (n, v0) = self.phi_parts(u)?;
        Ok(ts.iter().map(|&t| 0.5 * n * t * t + 0.25 * v0 * t.powi(4)).collect())
    }
}

/// The rescale from precomputed (‖u‖²_a, V₀).
pub fn nehari_scale_from_parts(norm_a_sq: f64, v0: f64) -> NehariScale {
    if v0 < 0.0 {
        NehariScale { t: (-norm_a_sq / v0).sqrt(), defined: true }
    } else {
        NehariScale { t: f64::NAN, defined: false }
    }
}

/// Two-sided report of the bilinear form estimates.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BilinearReport {
    pub b1: f64,
    pub b1_bound: f64,
    pub b1_margin: f64,
    pub b2: f64,
    pub b2_lower_bound: f64,
    pub b2_margin: f64,
}

/// B₁(u², v²) and B₂(u², v²) through the split kernel tables.
pub fn bilinear_forms(
    ctx: &VariationalContext,
    u: &Field,
    v: &Field,
) -> Result<(f64, f64), VariationalError> {
    let v2 = v.squared();
    let b1 = inner(&u.squared(), &convolve_with_table(&v2, ctx.table, KernelPart::K1)?);
    let b2 = inner(&u.squared(), &convolve_with_table(&v2, ctx.table, KernelPart::K2)?);
    Ok((b1, b2))
}

/// sup |K₂| over table offsets inside the crossover radius (the measured
/// constant of the B₂ lower bound).
pub fn near_field_k2_sup(table: &KernelTable) -> f64 {
    let r = table.crossover_radius.unwrap_or(f64::INFINITY);
    let mut sup: f64 = 0.0;
    for idx in 0..table.len() {
        let o = table.offset_of(idx);
        let rr = (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]).sqrt();
        if rr < r {
            sup = sup.max(table.k2[idx].abs());
        }
    }
    sup
}

/// Evaluate both estimate inequalities with the given B₁ comparison
/// constant (measured upstream) and the table's near-field K₂ bound.
pub fn bilinear_checks(
    ctx: &VariationalContext,
    u: &Field,
    v: &Field,
    c1: f64,
) -> Result<BilinearReport, VariationalError> {
    let (b1, b2) = bilinear_forms(ctx, u, v)?;
    let p = 12.0 / 5.0;
    let b1_bound = c1 * lp_norm(u, p).powi(2) * lp_norm(v, p).powi(2);
    let c2 = near_field_k2_sup(ctx.table);
    let b2_lower_bound = -c2 * lp_norm(u, 2.0).powi(2) * lp_norm(v, 2.0).powi(2);
    Ok(BilinearReport {
        b1,
        b1_bound,
        b1_margin: b1_bound - b1.abs(),
        b2,
        b2_lower_bound,
        b2_margin: b2 - b2_lower_bound,
    })
}

/// Largest observed ratio |B₁(u²,v²)| / (|u|²_{12/5}|v|²_{12/5}) over a
/// seeded probe family — the measured comparison constant.
pub fn measure_b1_constant<R: Rng>(
    ctx: &VariationalContext,
    draws: usize,
    rng: &mut R,
) -> Result<f64, VariationalError> {
    let mut c: f64 = 0.0;
    for _ in 0..draws {
        let u = random_smooth_field(ctx.grid, rng);
        let v = random_smooth_field(ctx.grid, rng);
        let (b1, _) = bilinear_forms(ctx, &u, &v)?;
        let p = 12.0 / 5.0;
        let denom = lp_norm(&u, p).powi(2) * lp_norm(&v, p).powi(2);
        if denom > 0.0 {
            c = c.max(b1.abs() / denom);
        }
    }
    Ok(c)
}

/// Random localized smooth field: a few Gaussian bumps with random
/// centers, widths and signs.
pub fn random_smooth_field<R: Rng>(grid: GridSpec, rng: &mut R) -> Field {
    let n_bumps = rng.gen_range(1..=3);
    let mut bumps = Vec::new();
    for _ in 0..n_bumps {
        let cx = rng.gen_range(-0.4..0.4) * grid.l_planar;
        let cy = rng.gen_range(-0.4..0.4) * grid.l_planar;
        let cz = rng.gen_range(-0.9..0.9) * grid.ell;
        let w = rng.gen_range(0.15..0.45) * grid.l_planar;
        let wz = rng.gen_range(0.3..0.9) * grid.ell;
        let amp = rng.gen_range(0.2..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        bumps.push((cx, cy, cz, w, wz, amp));
    }
    let ell = grid.ell;
    Field::from_fn(grid, move |x, y, z| {
        let mut s = 0.0;
        for &(cx, cy, cz, w, wz, amp) in &bumps {
            // nearest periodic image in x3
            let mut dz = z - cz;
            dz -= 2.0 * ell * (dz / (2.0 * ell)).round();
            s += amp
                * (-((x - cx).powi(2) + (y - cy).powi(2)) / (w * w) - dz * dz / (wz * wz)).exp();
        }
        s
    })
}

/// Measured mountain-pass geometry: a radius β > 0 such that Φ > 0 and
/// Φ′(u)u > 0 on every sampled direction with ‖u‖_a = β.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MountainReport {
    pub beta: f64,
    pub min_phi: f64,
    pub min_slope: f64,
}

pub fn mountain_geometry<R: Rng>(
    ctx: &VariationalContext,
    samples: usize,
    rng: &mut R,
) -> Result<MountainReport, VariationalError> {
    let dirs: Vec<Field> = (0..samples)
        .map(|_| {
            let u = random_smooth_field(ctx.grid, rng);
            let n = ctx.norm_a_sq(&u).sqrt();
            u.scaled(1.0 / n)
        })
        .collect();
    let mut beta = 1.0;
    for _ in 0..24 {
        let mut min_phi = f64::INFINITY;
        let mut min_slope = f64::INFINITY;
        for d in &dirs {
            let u = d.scaled(beta);
            let (n, v0) = ctx.phi_parts(&u)?;
            min_phi = min_phi.min(0.5 * n + 0.25 * v0);
            min_slope = min_slope.min(n + v0);
        }
        if min_phi > 0.0 && min_slope > 0.0 {
            return Ok(MountainReport { beta, min_phi, min_slope });
        }
        beta *= 0.5;
    }
    Ok(MountainReport { beta: 0.0, min_phi: f64::NEG_INFINITY, min_slope: f64::NEG_INFINITY })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poisson::calibrated_kernel_table;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (GridSpec, PotentialSpec, KernelTable) {
        let g = GridSpec::new(4.0, 24, 1.0, 12).unwrap();
        let a = PotentialSpec::constant(1.0).unwrap();
        let (table, _) = calibrated_kernel_table(&g, 1e-8).unwrap();
        (g, a, table)
    }

    #[test]
    fn energy_zero_and_homogeneity() {
        let (g, a, table) = setup();
        let ctx = VariationalContext::new(g, &a, &table).unwrap();
        let zero = Field::zeros(g);
        let e = ctx.energy(&zero).unwrap();
        assert_eq!(e.phi, 0.0);
        assert_eq!(e.v0, 0.0);
        assert_eq!(e.norm_a_sq, 0.0);

        let u = Field::from_fn(g, |x, y, z| (-(x * x + y * y) / 0.6 - z * z).exp());
        let e1 = ctx.energy(&u).unwrap();
        let e2 = ctx.energy(&u.scaled(2.0)).unwrap();
        assert!((e2.v0 - 16.0 * e1.v0).abs() < 1e-12 * e1.v0.abs().max(1.0) * 16.0);
        assert!((e2.norm_a_sq - 4.0 * e1.norm_a_sq).abs() < 1e-12 * e1.norm_a_sq * 4.0);
        assert!((e1.phi - (0.5 * e1.norm_a_sq + 0.25 * (e1.v1 + e1.v2))).abs() < 1e-14);
        // V1 is the negative-kernel part
        assert!(e1.v1 < 0.0);
    }

    #[test]
    fn narrow_bump_has_negative_v0() {
        let (g, a, table) = setup();
        let ctx = VariationalContext::new(g, &a, &table).unwrap();
        let u = Field::from_fn(g, |x, y, z| (-(x * x + y * y + z * z) / 0.09).exp());
        let e = ctx.energy(&u).unwrap();
        assert!(e.v0 < 0.0, "V0 = {}", e.v0);
    }

    #[test]
    fn gradient_matches_directional_derivative() {
        let (g, a, table) = setup();
        let ctx = VariationalContext::new(g, &a, &table).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let u = random_smooth_field(g, &mut rng);
            let v = random_smooth_field(g, &mut rng);
            let grad = ctx.gradient(&u).unwrap();
            let lhs = ctx.inner_a(&grad, &v);
            let eps = 1e-5;
            let fd = (ctx.phi(&u.axpy(eps, &v)).unwrap() - ctx.phi(&u.axpy(-eps, &v)).unwrap())
                / (2.0 * eps);
            assert!(
                (fd - lhs).abs() / lhs.abs().max(1e-12) < 1e-5,
                "fd {fd} vs <g,v>_a {lhs}"
            );
        }
    }

    #[test]
    fn gradient_of_zero_and_pure_quadratic() {
        let (g, a, table) = setup();
        let ctx = VariationalContext::new(g, &a, &table).unwrap();
        let zero = Field::zeros(g);
        let gz = ctx.gradient(&zero).unwrap();
        assert!(gz.values.iter().all(|&v| v == 0.0));
        // with the nonlocal term removed the gradient is the identity
        let u = Field::from_fn(g, |x, y, z| (-(x * x + y * y) - z * z).exp());
        let kw = Field::zeros(g);
        let gq = ctx.gradient_with_potential(&u, &kw).unwrap();
        for (a, b) in gq.values.iter().zip(u.values.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn nehari_scale_formula_and_residual() {
        let (g, a, table) = setup();
        let ctx = VariationalContext::new(g, &a, &table).unwrap();
        // direct formula: ||u||_a^2 = 2, V0 = -8 => t = 0.5, phi(tu) = 0.125
        let s = nehari_scale_from_parts(2.0, -8.0);
        assert!(s.defined && (s.t - 0.5).abs() < 1e-15);
        assert!((0.5f64 * 2.0 * 0.25 + 0.25 * (-8.0) * 0.0625 - 0.125).abs() < 1e-15);
        assert!(!nehari_scale_from_parts(2.0, 1.0).defined);

        let u = Field::from_fn(g, |x, y, z| (-(x * x + y * y + z * z) / 0.09).exp());
        let s = ctx.nehari_scale(&u).unwrap();
        assert!(s.defined);
        let un = u.scaled(s.t);
        let (n, v0) = ctx.phi_parts(&un).unwrap();
        assert!((n + v0).abs() < 1e-10 * n, "nehari residual {}", (n + v0).abs() / n);
        // phi on the manifold equals ||.||^2/4
        let phi = 0.5 * n + 0.25 * v0;
        assert!((phi - 0.25 * n).abs() < 1e-10 * n);
        assert!((phi + 0.25 * v0).abs() < 1e-10 * n);
    }

    #[test]
    fn fiber_profile_quartic() {
        let (g, a, table) = setup();
        let ctx = VariationalContext::new(g, &a, &table).unwrap();
        let u = Field::from_fn(g, |x, y, z| (-(x * x + y * y + z * z) / 0.09).exp());
        let (n, v0) = ctx.phi_parts(&u).unwrap();
        assert!(v0 < 0.0);
        let t_u = (-n / v0).sqrt();
        let ts: Vec<f64> = (1..=300).map(|i| i as f64 * 0.01 * 3.0 * t_u / 3.0).collect();
        let profile = ctx.fiber_profile(&u, &ts).unwrap();
        assert_eq!(ctx.fiber_profile(&u, &[0.0]).unwrap()[0], 0.0);
        let (imax, _) = profile
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert!((ts[imax] - t_u).abs() <= 0.011 * 3.0 * t_u, "{} vs {t_u}", ts[imax]);
    }

    #[test]
    fn bilinear_estimates_hold() {
        let (g, a, table) = setup();
        let ctx = VariationalContext::new(g, &a, &table).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c1 = measure_b1_constant(&ctx, 20, &mut rng).unwrap() * 1.5;
        for _ in 0..20 {
            let u = random_smooth_field(g, &mut rng);
            let v = random_smooth_field(g, &mut rng);
            let rep = bilinear_checks(&ctx, &u, &v, c1).unwrap();
            assert!(rep.b1_margin >= 0.0, "B1 margin {}", rep.b1_margin);
            assert!(rep.b2_margin >= 0.0, "B2 margin {}", rep.b2_margin);
        }
        // u = v case
        let u = random_smooth_field(g, &mut rng);
        let rep = bilinear_checks(&ctx, &u, &u, c1).unwrap();
        assert!(rep.b1_margin >= 0.0 && rep.b2_margin >= 0.0);
        // zero fields: equalities 0 <= 0
        let z = Field::zeros(g);
        let rep = bilinear_checks(&ctx, &z, &z, c1).unwrap();
        assert_eq!(rep.b1, 0.0);
        assert_eq!(rep.b2, 0.0);
        assert_eq!(rep.b1_margin, 0.0);
        assert_eq!(rep.b2_margin, 0.0);
    }

    #[test]
    fn mountain_geometry_finds_positive_radius() {
        let (g, a, table) = setup();
        let ctx = VariationalContext::new(g, &a, &table).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rep = mountain_geometry(&ctx, 50, &mut rng).unwrap();
        assert!(rep.beta > 0.0);
        assert!(rep.min_phi > 0.0);
        assert!(rep.min_slope > 0.0);
    }

    #[test]
    fn sigma_invariance_of_phi_and_gradient() {
        let (g, a, table) = setup();
        let ctx = VariationalContext::new(g, &a, &table).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let u = random_smooth_field(g, &mut rng);
        let su = crate::symmetry::sigma_apply(&u).unwrap();
        let phi_u = ctx.phi(&u).unwrap();
        let phi_su = ctx.phi(&su).unwrap();
        assert!(
            (phi_u - phi_su).abs() < 1e-10 * (1.0 + phi_u.abs()),
            "{phi_u} vs {phi_su}"
        );
        // gradient equivariance (discrete symmetric criticality)
        let gu = ctx.gradient(&u).unwrap();
        let gsu = ctx.gradient(&su).unwrap();
        let sgu = crate::symmetry::sigma_apply(&gu).unwrap();
        let scale = gu.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in gsu.values.iter().zip(sgu.values.iter()) {
            assert!((x - y).abs() < 1e-10 * scale);
        }
    }
}
