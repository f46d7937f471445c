//! Ground states on the Nehari manifold by projected gradient descent,
//! in three symmetry classes, plus the ℓ-scan that locates the
//! symmetry-breaking transition.
//!
//! One descent engine serves the slab and the planar problem. An
//! iterate takes an a-metric gradient step, re-projects onto the
//! symmetry class, then rescales exactly onto the Nehari manifold
//! (t_u² = −‖u‖²_a/V₀). Steps are Armijo-backtracked against the
//! projected gradient norm; trial steps follow a Barzilai–Borwein
//! estimate. On the manifold Φ = ¼‖u‖²_a, so every line-search probe
//! costs one convolution.

use crate::fields::{inner, Field, FieldError, GridSpec, PotentialSpec, SymmetryTag};

use crate::planar::{
    helmholtz_solve2, inner2, norm_a_sq2, radialize2, PlanarField, PlanarGrid,
    PlanarKernelTable,
};
use crate::poisson::{calibrated_kernel_table, PoissonError};
use crate::symmetry::{d3_energy_fraction, project_g, radialize, sigma_apply};
use crate::variational::{EnergyBreakdown, VariationalContext, VariationalError};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Variational(#[from] VariationalError),
    #[error(transparent)]
    Poisson(#[from] PoissonError),
    #[error("no Nehari seed: every restart kept V0 >= 0")]
    NoNehariSeed,
    #[error("did not reach the gradient tolerance in {iters} iterations (best rel grad {best:.3e})")]
    NonConvergence { iters: usize, best: f64 },
}

/// Symmetry class of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryClass {
    Radial,
    GInvariant,
    Planar,
}

impl std::str::FromStr for SymmetryClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "radial" => Ok(SymmetryClass::Radial),
            "g_invariant" => Ok(SymmetryClass::GInvariant),
            "planar" => Ok(SymmetryClass::Planar),
            other => Err(format!("unknown symmetry class '{other}'")),
        }
    }
}

/// Solver knobs. The Armijo parameters follow the classical values;
/// seeds are explicit for reproducibility.
#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub class: SymmetryClass,
    pub max_iters: usize,
    pub tol_grad: f64,
    pub step0: f64,
    pub armijo_factor: f64,
    pub armijo_c: f64,
    pub seed: u64,
    pub restarts: usize,
    pub seed_width: f64,
    pub seed_width_z: f64,
    pub seed_amplitude: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            class: SymmetryClass::Radial,
            max_iters: 4000,
            tol_grad: 1e-6,
            step0: 1.0,
            armijo_factor: 0.5,
            armijo_c: 1e-4,
            seed: 7,
            restarts: 2,
            seed_width: 1.0,
            seed_width_z: 1.0,
            seed_amplitude: 1.0,
        }
    }
}

/// One line of the iteration trace.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TracePoint {
    pub iter: usize,
    pub phi: f64,
    pub grad_norm: f64,
    pub step: f64,
}

/// Abstract state operations the descent engine needs.
pub trait DescentOps {
    type State: Clone;
    /// (‖u‖²_a, V₀(u))
    fn phi_parts(&self, u: &Self::State) -> Result<(f64, f64), SolverError>;
    /// Constrained a-metric gradient: the field h in the symmetry class
    /// with ⟨h, v⟩_a = Φ′(u)v for every v in the class. Along −h the
    /// directional derivative is exactly −‖h‖²_a.
    fn class_gradient(&self, u: &Self::State) -> Result<Self::State, SolverError>;
    /// Projection onto the symmetry class.
    fn project(&self, u: &Self::State) -> Self::State;
    fn inner_a(&self, a: &Self::State, b: &Self::State) -> f64;
    fn axpy(&self, a: &Self::State, t: f64, b: &Self::State) -> Self::State;
    fn scale(&self, a: &Self::State, t: f64) -> Self::State;
}

/// Result of one descent run.
pub struct DescentOutcome<S> {
    pub state: S,
    pub phi: f64,
    pub grad_rel: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

/// Projected-gradient descent on 𝒩 ∩ (symmetry class) from one seed.
pub fn nehari_descent<O: DescentOps>(
    ops: &O,
    seed: &O::State,
    cfg: &SolverConfig,
) -> Result<DescentOutcome<O::State>, SolverError> {
    let projected = ops.project(seed);
    let (n0, v00) = ops.phi_parts(&projected)?;
    if !(v00 < 0.0) || !(n0 > 0.0) {
        return Err(SolverError::NoNehariSeed);
    }
    let t0 = (-n0 / v00).sqrt();
    let mut u = ops.scale(&projected, t0);
    let mut norm_sq = t0 * t0 * n0;
    let mut phi = 0.25 * norm_sq;
    let mut alpha = cfg.step0;
    let mut trace = Vec::new();
    let mut prev: Option<(O::State, O::State)> = None; // (u, g)
    let mut best_rel = f64::INFINITY;

    for iter in 0..cfg.max_iters {
        let g = ops.class_gradient(&u)?;
        let gn2 = ops.inner_a(&g, &g);
        let rel = (gn2 / norm_sq).sqrt();
        best_rel = best_rel.min(rel);
        trace.push(TracePoint { iter, phi, grad_norm: rel, step: alpha });
        if rel < cfg.tol_grad {
            return Ok(DescentOutcome {
                state: u,
                phi,
                grad_rel: rel,
                iterations: iter,
                converged: true,
                trace,
            });
        }

        // Barzilai-Borwein trial step with growth fallback
        let mut trial = match &prev {
            Some((u_prev, g_prev)) => {
                let s = ops.axpy(&u, -1.0, u_prev);
                let y = ops.axpy(&g, -1.0, g_prev);
                let sy = ops.inner_a(&s, &y);
                let ss = ops.inner_a(&s, &s);
                if sy > 1e-300 {
                    (ss / sy).clamp(1e-6, 1e3)
                } else {
                    (alpha * 2.0).min(1e3)
                }
            }
            None => alpha,
        };
        prev = Some((u.clone(), g.clone()));

        let mut accepted = false;
        while trial >= 1e-13 {
            let stepped = ops.axpy(&u, -trial, &g);
            let candidate = ops.project(&stepped);
            if let Ok((nv, v0v)) = ops.phi_parts(&candidate) {
                if v0v < 0.0 && nv > 0.0 {
                    let t = (-nv / v0v).sqrt();
                    let phi_new = 0.25 * t * t * nv;
                    if phi_new <= phi - cfg.armijo_c * trial * gn2 {
                        u = ops.scale(&candidate, t);
                        norm_sq = t * t * nv;
                        phi = phi_new;
                        alpha = trial;
                        accepted = true;
                        break;
                    }
                }
            }
            trial *= cfg.armijo_factor;
        }
        if !accepted {
            // no admissible decrease left at this point
            return Ok(DescentOutcome {
                state: u,
                phi,
                grad_rel: rel,
                iterations: iter,
                converged: rel < cfg.tol_grad,
                trace,
            });
        }
    }
    Err(SolverError::NonConvergence { iters: cfg.max_iters, best: best_rel })
}

/// Slab problem bound to a symmetry class.
pub struct SlabProblem<'a> {
    pub ctx: &'a VariationalContext<'a>,
    pub class: SymmetryClass,
}

impl<'a> SlabProblem<'a> {
    /// Solve P(−Δ_h + a)P h = rp within the symmetry class by PCG,
    /// preconditioned with the projected mean-coefficient inverse. The
    /// class projector and (−Δ_h + a) nearly commute, so a handful of
    /// iterations reaches rounding.
    fn solve_projected(&self, rp: &Field) -> Result<Field, SolverError> {
        let g = self.ctx.grid;
        let shift = self.ctx.a_samples.iter().sum::<f64>() / self.ctx.a_samples.len() as f64;
        let apply = |f: &Field| -> Field {
            let lap = crate::fields::laplacian(f);
            let mut out = Field::zeros(g);
            for i in 0..g.len() {
                out.values[i] = -lap.values[i] + self.ctx.a_samples[i] * f.values[i];
            }
            self.project(&out)
        };
        let precond = |f: &Field| -> Field {
            let vals = crate::fft::helmholtz_solve(&f.values, g.dims(), g.spacing(), shift);
            self.project(&Field {
                grid: g,
                symmetry: crate::fields::SymmetryTag::General,
                values: vals,
            })
        };
        let rhs_norm = inner(rp, rp).sqrt();
        let mut x = Field::zeros(g);
        if rhs_norm == 0.0 {
            return Ok(x);
        }
        let mut r = rp.clone();
        let mut z = precond(&r);
        let mut p = z.clone();
        let mut rz = inner(&r, &z);
        let mut rn = rhs_norm;
        for _ in 0..200 {
            let ap = apply(&p);
            let alpha = rz / inner(&p, &ap);
            x = x.axpy(alpha, &p);
            r = r.axpy(-alpha, &ap);
            rn = inner(&r, &r).sqrt();
            if rn < 1e-11 * rhs_norm {
                return Ok(x);
            }
            z = precond(&r);
            let rz_new = inner(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p = z.axpy(beta, &p);
        }
        // rounding can floor the recurrence above the nominal target;
        // anything this small is far below the descent tolerance
        if rn < 1e-8 * rhs_norm {
            return Ok(x);
        }
        Err(SolverError::Variational(VariationalError::LinearSolve {
            residual: rn / rhs_norm,
            iters: 200,
        }))
    }
}

impl<'a> DescentOps for SlabProblem<'a> {
    type State = Field;

    fn phi_parts(&self, u: &Field) -> Result<(f64, f64), SolverError> {
        Ok(self.ctx.phi_parts(u)?)
    }

    fn class_gradient(&self, u: &Field) -> Result<Field, SolverError> {
        let kw = self.ctx.choquard_potential(u)?;
        let lap = crate::fields::laplacian(u);
        let mut r = Field::zeros(self.ctx.grid);
        for i in 0..self.ctx.grid.len() {
            r.values[i] = -lap.values[i]
                + self.ctx.a_samples[i] * u.values[i]
                + kw.values[i] * u.values[i];
        }
        self.solve_projected(&self.project(&r))
    }

    fn project(&self, u: &Field) -> Field {
        match self.class {
            SymmetryClass::Radial => radialize(u),
            SymmetryClass::GInvariant => project_g(u).expect("even vertical grid"),
            SymmetryClass::Planar => {
                // x3-average then radialize: the planar-constant subspace
                let g = &u.grid;
                let mut flat = Field::zeros(*g);
                for i in 0..g.n_x {
                    for j in 0..g.n_x {
                        let mut s = 0.0;
                        for k in 0..g.n_z {
                            s += u.values[g.index(i, j, k)];
                        }
                        let avg = s / g.n_z as f64;
                        for k in 0..g.n_z {
                            flat.values[g.index(i, j, k)] = avg;
                        }
                    }
                }
                radialize(&flat).with_symmetry(SymmetryTag::PlanarConstant)
            }
        }
    }

    fn inner_a(&self, a: &Field, b: &Field) -> f64 {
        self.ctx.inner_a(a, b)
    }

    fn axpy(&self, a: &Field, t: f64, b: &Field) -> Field {
        a.axpy(t, b)
    }

    fn scale(&self, a: &Field, t: f64) -> Field {
        a.scaled(t)
    }
}

/// Planar Choquard problem (2D fields against a planar kernel table).
pub struct PlanarProblem<'a> {
    pub grid: PlanarGrid,
    pub a_samples: Vec<f64>,
    pub a_shift: f64,
    pub table: &'a PlanarKernelTable,
}

impl<'a> PlanarProblem<'a> {
    pub fn new(
        grid: PlanarGrid,
        potential: &PotentialSpec,
        table: &'a PlanarKernelTable,
    ) -> Result<Self, SolverError> {
        potential.validate().map_err(FieldError::from)?;
        let mut a_samples = Vec::with_capacity(grid.len());
        for i in 0..grid.n {
            for j in 0..grid.n {
                let (x, y) = (grid.coord(i), grid.coord(j));
                a_samples.push(potential.eval((x * x + y * y).sqrt(), 0.0));
            }
        }
        let a_shift = a_samples.iter().sum::<f64>() / a_samples.len() as f64;
        Ok(PlanarProblem { grid, a_samples, a_shift, table })
    }

    pub fn psi(&self, u: &PlanarField) -> Result<f64, SolverError> {
        let (n, v0) = DescentOps::phi_parts(self, u)?;
        Ok(0.5 * n + 0.25 * v0)
    }
}

impl<'a> DescentOps for PlanarProblem<'a> {
    type State = PlanarField;

    fn phi_parts(&self, u: &PlanarField) -> Result<(f64, f64), SolverError> {
        let u2 = u.squared();
        let w = self.table.convolve(&u2)?;
        Ok((norm_a_sq2(u, &self.a_samples), inner2(&u2, &w)))
    }

    fn class_gradient(&self, u: &PlanarField) -> Result<PlanarField, SolverError> {
        let u2 = u.squared();
        let w = self.table.convolve(&u2)?;
        let lap = crate::planar::laplacian2(u);
        let mut res = PlanarField::zeros(self.grid);
        for i in 0..self.grid.len() {
            res.values[i] =
                -lap.values[i] + self.a_samples[i] * u.values[i] + w.values[i] * u.values[i];
        }
        let rp = radialize2(&res);
        // PCG on the radially projected operator
        let apply = |f: &PlanarField| -> PlanarField {
            let lap = crate::planar::laplacian2(f);
            let mut out = PlanarField::zeros(self.grid);
            for i in 0..self.grid.len() {
                out.values[i] = -lap.values[i] + self.a_samples[i] * f.values[i];
            }
            radialize2(&out)
        };
        let rhs_norm = inner2(&rp, &rp).sqrt();
        let mut x = PlanarField::zeros(self.grid);
        if rhs_norm == 0.0 {
            return Ok(x);
        }
        let mut r = rp.clone();
        let mut z = radialize2(&helmholtz_solve2(&r, self.a_shift));
        let mut p = z.clone();
        let mut rz = inner2(&r, &z);
        let mut rn = rhs_norm;
        for _ in 0..200 {
            let ap = apply(&p);
            let alpha = rz / inner2(&p, &ap);
            x = x.axpy(alpha, &p);
            r = r.axpy(-alpha, &ap);
            rn = inner2(&r, &r).sqrt();
            if rn < 1e-11 * rhs_norm {
                return Ok(x);
            }
            z = radialize2(&helmholtz_solve2(&r, self.a_shift));
            let rz_new = inner2(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p = z.axpy(beta, &p);
        }
        if rn < 1e-8 * rhs_norm {
            return Ok(x);
        }
        Err(SolverError::Variational(VariationalError::LinearSolve {
            residual: rn / rhs_norm,
            iters: 200,
        }))
    }

    fn project(&self, u: &PlanarField) -> PlanarField {
        radialize2(u)
    }

    fn inner_a(&self, a: &PlanarField, b: &PlanarField) -> f64 {
        // polarization over the quadratic form keeps one code path
        let plus = norm_a_sq2(&a.axpy(1.0, b), &self.a_samples);
        let minus = norm_a_sq2(&a.axpy(-1.0, b), &self.a_samples);
        0.25 * (plus - minus)
    }

    fn axpy(&self, a: &PlanarField, t: f64, b: &PlanarField) -> PlanarField {
        a.axpy(t, b)
    }

    fn scale(&self, a: &PlanarField, t: f64) -> PlanarField {
        a.scaled(t)
    }
}

/// Full post-hoc report of a slab solve.
#[derive(Debug, Serialize)]
pub struct SolveReport {
    pub class: SymmetryClass,
    pub converged: bool,
    pub energy: EnergyBreakdown,
    /// ‖P g‖_a / ‖u‖_a of the class-projected gradient at the solution.
    pub grad_norm: f64,
    /// |Φ′(u)u| / ‖u‖²_a.
    pub nehari_residual: f64,
    /// Interior relative residual of −Δu + au + 𝒦[u²]u.
    pub pde_residual: f64,
    pub d3_fraction: f64,
    pub iterations: usize,
    pub restart_count: usize,
    pub restart_phis: Vec<f64>,
    pub restart_dispersion: f64,
    #[serde(skip)]
    pub field: Field,
    #[serde(skip)]
    pub trace: Vec<TracePoint>,
}

/// PDE residual ‖−Δ_h u + a u + 𝒦[u²] u‖₂ / ‖u‖₂ on the interior
/// subdomain.
pub fn residual_report(u: &Field, ctx: &VariationalContext) -> Result<f64, SolverError> {
    let kw = ctx.choquard_potential(u)?;
    let lap = crate::fields::laplacian(u);
    let g = &ctx.grid;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..g.n_x {
        for j in 0..g.n_x {
            if !g.planar_interior(i, j) {
                continue;
            }
            for k in 0..g.n_z {
                let idx = g.index(i, j, k);
                let r = -lap.values[idx]
                    + ctx.a_samples[idx] * u.values[idx]
                    + kw.values[idx] * u.values[idx];
                num += r * r;
                den += u.values[idx] * u.values[idx];
            }
        }
    }
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((num / den).sqrt())
}

/// Gaussian seed of the configured class; widths shrink on re-seeding.
pub fn class_seed(
    grid: GridSpec,
    class: SymmetryClass,
    amplitude: f64,
    width: f64,
    width_z: f64,
) -> Field {
    let ell = grid.ell;
    match class {
        SymmetryClass::GInvariant => Field::from_fn(grid, move |x, y, z| {
            amplitude
                * (-(x * x + y * y) / (width * width)).exp()
                * (std::f64::consts::PI * z / ell).cos()
        }),
        _ => Field::from_fn(grid, move |x, y, z| {
            let mut dz = z;
            dz -= 2.0 * ell * (dz / (2.0 * ell)).round();
            amplitude
                * (-(x * x + y * y) / (width * width) - dz * dz / (width_z * width_z)).exp()
        }),
    }
}

fn descend_with_reseeding(
    problem: &SlabProblem,
    seed: &Field,
    cfg: &SolverConfig,
) -> Result<DescentOutcome<Field>, SolverError> {
    let mut attempt = seed.clone();
    for shrink in 0..=6 {
        match nehari_descent(problem, &attempt, cfg) {
            Err(SolverError::NoNehariSeed) if shrink < 6 => {
                // push mass into the near-field negative region
                attempt = Field {
                    grid: attempt.grid,
                    symmetry: attempt.symmetry,
                    values: attempt.values.clone(),
                };
                let g = attempt.grid;
                let half = 0.5f64.powi(shrink as i32 + 1);
                let narrowed = class_seed(
                    g,
                    cfg.class,
                    cfg.seed_amplitude,
                    cfg.seed_width * half,
                    cfg.seed_width_z * half,
                );
                attempt = narrowed;
            }
            other => return other,
        }
    }
    Err(SolverError::NoNehariSeed)
}

/// Ground state within a symmetry class: the best over the configured
/// random restarts plus any caller-provided seed fields.
pub fn ground_state_with_seeds(
    ctx: &VariationalContext,
    cfg: &SolverConfig,
    extra_seeds: &[Field],
) -> Result<SolveReport, SolverError> {
    let problem = SlabProblem { ctx, class: cfg.class };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut outcomes: Vec<DescentOutcome<Field>> = Vec::new();
    let mut failures = 0usize;
    let mut last_err: Option<SolverError> = None;

    for r in 0..cfg.restarts {
        let (wf, wzf, af) = if r == 0 {
            (1.0, 1.0, 1.0)
        } else {
            (rng.gen_range(0.6..1.4), rng.gen_range(0.6..1.4), rng.gen_range(0.5..1.5))
        };
        let seed = class_seed(
            ctx.grid,
            cfg.class,
            cfg.seed_amplitude * af,
            cfg.seed_width * wf,
            cfg.seed_width_z * wzf,
        );
        match descend_with_reseeding(&problem, &seed, cfg) {
            Ok(out) => outcomes.push(out),
            Err(e) => {
                failures += 1;
                last_err = Some(e);
            }
        }
    }
    for seed in extra_seeds {
        match nehari_descent(&problem, seed, cfg) {
            Ok(out) => outcomes.push(out),
            Err(e) => {
                failures += 1;
                last_err = Some(e);
            }
        }
    }
    let converged: Vec<&DescentOutcome<Field>> =
        outcomes.iter().filter(|o| o.converged).collect();
    if converged.is_empty() {
        if failures > 0 {
            return Err(last_err.unwrap());
        }
        let best = outcomes
            .iter()
            .map(|o| o.grad_rel)
            .fold(f64::INFINITY, f64::min);
        return Err(SolverError::NonConvergence { iters: cfg.max_iters, best });
    }
    let best = converged
        .iter()
        .min_by(|a, b| a.phi.partial_cmp(&b.phi).unwrap())
        .unwrap();
    let phis: Vec<f64> = converged.iter().map(|o| o.phi).collect();
    let dispersion = if phis.len() > 1 {
        let mx = phis.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mn = phis.iter().cloned().fold(f64::INFINITY, f64::min);
        (mx - mn) / mn.abs()
    } else {
        0.0
    };

    let u = best.state.clone();
    let energy = ctx.energy(&u)?;
    let g_proj = problem.class_gradient(&u)?;
    let grad_norm = (ctx.inner_a(&g_proj, &g_proj) / energy.norm_a_sq).sqrt();
    let nehari_residual = (energy.norm_a_sq + energy.v0).abs() / energy.norm_a_sq;
    let pde_residual = residual_report(&u, ctx)?;
    let d3_fraction = d3_energy_fraction(&u).unwrap_or(0.0);
    let tag = match cfg.class {
        SymmetryClass::Radial => SymmetryTag::Radial,
        SymmetryClass::GInvariant => SymmetryTag::GInvariant,
        SymmetryClass::Planar => SymmetryTag::PlanarConstant,
    };
    Ok(SolveReport {
        class: cfg.class,
        converged: true,
        energy,
        grad_norm,
        nehari_residual,
        pde_residual,
        d3_fraction,
        iterations: best.iterations,
        restart_count: outcomes.len(),
        restart_phis: phis,
        restart_dispersion: dispersion,
        field: u.with_symmetry(tag),
        trace: best.trace.clone(),
    })
}

/// Ground state from the configured seeds only.
pub fn ground_state(
    ctx: &VariationalContext,
    cfg: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    ground_state_with_seeds(ctx, cfg, &[])
}

/// Planar ground-state report.
#[derive(Debug, Serialize)]
pub struct PlanarSolveReport {
    pub converged: bool,
    /// Ψ(u*) — the planar radial ground-state level κ.
    pub kappa: f64,
    pub norm_a_sq: f64,
    pub v0: f64,
    pub grad_norm: f64,
    pub nehari_residual: f64,
    pub iterations: usize,
    pub restart_phis: Vec<f64>,
    pub restart_dispersion: f64,
    #[serde(skip)]
    pub field: PlanarField,
    #[serde(skip)]
    pub trace: Vec<TracePoint>,
}

/// Ground state of the planar functional Ψ with the given 2D kernel.
pub fn planar_ground_state(
    grid: PlanarGrid,
    potential: &PotentialSpec,
    table: &PlanarKernelTable,
    cfg: &SolverConfig,
) -> Result<PlanarSolveReport, SolverError> {
    let problem = PlanarProblem::new(grid, potential, table)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut outcomes = Vec::new();
    let mut last_err: Option<SolverError> = None;
    for r in 0..cfg.restarts.max(1) {
        let wf: f64 = if r == 0 { 1.0 } else { rng.gen_range(0.6..1.4) };
        let mut width = cfg.seed_width * wf;
        let mut solved = None;
        for _ in 0..=6 {
            let seed = PlanarField::from_fn(grid, |x, y| {
                cfg.seed_amplitude * (-(x * x + y * y) / (width * width)).exp()
            });
            match nehari_descent(&problem, &seed, cfg) {
                Ok(out) => {
                    solved = Some(out);
                    break;
                }
                Err(SolverError::NoNehariSeed) => width *= 0.5,
                Err(e) => {
                    last_err = Some(e);
                    break;
                }
            }
        }
        if let Some(out) = solved {
            outcomes.push(out);
        }
    }
    let converged: Vec<&DescentOutcome<PlanarField>> =
        outcomes.iter().filter(|o| o.converged).collect();
    if converged.is_empty() {
        return Err(last_err.unwrap_or(SolverError::NoNehariSeed));
    }
    let best = converged
        .iter()
        .min_by(|a, b| a.phi.partial_cmp(&b.phi).unwrap())
        .unwrap();
    let phis: Vec<f64> = converged.iter().map(|o| o.phi).collect();
    let dispersion = if phis.len() > 1 {
        let mx = phis.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mn = phis.iter().cloned().fold(f64::INFINITY, f64::min);
        (mx - mn) / mn.abs()
    } else {
        0.0
    };
    let u = best.state.clone();
    let (n, v0) = DescentOps::phi_parts(&problem, &u)?;
    let gp = problem.class_gradient(&u)?;
    let grad_norm = (problem.inner_a(&gp, &gp) / n).sqrt();
    Ok(PlanarSolveReport {
        converged: true,
        kappa: 0.5 * n + 0.25 * v0,
        norm_a_sq: n,
        v0,
        grad_norm,
        nehari_residual: (n + v0).abs() / n,
        iterations: best.iterations,
        restart_phis: phis,
        restart_dispersion: dispersion,
        field: u,
        trace: best.trace.clone(),
    })
}

/// Trivial extension of a planar field to the slab grid.
pub fn extend_planar_to_slab(u: &PlanarField, grid: GridSpec) -> Field {
    let mut out = Field::zeros(grid);
    for i in 0..grid.n_x {
        for j in 0..grid.n_x {
            let v = u.values[u.grid.index(i, j)];
            for k in 0..grid.n_z {
                out.values[grid.index(i, j, k)] = v;
            }
        }
    }
    out.with_symmetry(SymmetryTag::PlanarConstant)
}

/// One row of the ℓ-scan.
#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub ell: f64,
    pub c_r: f64,
    pub c_g: f64,
    pub kappa: f64,
    pub two_ell_kappa: f64,
    pub d3_radial: f64,
    pub d3_g: f64,
    pub sigma_invariance: f64,
    pub status: String,
}

/// ℓ-scan output with the detected transition.
#[derive(Debug, Serialize)]
pub struct ScanTable {
    pub rows: Vec<ScanRow>,
    /// Smallest scanned ℓ with c_r(ℓ) < 2ℓκ(1 − margin).
    pub ell_star: Option<f64>,
    pub margin: f64,
}

/// Scan half-periods: per ℓ build a calibrated kernel table, solve the
/// planar baseline (collapsed kernel), the G-invariant class and the
/// radial class, and compare c_r against 2ℓκ.
///
/// The radial solve is additionally seeded with the extension of the
/// planar minimizer (so the planar branch is always an admissible
/// competitor) and with the G-minimizer (so c_r ≤ c_G holds by
/// construction); warm starts reuse the previous ℓ's minimizers.
pub fn ell_scan(
    ell_values: &[f64],
    l_planar: f64,
    n_x: usize,
    n_z: usize,
    potential: &PotentialSpec,
    cfg: &SolverConfig,
    quad_tol: f64,
) -> Result<ScanTable, SolverError> {
    if !potential.x3_independent() {
        return Err(SolverError::Field(FieldError::BadGrid(
            "ell scan requires an x3-independent potential".into(),
        )));
    }
    let margin = 1e-3;
    let mut rows = Vec::new();
    let mut warm_radial: Option<Field> = None;
    let mut warm_g: Option<Field> = None;
    for &ell in ell_values {
        match scan_one_ell(
            ell,
            l_planar,
            n_x,
            n_z,
            potential,
            cfg,
            quad_tol,
            &mut warm_radial,
            &mut warm_g,
        ) {
            Ok(row) => rows.push(row),
            Err(e) => rows.push(ScanRow {
                ell,
                c_r: f64::NAN,
                c_g: f64::NAN,
                kappa: f64::NAN,
                two_ell_kappa: f64::NAN,
                d3_radial: f64::NAN,
                d3_g: f64::NAN,
                sigma_invariance: f64::NAN,
                status: format!("error: {e}"),
            }),
        }
    }
    let ell_star = rows
        .iter()
        .filter(|r| r.status == "ok" && r.c_r < r.two_ell_kappa * (1.0 - margin))
        .map(|r| r.ell)
        .fold(f64::INFINITY, f64::min);
    Ok(ScanTable {
        rows,
        ell_star: if ell_star.is_finite() { Some(ell_star) } else { None },
        margin,
    })
}

#[allow(clippy::too_many_arguments)]
fn scan_one_ell(
    ell: f64,
    l_planar: f64,
    n_x: usize,
    n_z: usize,
    potential: &PotentialSpec,
    cfg: &SolverConfig,
    quad_tol: f64,
    warm_radial: &mut Option<Field>,
    warm_g: &mut Option<Field>,
) -> Result<ScanRow, SolverError> {
    let grid = GridSpec::new(l_planar, n_x, ell, n_z)?;
    let (table, _) = calibrated_kernel_table(&grid, quad_tol)?;
    let ctx = VariationalContext::new(grid, potential, &table)?;

    // planar baseline with the collapsed kernel (makes the extension an
    // exact slab competitor)
    let collapsed = PlanarKernelTable::collapsed(&table);
    let pgrid = PlanarGrid::new(l_planar, n_x)?;
    let mut pcfg = cfg.clone();
    pcfg.class = SymmetryClass::Planar;
    let planar = planar_ground_state(pgrid, potential, &collapsed, &pcfg)?;
    let kappa = planar.kappa;
    let extension = extend_planar_to_slab(&planar.field, grid);

    // G-invariant class
    let mut gcfg = cfg.clone();
    gcfg.class = SymmetryClass::GInvariant;
    let mut g_seeds: Vec<Field> = Vec::new();
    if let Some(w) = warm_g.take() {
        g_seeds.push(reuse_on_grid(&w, grid));
    }
    let g_report = ground_state_with_seeds(&ctx, &gcfg, &g_seeds)?;
    let su = sigma_apply(&g_report.field)?;
    let sigma_invariance = su
        .values
        .iter()
        .zip(g_report.field.values.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max)
        / g_report.field.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    *warm_g = Some(g_report.field.clone());

    // radial class, seeded with every competitor we know
    let mut rcfg = cfg.clone();
    rcfg.class = SymmetryClass::Radial;
    let mut r_seeds: Vec<Field> = vec![extension, g_report.field.clone()];
    if let Some(w) = warm_radial.take() {
        r_seeds.push(reuse_on_grid(&w, grid));
    }
    let r_report = ground_state_with_seeds(&ctx, &rcfg, &r_seeds)?;
    *warm_radial = Some(r_report.field.clone());

    Ok(ScanRow {
        ell,
        c_r: r_report.energy.phi,
        c_g: g_report.energy.phi,
        kappa,
        two_ell_kappa: 2.0 * ell * kappa,
        d3_radial: r_report.d3_fraction,
        d3_g: g_report.d3_fraction,
        sigma_invariance,
        status: "ok".into(),
    })
}

/// Reinterpret a minimizer from a previous ℓ as a seed on the current
/// grid (same resolution, different h_z).
fn reuse_on_grid(u: &Field, grid: GridSpec) -> Field {
    Field { grid, symmetry: u.symmetry, values: u.values.clone() }
}

/// Trilinear prolongation of a coarse field onto a finer grid (clamped
/// at the planar truncation, periodic in x₃). Used for warm starts in
/// refinement studies.
pub fn prolong(coarse: &Field, fine: GridSpec) -> Field {
    let cg = &coarse.grid;
    let sample = |x: f64, y: f64, z: f64| -> f64 {
        let fx = ((x + cg.l_planar) / cg.h_x() - 0.5).clamp(0.0, (cg.n_x - 1) as f64);
        let fy = ((y + cg.l_planar) / cg.h_x() - 0.5).clamp(0.0, (cg.n_x - 1) as f64);
        let fz = (z + cg.ell) / cg.h_z();
        let (i0, j0) = (fx.floor() as usize, fy.floor() as usize);
        let (i1, j1) = ((i0 + 1).min(cg.n_x - 1), (j0 + 1).min(cg.n_x - 1));
        let k0 = fz.floor() as isize;
        let (tx, ty, tz) = (fx - i0 as f64, fy - j0 as f64, fz - k0 as f64);
        let kk0 = k0.rem_euclid(cg.n_z as isize) as usize;
        let kk1 = (k0 + 1).rem_euclid(cg.n_z as isize) as usize;
        let mut acc = 0.0;
        for (i, wx) in [(i0, 1.0 - tx), (i1, tx)] {
            for (j, wy) in [(j0, 1.0 - ty), (j1, ty)] {
                for (k, wz) in [(kk0, 1.0 - tz), (kk1, tz)] {
                    acc += wx * wy * wz * coarse.values[cg.index(i, j, k)];
                }
            }
        }
        acc
    };
    let mut out = Field::zeros(fine);
    for i in 0..fine.n_x {
        let x = fine.x_coord(i);
        for j in 0..fine.n_x {
            let y = fine.x_coord(j);
            for k in 0..fine.n_z {
                out.values[fine.index(i, j, k)] = sample(x, y, fine.z_coord(k));
            }
        }
    }
    out.with_symmetry(coarse.symmetry)
}
