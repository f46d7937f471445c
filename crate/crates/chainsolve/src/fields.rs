//! Discrete fields on the truncated slab, the norms of the variational
//! space, and FFT convolution against precomputed kernel tables.
//!
//! The slab ℝ² × (−ℓ, ℓ) is truncated to the box |x₁|, |x₂| ≤ L and
//! discretized cell-centered: x_i = −L + (i + ½)h_x in the plane and
//! z_k = −ℓ + k·h_z along the periodic third axis. Fields are zero
//! outside the planar box and 2ℓ-periodic in x₃; every discrete
//! operator follows that convention.
//!
//! The discrete gradient is the forward difference per edge and the
//! discrete Laplacian its adjoint composition, so the integration by
//! parts identity ⟨−Δ_h u, v⟩ = ⟨∇_h u, ∇_h v⟩ holds exactly and the
//! energy, its gradient and the PDE residual all share one stencil.

use crate::fft::fft3;
use crate::kernel::{KernelTable, SpectralCache};
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("grids are incompatible: {0}")]
    GridMismatch(String),
    #[error("kernel table does not match the field grid ({0})")]
    TableMismatch(String),
    #[error("potential is not positive: essential infimum {0} <= 0")]
    NonPositivePotential(f64),
    #[error("field dump is malformed: {0}")]
    BadDump(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Cell-centered grid on [−L, L]² × [−ℓ, ℓ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Planar half-extent L of the truncation box.
    pub l_planar: f64,
    /// Planar resolution per axis (even, ≥ 8).
    pub n_x: usize,
    /// Half-period ℓ of the slab.
    pub ell: f64,
    /// Vertical resolution (even, ≥ 8).
    pub n_z: usize,
}

impl GridSpec {
    pub fn new(l_planar: f64, n_x: usize, ell: f64, n_z: usize) -> Result<Self, FieldError> {
        if !(l_planar > 0.0) || !(ell > 0.0) {
            return Err(FieldError::BadGrid("extents must be positive".into()));
        }
        if n_x < 8 || n_x % 2 != 0 || n_z < 8 || n_z % 2 != 0 {
            return Err(FieldError::BadGrid(format!(
                "resolutions must be even and >= 8, got n_x={n_x}, n_z={n_z}"
            )));
        }
        Ok(GridSpec { l_planar, n_x, ell, n_z })
    }

    #[inline]
    pub fn h_x(&self) -> f64 {
        2.0 * self.l_planar / self.n_x as f64
    }

    #[inline]
    pub fn h_z(&self) -> f64 {
        2.0 * self.ell / self.n_z as f64
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h_x() * self.h_x() * self.h_z()
    }

    #[inline]
    pub fn x_coord(&self, i: usize) -> f64 {
        -self.l_planar + (i as f64 + 0.5) * self.h_x()
    }

    #[inline]
    pub fn z_coord(&self, k: usize) -> f64 {
        -self.ell + k as f64 * self.h_z()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_x * self.n_x * self.n_z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        [self.n_x, self.n_x, self.n_z]
    }

    #[inline]
    pub fn spacing(&self) -> [f64; 3] {
        [self.h_x(), self.h_x(), self.h_z()]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n_x + j) * self.n_z + k
    }

    /// Planar membership in the interior subdomain (inner 70% of the
    /// box), used by residual and growth-bound measurements.
    #[inline]
    pub fn planar_interior(&self, i: usize, j: usize) -> bool {
        let lim = 0.7 * self.l_planar;
        self.x_coord(i).abs() <= lim && self.x_coord(j).abs() <= lim
    }
}

/// Symmetry class tag carried by a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymmetryTag {
    General,
    Radial,
    GInvariant,
    PlanarConstant,
}

impl SymmetryTag {
    pub fn as_byte(self) -> u8 {
        match self {
            SymmetryTag::General => 0,
            SymmetryTag::Radial => 1,
            SymmetryTag::GInvariant => 2,
            SymmetryTag::PlanarConstant => 3,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self, FieldError> {
        Ok(match b {
            0 => SymmetryTag::General,
            1 => SymmetryTag::Radial,
            2 => SymmetryTag::GInvariant,
            3 => SymmetryTag::PlanarConstant,
            other => return Err(FieldError::BadDump(format!("unknown symmetry tag {other}"))),
        })
    }
}

/// Real-valued samples on a [`GridSpec`].
#[derive(Debug, Clone)]
pub struct Field {
    pub grid: GridSpec,
    pub symmetry: SymmetryTag,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Field { grid, symmetry: SymmetryTag::General, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.n_x {
            let x = grid.x_coord(i);
            for j in 0..grid.n_x {
                let y = grid.x_coord(j);
                for k in 0..grid.n_z {
                    values.push(f(x, y, grid.z_coord(k)));
                }
            }
        }
        Field { grid, symmetry: SymmetryTag::General, values }
    }

    pub fn with_symmetry(mut self, tag: SymmetryTag) -> Self {
        self.symmetry = tag;
        self
    }

    pub fn scaled(&self, t: f64) -> Field {
        Field {
            grid: self.grid,
            symmetry: self.symmetry,
            values: self.values.iter().map(|v| t * v).collect(),
        }
    }

    /// self + t·other
    pub fn axpy(&self, t: f64, other: &Field) -> Field {
        Field {
            grid: self.grid,
            symmetry: SymmetryTag::General,
            values: self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(a, b)| a + t * b)
                .collect(),
        }
    }

    pub fn squared(&self) -> Field {
        Field {
            grid: self.grid,
            symmetry: self.symmetry,
            values: self.values.iter().map(|v| v * v).collect(),
        }
    }

    /// Binary dump: magic "CHNF1", L, ℓ (f64), n_x, n_z (u32),
    /// symmetry byte, then row-major f64 LE samples.
    pub fn dump<W: Write>(&self, mut w: W) -> Result<(), FieldError> {
        w.write_all(b"CHNF1")?;
        w.write_all(&self.grid.l_planar.to_le_bytes())?;
        w.write_all(&self.grid.ell.to_le_bytes())?;
        w.write_all(&(self.grid.n_x as u32).to_le_bytes())?;
        w.write_all(&(self.grid.n_z as u32).to_le_bytes())?;
        w.write_all(&[self.symmetry.as_byte()])?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self, FieldError> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != b"CHNF1" {
            return Err(FieldError::BadDump("bad magic".into()));
        }
        let mut f8 = [0u8; 8];
        let mut f4 = [0u8; 4];
        r.read_exact(&mut f8)?;
        let l_planar = f64::from_le_bytes(f8);
        r.read_exact(&mut f8)?;
        let ell = f64::from_le_bytes(f8);
        r.read_exact(&mut f4)?;
        let n_x = u32::from_le_bytes(f4) as usize;
        r.read_exact(&mut f4)?;
        let n_z = u32::from_le_bytes(f4) as usize;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let grid = GridSpec::new(l_planar, n_x, ell, n_z)?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            r.read_exact(&mut f8)?;
            values.push(f64::from_le_bytes(f8));
        }
        Ok(Field { grid, symmetry: SymmetryTag::from_byte(tag[0])?, values })
    }

    /// CSV rows (x1, x2, x3, value) for the grid plane nearest to
    /// `coord` along `axis` (0, 1 or 2).
    pub fn csv_slice<W: Write>(&self, axis: usize, coord: f64, mut w: W) -> Result<(), FieldError> {
        let g = &self.grid;
        let pick = |n: usize, at: &dyn Fn(usize) -> f64| -> usize {
            (0..n)
                .min_by(|&a, &b| {
                    (at(a) - coord).abs().partial_cmp(&(at(b) - coord).abs()).unwrap()
                })
                .unwrap()
        };
        writeln!(w, "x1,x2,x3,value")?;
        match axis {
            2 => {
                let k = pick(g.n_z, &|k| g.z_coord(k));
                for i in 0..g.n_x {
                    for j in 0..g.n_x {
                        writeln!(
                            w,
                            "{:.17e},{:.17e},{:.17e},{:.17e}",
                            g.x_coord(i),
                            g.x_coord(j),
                            g.z_coord(k),
                            self.values[g.index(i, j, k)]
                        )?;
                    }
                }
            }
            0 | 1 => {
                let fixed = pick(g.n_x, &|i| g.x_coord(i));
                for other in 0..g.n_x {
                    for k in 0..g.n_z {
                        let (i, j) = if axis == 0 { (fixed, other) } else { (other, fixed) };
                        writeln!(
                            w,
                            "{:.17e},{:.17e},{:.17e},{:.17e}",
                            g.x_coord(i),
                            g.x_coord(j),
                            g.z_coord(k),
                            self.values[g.index(i, j, k)]
                        )?;
                    }
                }
            }
            _ => return Err(FieldError::BadGrid("axis must be 0, 1 or 2".into())),
        }
        Ok(())
    }
}

/// The coefficient a(x): radially symmetric in x′ by construction,
/// optionally x₃-independent, with essential infimum > 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PotentialSpec {
    Constant {
        value: f64,
    },
    /// a(x) = base + amplitude · exp(−|x′|²/width² − x₃²/width_z²);
    /// omit `width_z` for an x₃-independent well (amplitude may be
    /// negative as long as the infimum stays positive).
    GaussianBump {
        base: f64,
        amplitude: f64,
        width: f64,
        width_z: Option<f64>,
    },
}

impl PotentialSpec {
    pub fn constant(value: f64) -> Result<Self, FieldError> {
        let p = PotentialSpec::Constant { value };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let amin = self.a_min();
        if !(amin > 0.0) {
            return Err(FieldError::NonPositivePotential(amin));
        }
        Ok(())
    }

    pub fn a_min(&self) -> f64 {
        match self {
            PotentialSpec::Constant { value } => *value,
            PotentialSpec::GaussianBump { base, amplitude, .. } => {
                if *amplitude >= 0.0 {
                    *base
                } else {
                    base + amplitude
                }
            }
        }
    }

    pub fn x3_independent(&self) -> bool {
        match self {
            PotentialSpec::Constant { .. } => true,
            PotentialSpec::GaussianBump { width_z, .. } => width_z.is_none(),
        }
    }

    pub fn eval(&self, rho: f64, z: f64) -> f64 {
        match self {
            PotentialSpec::Constant { value } => *value,
            PotentialSpec::GaussianBump { base, amplitude, width, width_z } => {
                let mut e = -(rho * rho) / (width * width);
                if let Some(wz) = width_z {
                    e -= z * z / (wz * wz);
                }
                base + amplitude * e.exp()
            }
        }
    }

    pub fn sample(&self, grid: &GridSpec) -> Vec<f64> {
        let mut out = Vec::with_capacity(grid.len());
        for i in 0..grid.n_x {
            let x = grid.x_coord(i);
            for j in 0..grid.n_x {
                let y = grid.x_coord(j);
                let rho = (x * x + y * y).sqrt();
                for k in 0..grid.n_z {
                    out.push(self.eval(rho, grid.z_coord(k)));
                }
            }
        }
        out
    }
}

fn check_same_grid(a: &GridSpec, b: &GridSpec) -> Result<(), FieldError> {
    if a != b {
        return Err(FieldError::GridMismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

/// ⟨u, v⟩ = cellvol · Σ u v
pub fn inner(u: &Field, v: &Field) -> f64 {
    let s: f64 = u.values.iter().zip(v.values.iter()).map(|(a, b)| a * b).sum();
    s * u.grid.cell_volume()
}

/// Discrete Lᵖ norm scaled by cell volume; `f64::INFINITY` gives the
/// max norm.
pub fn lp_norm(u: &Field, p: f64) -> f64 {
    assert!(p >= 1.0, "lp_norm requires p >= 1");
    if p.is_infinite() {
        return u.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    let s: f64 = u.values.iter().map(|v| v.abs().powf(p)).sum();
    (s * u.grid.cell_volume()).powf(1.0 / p)
}

/// |u|_* = (∫ log(1+|x|) u²)^{1/2} with the full 3D radius.
pub fn log_weight_norm(u: &Field) -> f64 {
    let g = &u.grid;
    let mut s = 0.0;
    for i in 0..g.n_x {
        let x = g.x_coord(i);
        for j in 0..g.n_x {
            let y = g.x_coord(j);
            for k in 0..g.n_z {
                let z = g.z_coord(k);
                let w = (1.0 + (x * x + y * y + z * z).sqrt()).ln();
                let v = u.values[g.index(i, j, k)];
                s += w * v * v;
            }
        }
    }
    (s * g.cell_volume()).sqrt()
}

/// Edge-based gradient energies (∫|∂₁u|², ∫|∂₂u|², ∫|∂₃u|²): forward
/// differences, zero extension in the plane, periodic in x₃.
pub fn gradient_energy_split(u: &Field) -> (f64, f64, f64) {
    let g = &u.grid;
    let (n, nz) = (g.n_x, g.n_z);
    let vol = g.cell_volume();
    let inv_hx2 = 1.0 / (g.h_x() * g.h_x());
    let inv_hz2 = 1.0 / (g.h_z() * g.h_z());
    let at = |i: isize, j: isize, k: usize| -> f64 {
        if i < 0 || i >= n as isize || j < 0 || j >= n as isize {
            0.0
        } else {
            u.values[g.index(i as usize, j as usize, k)]
        }
    };
    let (mut ex, mut ey, mut ez) = (0.0, 0.0, 0.0);
    for i in -1..n as isize {
        for j in 0..n as isize {
            for k in 0..nz {
                let d = at(i + 1, j, k) - at(i, j, k);
                ex += d * d;
            }
        }
    }
    for i in 0..n as isize {
        for j in -1..n as isize {
            for k in 0..nz {
                let d = at(i, j + 1, k) - at(i, j, k);
                ey += d * d;
            }
        }
    }
    for i in 0..n as isize {
        for j in 0..n as isize {
            for k in 0..nz {
                let d = at(i, j, (k + 1) % nz) - at(i, j, k);
                ez += d * d;
            }
        }
    }
    (ex * inv_hx2 * vol, ey * inv_hx2 * vol, ez * inv_hz2 * vol)
}

/// ‖u‖_a = (∫ a u² + |∇u|²)^{1/2}.
pub fn norm_a(u: &Field, a: &PotentialSpec) -> f64 {
    norm_a_sq_with_samples(u, &a.sample(&u.grid)).sqrt()
}

/// ‖u‖²_a given presampled coefficient values.
pub fn norm_a_sq_with_samples(u: &Field, a_samples: &[f64]) -> f64 {
    let (ex, ey, ez) = gradient_energy_split(u);
    let mass: f64 = u
        .values
        .iter()
        .zip(a_samples.iter())
        .map(|(v, a)| a * v * v)
        .sum::<f64>()
        * u.grid.cell_volume();
    mass + ex + ey + ez
}

/// Compact 7-point Laplacian matching the forward-difference gradient:
/// zero extension in the plane, periodic in x₃.
pub fn laplacian(u: &Field) -> Field {
    let g = &u.grid;
    let (n, nz) = (g.n_x, g.n_z);
    let inv_hx2 = 1.0 / (g.h_x() * g.h_x());
    let inv_hz2 = 1.0 / (g.h_z() * g.h_z());
    let at = |i: isize, j: isize, k: usize| -> f64 {
        if i < 0 || i >= n as isize || j < 0 || j >= n as isize {
            0.0
        } else {
            u.values[g.index(i as usize, j as usize, k)]
        }
    };
    let mut out = Field::zeros(*g);
    for i in 0..n as isize {
        for j in 0..n as isize {
            for k in 0..nz {
                let c = at(i, j, k);
                let lap = (at(i + 1, j, k) - 2.0 * c + at(i - 1, j, k)) * inv_hx2
                    + (at(i, j + 1, k) - 2.0 * c + at(i, j - 1, k)) * inv_hx2
                    + (at(i, j, (k + 1) % nz) - 2.0 * c + at(i, j, (k + nz - 1) % nz)) * inv_hz2;
                out.values[g.index(i as usize, j as usize, k)] = lap;
            }
        }
    }
    out
}

/// Which part of the split kernel a convolution should use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelPart {
    K1,
    K2,
    Total,
}

fn spectral(table: &KernelTable) -> &SpectralCache {
    table.spectral_cache(|| {
        let dims = table.dims;
        let mut k1: Vec<Complex<f64>> = table.k1.iter().map(|&v| Complex::new(v, 0.0)).collect();
        let mut k2: Vec<Complex<f64>> = table.k2.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft3(&mut k1, dims, false);
        fft3(&mut k2, dims, false);
        let total: Vec<Complex<f64>> = k1.iter().zip(k2.iter()).map(|(a, b)| a + b).collect();
        Box::new(SpectralCache { k1_hat: k1, k2_hat: k2, total_hat: total })
    })
}

fn table_matches(f: &Field, table: &KernelTable) -> Result<(), FieldError> {
    let g = &f.grid;
    if table.dims != [2 * g.n_x, 2 * g.n_x, g.n_z] {
        return Err(FieldError::TableMismatch(format!(
            "table dims {:?}, expected {:?}",
            table.dims,
            [2 * g.n_x, 2 * g.n_x, g.n_z]
        )));
    }
    let sp = g.spacing();
    for d in 0..3 {
        if (table.spacing[d] - sp[d]).abs() > 1e-12 * sp[d].max(1.0) {
            return Err(FieldError::TableMismatch("spacing mismatch".into()));
        }
    }
    if (table.ell - g.ell).abs() > 1e-12 * g.ell {
        return Err(FieldError::TableMismatch("half-period mismatch".into()));
    }
    Ok(())
}

/// w(x) = Σ_y T(x − y) f(y) · cellvol by zero-padded planar FFT and
/// circular convolution in x₃.
pub fn convolve_with_table(
    f: &Field,
    table: &KernelTable,
    part: KernelPart,
) -> Result<Field, FieldError> {
    table_matches(f, table)?;
    let g = &f.grid;
    let dims = table.dims;
    let mut buf = vec![Complex::default(); dims[0] * dims[1] * dims[2]];
    for i in 0..g.n_x {
        for j in 0..g.n_x {
            for k in 0..g.n_z {
                buf[(i * dims[1] + j) * dims[2] + k] =
                    Complex::new(f.values[g.index(i, j, k)], 0.0);
            }
        }
    }
    fft3(&mut buf, dims, false);
    let cache = spectral(table);
    let khat = match part {
        KernelPart::K1 => &cache.k1_hat,
        KernelPart::K2 => &cache.k2_hat,
        KernelPart::Total => &cache.total_hat,
    };
    for (v, k) in buf.iter_mut().zip(khat.iter()) {
        *v *= k;
    }
    fft3(&mut buf, dims, true);
    let vol = g.cell_volume();
    let mut out = Field::zeros(*g);
    for i in 0..g.n_x {
        for j in 0..g.n_x {
            for k in 0..g.n_z {
                out.values[g.index(i, j, k)] = buf[(i * dims[1] + j) * dims[2] + k].re * vol;
            }
        }
    }
    Ok(out)
}

/// Direct O(N²) reference implementation of the same convolution.
pub fn convolve_direct(
    f: &Field,
    table: &KernelTable,
    part: KernelPart,
) -> Result<Field, FieldError> {
    table_matches(f, table)?;
    let g = &f.grid;
    let (n, nz) = (g.n_x, g.n_z);
    let vol = g.cell_volume();
    let pick = |idx: usize| -> f64 {
        match part {
            KernelPart::K1 => table.k1[idx],
            KernelPart::K2 => table.k2[idx],
            KernelPart::Total => table.k1[idx] + table.k2[idx],
        }
    };
    let mut out = Field::zeros(*g);
    for i in 0..n {
        for j in 0..n {
            for k in 0..nz {
                let mut acc = 0.0;
                for ii in 0..n {
                    for jj in 0..n {
                        for kk in 0..nz {
                            let m = (i + table.dims[0] - ii) % table.dims[0];
                            let nn = (j + table.dims[1] - jj) % table.dims[1];
                            let dk = (k + nz - kk) % nz;
                            acc += pick(table.index(m, nn, dk)) * f.values[g.index(ii, jj, kk)];
                        }
                    }
                }
                out.values[g.index(i, j, k)] = acc * vol;
            }
        }
    }
    Ok(out)
}

/// ⟨−Δ_h u, v⟩ for tests of the discrete pair.
pub fn dirichlet_form(u: &Field, v: &Field) -> Result<f64, FieldError> {
    check_same_grid(&u.grid, &v.grid)?;
    let lap = laplacian(u);
    Ok(-inner(&lap, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_kernel_table, SlabKernel};

    fn small_grid() -> GridSpec {
        GridSpec::new(2.0, 16, 1.0, 8).unwrap()
    }

    fn gaussian(grid: GridSpec, w: f64, wz: f64) -> Field {
        Field::from_fn(grid, |x, y, z| (-(x * x + y * y) / (w * w) - z * z / (wz * wz)).exp())
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(2.0, 7, 1.0, 8).is_err());
        assert!(GridSpec::new(2.0, 16, 1.0, 9).is_err());
        assert!(GridSpec::new(-1.0, 16, 1.0, 8).is_err());
    }

    #[test]
    fn norms_trivial_and_homogeneous() {
        let g = small_grid();
        let a = PotentialSpec::constant(1.0).unwrap();
        let zero = Field::zeros(g);
        assert_eq!(norm_a(&zero, &a), 0.0);
        assert_eq!(log_weight_norm(&zero), 0.0);
        let u = gaussian(g, 0.7, 0.4);
        let n1 = norm_a(&u, &a);
        let n2 = norm_a(&u.scaled(2.0), &a);
        assert!((n2 - 2.0 * n1).abs() < 1e-12 * n1);
        let l3 = lp_norm(&u, 3.0);
        let l3s = lp_norm(&u.scaled(-2.0), 3.0);
        assert!((l3s - 2.0 * l3).abs() < 1e-12 * l3);
    }

    #[test]
    fn lp_norm_of_indicator() {
        let g = small_grid();
        let one = Field { grid: g, symmetry: SymmetryTag::General, values: vec![1.0; g.len()] };
        let vol = 4.0 * g.l_planar * g.l_planar * 2.0 * g.ell;
        for &p in &[1.0, 2.0, 4.0] {
            assert!((lp_norm(&one, p) - vol.powf(1.0 / p)).abs() < 1e-12);
        }
        assert_eq!(lp_norm(&one, f64::INFINITY), 1.0);
    }

    #[test]
    fn gaussian_norm_matches_analytic() {
        // e^{-|x'|^2 - x3^2} on a box large enough that truncation and
        // wraparound sit below 1e-12.
        let g = GridSpec::new(3.75, 128, 3.75, 128).unwrap();
        let a = PotentialSpec::constant(1.0).unwrap();
        let u = gaussian(g, 1.0, 1.0);
        let measured = norm_a(&u, &a).powi(2);
        // ∫u² = (π/2)^{3/2}; ∫|∇u|² = 3 (π/2)^{3/2}
        let pi_half = std::f64::consts::FRAC_PI_2;
        let analytic = 4.0 * pi_half.powf(1.5);
        let rel = (measured - analytic).abs() / analytic;
        assert!(rel < 1.1e-3, "rel err {rel:.3e}");
        // second-order convergence of the difference energy
        let g2 = GridSpec::new(3.75, 256, 3.75, 256).unwrap();
        let u2 = gaussian(g2, 1.0, 1.0);
        let rel2 = (norm_a(&u2, &a).powi(2) - analytic).abs() / analytic;
        let order = (rel / rel2).log2();
        assert!(order > 1.9, "observed order {order:.2}");
    }

    #[test]
    fn log_weight_norm_localizes() {
        // narrow bump at the origin: weight log(1+|x|) vanishes there
        let gn = GridSpec::new(1.0, 32, 1.0, 32).unwrap();
        let near = Field::from_fn(gn, |x, y, z| (-((x * x + y * y) / 0.01) - z * z / 0.01).exp());
        let near_mass: f64 = near.values.iter().map(|v| v * v).sum::<f64>() * gn.cell_volume();
        let near_ratio = log_weight_norm(&near).powi(2) / near_mass;
        assert!(near_ratio < 0.2, "near-origin ratio {near_ratio}");
        // bump centered at |x| = 10: ratio approaches log(11)
        let g = GridSpec::new(14.0, 128, 2.0, 16).unwrap();
        let far = Field::from_fn(g, |x, y, z| {
            let dx = x - 10.0;
            (-(dx * dx + y * y) / 0.16 - z * z / 0.16).exp()
        });
        let mass: f64 = far.values.iter().map(|v| v * v).sum::<f64>() * g.cell_volume();
        let ratio = log_weight_norm(&far).powi(2) / mass;
        assert!((ratio - 11f64.ln()).abs() / 11f64.ln() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn integration_by_parts_exact() {
        let g = small_grid();
        let u = gaussian(g, 0.9, 0.5);
        let v = Field::from_fn(g, |x, y, z| (x - 0.3 * y).sin() * (z * 2.1).cos());
        let lhs = dirichlet_form(&u, &v).unwrap();
        let rhs = {
            // polarization via the split energies of u+v and u-v
            let (px, py, pz) = gradient_energy_split(&u.axpy(1.0, &v));
            let (mx, my, mz) = gradient_energy_split(&u.axpy(-1.0, &v));
            0.25 * ((px + py + pz) - (mx + my + mz))
        };
        assert!((lhs - rhs).abs() < 1e-11 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let g = GridSpec::new(2.0, 16, 1.0, 8).unwrap();
        let kern = SlabKernel::new(g.ell).unwrap();
        let table = build_kernel_table(g.n_x, g.n_z, g.h_x(), &kern).unwrap();
        let mut f = Field::zeros(g);
        let mut state = 88172645463325252u64;
        for v in f.values.iter_mut() {
            // xorshift64
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            *v = (state % 1000) as f64 / 500.0 - 1.0;
        }
        let fast = convolve_with_table(&f, &table, KernelPart::Total).unwrap();
        let slow = convolve_direct(&f, &table, KernelPart::Total).unwrap();
        let scale = slow.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = fast
            .values
            .iter()
            .zip(slow.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err / scale < 1e-10, "rel {:.3e}", err / scale);
    }

    #[test]
    fn convolution_delta_reproduces_kernel_column() {
        let g = small_grid();
        let kern = SlabKernel::new(g.ell).unwrap();
        let table = build_kernel_table(g.n_x, g.n_z, g.h_x(), &kern).unwrap();
        let mut f = Field::zeros(g);
        let (ci, cj, ck) = (g.n_x / 2, g.n_x / 2, 0);
        f.values[g.index(ci, cj, ck)] = 1.0 / g.cell_volume();
        let w = convolve_with_table(&f, &table, KernelPart::K2).unwrap();
        for i in 0..g.n_x {
            for k in 0..g.n_z {
                let m = (i + table.dims[0] - ci) % table.dims[0];
                let nn = (table.dims[1] - cj) % table.dims[1];
                let kk = (k + g.n_z - ck) % g.n_z;
                let expect = table.k2[table.index(m, nn, kk)];
                let got = w.values[g.index(i, 0, k)];
                assert!((got - expect).abs() < 1e-9, "({i},{k}): {got} vs {expect}");
            }
        }
    }

    #[test]
    fn convolution_linearity() {
        let g = small_grid();
        let kern = SlabKernel::new(g.ell).unwrap();
        let table = build_kernel_table(g.n_x, g.n_z, g.h_x(), &kern).unwrap();
        let f = gaussian(g, 0.8, 0.5);
        let h = Field::from_fn(g, |x, y, z| (x * y * 0.3).sin() + z);
        let both = convolve_with_table(&f.axpy(1.0, &h), &table, KernelPart::Total).unwrap();
        let fa = convolve_with_table(&f, &table, KernelPart::Total).unwrap();
        let fb = convolve_with_table(&h, &table, KernelPart::Total).unwrap();
        let scale = both.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for idx in 0..g.len() {
            assert!(
                (both.values[idx] - fa.values[idx] - fb.values[idx]).abs() <= 1e-12 * scale.max(1.0)
            );
        }
    }

    #[test]
    fn field_dump_roundtrip_and_slice() {
        let g = small_grid();
        let u = gaussian(g, 0.8, 0.6).with_symmetry(SymmetryTag::Radial);
        let mut buf = Vec::new();
        u.dump(&mut buf).unwrap();
        let back = Field::load(&buf[..]).unwrap();
        assert_eq!(back.grid, u.grid);
        assert_eq!(back.symmetry, u.symmetry);
        assert_eq!(back.values, u.values);
        let mut csv = Vec::new();
        u.csv_slice(2, 0.0, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + g.n_x * g.n_x);
        assert!(text.starts_with("x1,x2,x3,value"));
    }

    #[test]
    fn potential_validation() {
        assert!(PotentialSpec::constant(0.0).is_err());
        assert!(PotentialSpec::constant(-1.0).is_err());
        let p =
            PotentialSpec::GaussianBump { base: 1.0, amplitude: -2.0, width: 1.0, width_z: None };
        assert!(p.validate().is_err());
        let ok = PotentialSpec::GaussianBump {
            base: 1.0,
            amplitude: 0.5,
            width: 1.0,
            width_z: Some(2.0),
        };
        assert!(ok.validate().is_ok());
        assert!(!ok.x3_independent());
    }
}
