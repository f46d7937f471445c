//! Planar (2D) counterpart of the slab machinery: the logarithmic
//! kernel table, FFT convolution, norms and the direct Helmholtz solve.
//!
//! Two kernel tables appear. `analytic_log` tabulates (1/2π)log|x′−y′|
//! with an analytic cell average at the origin — the planar potential
//! the slab kernel collapses to for x₃-independent densities once the
//! calibration constant is fixed. `collapsed` folds an actual 3D kernel
//! table along its periodic axis; using it makes the discrete identity
//! Φ_ℓ(extension) = 2ℓ·Ψ(planar field) exact to rounding, which the
//! ℓ-scan relies on.

use crate::fft::fft3;
use crate::fields::FieldError;
use crate::kernel::KernelTable;
use once_cell::sync::OnceCell;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

/// Cell-centered square grid on [−L, L]².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarGrid {
    pub l: f64,
    pub n: usize,
}

impl PlanarGrid {
    pub fn new(l: f64, n: usize) -> Result<Self, FieldError> {
        if !(l > 0.0) || n < 8 || n % 2 != 0 {
            return Err(FieldError::BadGrid("planar grid needs l > 0 and even n >= 8".into()));
        }
        Ok(PlanarGrid { l, n })
    }

    #[inline]
    pub fn h(&self) -> f64 {
        2.0 * self.l / self.n as f64
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.h() * self.h()
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.l + (i as f64 + 0.5) * self.h()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    #[inline]
    pub fn interior(&self, i: usize, j: usize) -> bool {
        let lim = 0.7 * self.l;
        self.coord(i).abs() <= lim && self.coord(j).abs() <= lim
    }
}

/// Real samples on a [`PlanarGrid`].
#[derive(Debug, Clone)]
pub struct PlanarField {
    pub grid: PlanarGrid,
    pub values: Vec<f64>,
}

impl PlanarField {
    pub fn zeros(grid: PlanarGrid) -> Self {
        PlanarField { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: PlanarGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.n {
            for j in 0..grid.n {
                values.push(f(grid.coord(i), grid.coord(j)));
            }
        }
        PlanarField { grid, values }
    }

    pub fn scaled(&self, t: f64) -> PlanarField {
        PlanarField { grid: self.grid, values: self.values.iter().map(|v| t * v).collect() }
    }

    pub fn axpy(&self, t: f64, other: &PlanarField) -> PlanarField {
        PlanarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(a, b)| a + t * b)
                .collect(),
        }
    }

    pub fn squared(&self) -> PlanarField {
        PlanarField { grid: self.grid, values: self.values.iter().map(|v| v * v).collect() }
    }
}

pub fn inner2(u: &PlanarField, v: &PlanarField) -> f64 {
    let s: f64 = u.values.iter().zip(v.values.iter()).map(|(a, b)| a * b).sum();
    s * u.grid.area()
}

/// Antiderivative F with ∂²F/∂x∂y = log √(x²+y²).
fn log_antiderivative(x: f64, y: f64) -> f64 {
    if x == 0.0 || y == 0.0 {
        return 0.0;
    }
    let r2 = x * x + y * y;
    x * y * (0.5 * r2.ln() - 1.5) + 0.5 * x * x * (y / x).atan() + 0.5 * y * y * (x / y).atan()
}

/// Exact mean of log|x′| over a rectangular cell (corner inclusion-
/// exclusion per quadrant).
pub fn log_cell_average(center: [f64; 2], h: [f64; 2]) -> f64 {
    let lo = [center[0] - 0.5 * h[0], center[1] - 0.5 * h[1]];
    let hi = [center[0] + 0.5 * h[0], center[1] + 0.5 * h[1]];
    let split = |l: f64, u: f64| -> Vec<(f64, f64)> {
        if l < 0.0 && u > 0.0 {
            vec![(l, 0.0), (0.0, u)]
        } else {
            vec![(l, u)]
        }
    };
    let mut total = 0.0;
    for (x0, x1) in split(lo[0], hi[0]) {
        for (y0, y1) in split(lo[1], hi[1]) {
            let (ax0, ax1) = (x0.abs().min(x1.abs()), x0.abs().max(x1.abs()));
            let (ay0, ay1) = (y0.abs().min(y1.abs()), y0.abs().max(y1.abs()));
            total += log_antiderivative(ax1, ay1) - log_antiderivative(ax0, ay1)
                - log_antiderivative(ax1, ay0)
                + log_antiderivative(ax0, ay0);
        }
    }
    total / (h[0] * h[1])
}

/// Kernel values on the zero-padded planar offset lattice (2n × 2n).
pub struct PlanarKernelTable {
    pub n: usize,
    pub h: f64,
    pub dims: [usize; 2],
    pub values: Vec<f64>,
    spectral: OnceCell<Vec<Complex<f64>>>,
}

impl PlanarKernelTable {
    /// (1/2π) log|offset| at lattice offsets, analytic cell average on
    /// the singular cell.
    pub fn analytic_log(grid: &PlanarGrid) -> Self {
        let n = grid.n;
        let h = grid.h();
        let m = 2 * n;
        let mut values = vec![0.0; m * m];
        for a in 0..m {
            let sa = KernelTable::signed(a, m) as f64 * h;
            for b in 0..m {
                let sb = KernelTable::signed(b, m) as f64 * h;
                values[a * m + b] = if sa == 0.0 && sb == 0.0 {
                    log_cell_average([0.0, 0.0], [h, h]) / (2.0 * PI)
                } else {
                    0.5 * (sa * sa + sb * sb).ln() / (2.0 * PI)
                };
            }
        }
        PlanarKernelTable { n, h, dims: [m, m], values, spectral: OnceCell::new() }
    }

    /// Fold a slab kernel table along the periodic axis:
    /// k₂d(Δx′) = h_z Σ_k K(Δx′, dz_k). For x₃-independent densities the
    /// slab quadratic form equals 2ℓ times the planar one with this
    /// kernel, exactly.
    pub fn collapsed(table: &KernelTable) -> Self {
        let [mx, my, nz] = table.dims;
        let hz = table.spacing[2];
        let mut values = vec![0.0; mx * my];
        for a in 0..mx {
            for b in 0..my {
                let mut s = 0.0;
                for k in 0..nz {
                    let idx = (a * my + b) * nz + k;
                    s += table.k1[idx] + table.k2[idx];
                }
                values[a * my + b] = s * hz;
            }
        }
        PlanarKernelTable {
            n: mx / 2,
            h: table.spacing[0],
            dims: [mx, my],
            values,
            spectral: OnceCell::new(),
        }
    }

    fn spectral(&self) -> &Vec<Complex<f64>> {
        self.spectral.get_or_init(|| {
            let mut buf: Vec<Complex<f64>> =
                self.values.iter().map(|&v| Complex::new(v, 0.0)).collect();
            fft3(&mut buf, [self.dims[0], self.dims[1], 1], false);
            buf
        })
    }

    /// Zero-padded planar convolution: out(x) = Σ_y T(x−y) f(y) h².
    pub fn convolve(&self, f: &PlanarField) -> Result<PlanarField, FieldError> {
        let g = &f.grid;
        if self.dims != [2 * g.n, 2 * g.n] || (self.h - g.h()).abs() > 1e-12 * g.h() {
            return Err(FieldError::TableMismatch("planar table/grid mismatch".into()));
        }
        let m = self.dims[0];
        let mut buf = vec![Complex::default(); m * m];
        for i in 0..g.n {
            for j in 0..g.n {
                buf[i * m + j] = Complex::new(f.values[g.index(i, j)], 0.0);
            }
        }
        fft3(&mut buf, [m, m, 1], false);
        for (v, k) in buf.iter_mut().zip(self.spectral().iter()) {
            *v *= k;
        }
        fft3(&mut buf, [m, m, 1], true);
        let mut out = PlanarField::zeros(*g);
        let area = g.area();
        for i in 0..g.n {
            for j in 0..g.n {
                out.values[g.index(i, j)] = buf[i * m + j].re * area;
            }
        }
        Ok(out)
    }
}

/// Forward-difference gradient energy with zero extension.
pub fn gradient_energy2(u: &PlanarField) -> f64 {
    let g = &u.grid;
    let n = g.n;
    let at = |i: isize, j: isize| -> f64 {
        if i < 0 || i >= n as isize || j < 0 || j >= n as isize {
            0.0
        } else {
            u.values[g.index(i as usize, j as usize)]
        }
    };
    let mut e = 0.0;
    for i in -1..n as isize {
        for j in 0..n as isize {
            let d = at(i + 1, j) - at(i, j);
            e += d * d;
        }
    }
    for i in 0..n as isize {
        for j in -1..n as isize {
            let d = at(i, j + 1) - at(i, j);
            e += d * d;
        }
    }
    e / (g.h() * g.h()) * g.area()
}

/// ‖u‖²_a in the plane given presampled coefficient values.
pub fn norm_a_sq2(u: &PlanarField, a_samples: &[f64]) -> f64 {
    let mass: f64 = u
        .values
        .iter()
        .zip(a_samples.iter())
        .map(|(v, a)| a * v * v)
        .sum::<f64>()
        * u.grid.area();
    mass + gradient_energy2(u)
}

/// Compact 5-point Laplacian with zero extension.
pub fn laplacian2(u: &PlanarField) -> PlanarField {
    let g = &u.grid;
    let n = g.n;
    let inv_h2 = 1.0 / (g.h() * g.h());
    let at = |i: isize, j: isize| -> f64 {
        if i < 0 || i >= n as isize || j < 0 || j >= n as isize {
            0.0
        } else {
            u.values[g.index(i as usize, j as usize)]
        }
    };
    let mut out = PlanarField::zeros(*g);
    for i in 0..n as isize {
        for j in 0..n as isize {
            let c = at(i, j);
            out.values[g.index(i as usize, j as usize)] = (at(i + 1, j) - 2.0 * c + at(i - 1, j)
                + at(i, j + 1)
                - 2.0 * c
                + at(i, j - 1))
                * inv_h2;
        }
    }
    out
}

/// (−Δ₂ + shift)⁻¹ with the zero-extension stencil.
pub fn helmholtz_solve2(rhs: &PlanarField, shift: f64) -> PlanarField {
    let g = &rhs.grid;
    let w = crate::fft::helmholtz_solve(&rhs.values, [g.n, g.n, 1], [g.h(), g.h(), 1.0], shift);
    PlanarField { grid: *g, values: w }
}

/// Planar orbit average over exact lattice radii.
pub fn radialize2(u: &PlanarField) -> PlanarField {
    let g = &u.grid;
    let n = g.n;
    let mut orbits: HashMap<i64, Vec<usize>> = HashMap::new();
    for i in 0..n {
        let m = 2 * i as i64 - n as i64 + 1;
        for j in 0..n {
            let mm = 2 * j as i64 - n as i64 + 1;
            orbits.entry(m * m + mm * mm).or_default().push(g.index(i, j));
        }
    }
    let mut out = PlanarField::zeros(*g);
    for members in orbits.values() {
        let s: f64 = members.iter().map(|&p| u.values[p]).sum();
        let avg = s / members.len() as f64;
        for &p in members {
            out.values[p] = avg;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_kernel_table, SlabKernel};

    #[test]
    fn log_cell_average_matches_midpoint_refinement() {
        let h = [0.37, 0.29];
        for center in [[0.0, 0.0], [0.37, 0.29], [1.11, -0.58]] {
            let analytic = log_cell_average(center, h);
            let n = 400;
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let x = center[0] - 0.5 * h[0] + (i as f64 + 0.5) * h[0] / n as f64;
                    let y = center[1] - 0.5 * h[1] + (j as f64 + 0.5) * h[1] / n as f64;
                    acc += 0.5 * (x * x + y * y).ln();
                }
            }
            acc /= (n * n) as f64;
            assert!((analytic - acc).abs() < 2e-4, "center {center:?}: {analytic} vs {acc}");
        }
    }

    #[test]
    fn planar_convolution_matches_direct() {
        let g = PlanarGrid::new(1.5, 12).unwrap();
        let table = PlanarKernelTable::analytic_log(&g);
        let f = PlanarField::from_fn(g, |x, y| (-(x * x + y * y) / 0.5).exp() + 0.1 * x);
        let fast = table.convolve(&f).unwrap();
        let m = table.dims[0];
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..g.n {
            for j in 0..g.n {
                let mut acc = 0.0;
                for ii in 0..g.n {
                    for jj in 0..g.n {
                        let a = (i + m - ii) % m;
                        let b = (j + m - jj) % m;
                        acc += table.values[a * m + b] * f.values[g.index(ii, jj)];
                    }
                }
                acc *= g.area();
                scale = scale.max(acc.abs());
                err = err.max((acc - fast.values[g.index(i, j)]).abs());
            }
        }
        assert!(err / scale < 1e-11, "rel {:.3e}", err / scale);
    }

    #[test]
    fn collapse_reproduces_slab_quadratic_form() {
        // For an x3-independent density the slab form equals 2l times
        // the planar form with the collapsed kernel, to rounding.
        let nx = 12;
        let nz = 8;
        let l = 1.5;
        let ell = 0.7;
        let g3 = crate::fields::GridSpec::new(l, nx, ell, nz).unwrap();
        let kern = SlabKernel::new(ell).unwrap();
        let table = build_kernel_table(nx, nz, g3.h_x(), &kern).unwrap();
        let density3 = crate::fields::Field::from_fn(g3, |x, y, _| {
            (-(x * x + y * y) / 0.4).exp()
        });
        let w = crate::fields::convolve_with_table(
            &density3,
            &table,
            crate::fields::KernelPart::Total,
        )
        .unwrap();
        let slab_form = crate::fields::inner(&density3, &w);

        let g2 = PlanarGrid::new(l, nx).unwrap();
        let k2d = PlanarKernelTable::collapsed(&table);
        let density2 = PlanarField::from_fn(g2, |x, y| (-(x * x + y * y) / 0.4).exp());
        let w2 = k2d.convolve(&density2).unwrap();
        let planar_form = inner2(&density2, &w2);
        let rel = (slab_form - 2.0 * ell * planar_form).abs() / slab_form.abs();
        assert!(rel < 1e-12, "rel {rel:.3e}");
    }

    #[test]
    fn helmholtz2_inverts_stencil() {
        let g = PlanarGrid::new(2.0, 16).unwrap();
        let rhs = PlanarField::from_fn(g, |x, y| (x * 1.3).sin() * (y * 0.7).cos());
        let w = helmholtz_solve2(&rhs, 2.5);
        let lap = laplacian2(&w);
        for idx in 0..g.len() {
            let back = -lap.values[idx] + 2.5 * w.values[idx];
            assert!((back - rhs.values[idx]).abs() < 1e-11);
        }
    }

    #[test]
    fn radialize2_is_projection() {
        let g = PlanarGrid::new(2.0, 16).unwrap();
        let u = PlanarField::from_fn(g, |x, y| x * 0.3 + (x * x + y * y).cos());
        let r = radialize2(&u);
        let rr = radialize2(&r);
        for (a, b) in r.values.iter().zip(rr.values.iter()) {
            assert!((a - b).abs() < 1e-13 * (1.0 + a.abs()));
        }
        let odd = PlanarField::from_fn(g, |x, y| x * (-(x * x + y * y)).exp());
        let ro = radialize2(&odd);
        assert!(ro.values.iter().all(|v| v.abs() < 1e-13));
    }
}
