//! FFT plumbing: batched complex transforms along the axes of a 3D
//! row-major array, a DST-I for the zero-extension planar direction,
//! and the resulting direct solver for (−Δ_h + c) with planar Dirichlet
//! extension and periodic third axis.
//!
//! Layout convention everywhere: index (x·ny + y)·nz + z.

use once_cell::sync::Lazy;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

type Plan = Arc<dyn Fft<f64>>;

static PLANS: Lazy<Mutex<HashMap<(usize, bool), Plan>>> = Lazy::new(|| Mutex::new(HashMap::new()));

fn plan(len: usize, inverse: bool) -> Plan {
    let mut cache = PLANS.lock().unwrap();
    cache
        .entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            let dir = if inverse { FftDirection::Inverse } else { FftDirection::Forward };
            planner.plan_fft(len, dir)
        })
        .clone()
}

/// Apply `f` to every 1D line of `data` along `axis`, in parallel.
fn map_lines<F>(data: &mut [Complex<f64>], dims: [usize; 3], axis: usize, f: F)
where
    F: Fn(&mut Vec<Complex<f64>>) + Sync,
{
    let [nx, ny, nz] = dims;
    match axis {
        2 => {
            data.par_chunks_mut(nz).for_each(|line| {
                let mut buf = line.to_vec();
                f(&mut buf);
                line.copy_from_slice(&buf);
            });
        }
        1 => {
            // lines over y for fixed (x, z); each x-slab is independent
            data.par_chunks_mut(ny * nz).for_each(|slab| {
                let mut buf = vec![Complex::default(); ny];
                for z in 0..nz {
                    for y in 0..ny {
                        buf[y] = slab[y * nz + z];
                    }
                    f(&mut buf);
                    for y in 0..ny {
                        slab[y * nz + z] = buf[y];
                    }
                }
            });
        }
        0 => {
            // lines over x for fixed (y, z); parallelize over y
            let stride = ny * nz;
            let ptr = SendPtr(data.as_mut_ptr());
            (0..ny).into_par_iter().for_each(|y| {
                let p = ptr;
                let mut buf = vec![Complex::default(); nx];
                for z in 0..nz {
                    let base = y * nz + z;
                    for x in 0..nx {
                        buf[x] = unsafe { *p.0.add(base + x * stride) };
                    }
                    f(&mut buf);
                    for x in 0..nx {
                        unsafe { *p.0.add(base + x * stride) = buf[x] };
                    }
                }
            });
        }
        _ => unreachable!(),
    }
}

#[derive(Clone, Copy)]
struct SendPtr(*mut Complex<f64>);
unsafe impl Send for SendPtr {}
unsafe impl Sync for SendPtr {}

/// In-place 3D complex FFT. The inverse transform includes the 1/N
/// normalization.
pub fn fft3(data: &mut [Complex<f64>], dims: [usize; 3], inverse: bool) {
    assert_eq!(data.len(), dims[0] * dims[1] * dims[2]);
    for axis in 0..3 {
        if dims[axis] > 1 {
            let p = plan(dims[axis], inverse);
            map_lines(data, dims, axis, |line| p.process(line));
        }
    }
    if inverse {
        let scale = 1.0 / (dims[0] * dims[1] * dims[2]) as f64;
        data.par_iter_mut().for_each(|v| *v *= scale);
    }
}

/// DST-I of one line (length n), computed through an odd extension of
/// length 2(n+1): S[k] = Σ_j x[j] sin(π(j+1)(k+1)/(n+1)).
fn dst1_line(line: &mut Vec<Complex<f64>>) {
    let n = line.len();
    let m = 2 * (n + 1);
    let p = plan(m, false);
    let mut buf = vec![Complex::default(); m];
    for j in 0..n {
        buf[j + 1] = line[j];
        buf[n + 2 + j] = -line[n - 1 - j];
    }
    p.process(&mut buf);
    for k in 0..n {
        let y = buf[k + 1];
        // S[k] = i/2 · Y[k+1], applied to both payload channels
        line[k] = Complex::new(-0.5 * y.im, 0.5 * y.re);
    }
}

/// Eigenvalues of the 1D compact second-difference with zero Dirichlet
/// ghost cells, matching DST-I modes.
pub fn dirichlet_eigenvalues(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let t = std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64;
            (2.0 - 2.0 * t.cos()) / (h * h)
        })
        .collect()
}

/// Eigenvalues of the periodic 1D compact second-difference (DFT modes).
pub fn periodic_eigenvalues(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            (2.0 - 2.0 * t.cos()) / (h * h)
        })
        .collect()
}

/// Direct solve of (−Δ_h + shift) w = rhs on an (nx, ny, nz) grid with
/// zero extension beyond the planar box and a periodic third axis.
pub fn helmholtz_solve(rhs: &[f64], dims: [usize; 3], spacing: [f64; 3], shift: f64) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let lx = dirichlet_eigenvalues(nx, spacing[0]);
    let ly = dirichlet_eigenvalues(ny, spacing[1]);
    let lz = periodic_eigenvalues(nz, spacing[2]);
    let mut data: Vec<Complex<f64>> = rhs.iter().map(|&v| Complex::new(v, 0.0)).collect();

    map_lines(&mut data, dims, 0, dst1_line);
    map_lines(&mut data, dims, 1, dst1_line);
    if nz > 1 {
        let p = plan(nz, false);
        map_lines(&mut data, dims, 2, |line| p.process(line));
    }

    data.par_chunks_mut(nz).enumerate().for_each(|(xy, line)| {
        let x = xy / ny;
        let y = xy % ny;
        for (z, v) in line.iter_mut().enumerate() {
            *v /= lx[x] + ly[y] + lz[z] + shift;
        }
    });

    map_lines(&mut data, dims, 0, dst1_line);
    map_lines(&mut data, dims, 1, dst1_line);
    if nz > 1 {
        let p = plan(nz, true);
        map_lines(&mut data, dims, 2, |line| p.process(line));
    }
    // DST-I is involutive up to 2/(n+1) per planar axis; the z FFT pair
    // carries 1/nz.
    let scale = 4.0 / (((nx + 1) * (ny + 1)) as f64) / nz as f64;
    data.iter().map(|v| v.re * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply_stencil(u: &[f64], dims: [usize; 3], spacing: [f64; 3], shift: f64) -> Vec<f64> {
        let [nx, ny, nz] = dims;
        let (hx2, hy2, hz2) =
            (spacing[0] * spacing[0], spacing[1] * spacing[1], spacing[2] * spacing[2]);
        let at = |x: isize, y: isize, z: usize| -> f64 {
            if x < 0 || x >= nx as isize || y < 0 || y >= ny as isize {
                0.0
            } else {
                u[(x as usize * ny + y as usize) * nz + z]
            }
        };
        let mut out = vec![0.0; u.len()];
        for x in 0..nx as isize {
            for y in 0..ny as isize {
                for z in 0..nz {
                    let zp = (z + 1) % nz;
                    let zm = (z + nz - 1) % nz;
                    let c = at(x, y, z);
                    let lap = (at(x + 1, y, z) - 2.0 * c + at(x - 1, y, z)) / hx2
                        + (at(x, y + 1, z) - 2.0 * c + at(x, y - 1, z)) / hy2
                        + (at(x, y, zp) - 2.0 * c + at(x, y, zm)) / hz2;
                    out[(x as usize * ny + y as usize) * nz + z] = -lap + shift * c;
                }
            }
        }
        out
    }

    #[test]
    fn fft_roundtrip() {
        let dims = [8, 6, 4];
        let n = dims[0] * dims[1] * dims[2];
        let orig: Vec<Complex<f64>> = (0..n)
            .map(|i| Complex::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut data = orig.clone();
        fft3(&mut data, dims, false);
        fft3(&mut data, dims, true);
        for (a, b) in data.iter().zip(orig.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn dst_is_involutive() {
        let n = 9;
        let orig: Vec<Complex<f64>> =
            (0..n).map(|i| Complex::new((i as f64).sin(), 0.0)).collect();
        let mut line = orig.clone();
        dst1_line(&mut line);
        dst1_line(&mut line);
        let scale = 2.0 / (n as f64 + 1.0);
        for (a, b) in line.iter().zip(orig.iter()) {
            assert!((a.re * scale - b.re).abs() < 1e-12);
        }
    }

    #[test]
    fn helmholtz_inverts_stencil() {
        let dims = [10, 9, 8];
        let spacing = [0.3, 0.25, 0.5];
        let n = dims[0] * dims[1] * dims[2];
        let rhs: Vec<f64> = (0..n).map(|i| ((i * 7919 % 101) as f64 - 50.0) / 50.0).collect();
        let w = helmholtz_solve(&rhs, dims, spacing, 1.7);
        let back = apply_stencil(&w, dims, spacing, 1.7);
        let err = rhs
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-10, "stencil mismatch {err:.3e}");
    }
}
