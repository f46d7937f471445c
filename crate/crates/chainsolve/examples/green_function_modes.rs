//! The per-mode Green function h_r of u'' - r^2 u = f/2pi with periodic
//! conditions: closed-form values, the analytic cosine solution of the
//! ODE operator, and the derivative jump at the diagonal.

use chainsolve::kernel::{ode_apply, ode_green, spectral_kernel};
use std::f64::consts::PI;

fn main() {
    let ell = 1.0;
    println!("h_1(0.3, 0.7)      = {:+.12e}", ode_green(1.0, ell, 0.3, 0.7).unwrap());
    println!("h_1(0.7, 0.3)      = {:+.12e}  (symmetric)", ode_green(1.0, ell, 0.7, 0.3).unwrap());
    println!("h_1(-1, 0.4)       = {:+.12e}", ode_green(1.0, ell, -1.0, 0.4).unwrap());
    println!("h_1(+1, 0.4)       = {:+.12e}  (periodic)", ode_green(1.0, ell, 1.0, 0.4).unwrap());
    println!("h_20(dz=0)         = {:+.12e}  (stable at large r)", spectral_kernel(20.0, 0.0, ell).unwrap());

    // apply the Green operator to f = cos(pi t / l) and compare with the
    // closed-form solution u = -cos(pi t/l) / (2 pi (r^2 + pi^2/l^2))
    for &r in &[0.1, 1.0, 10.0] {
        let n = 256;
        let h = 2.0 * ell / n as f64;
        let ts: Vec<f64> = (0..n).map(|i| -ell + i as f64 * h).collect();
        let fs: Vec<f64> = ts.iter().map(|t| (PI * t / ell).cos()).collect();
        let u = ode_apply(r, ell, &ts, &fs).unwrap();
        let denom = 2.0 * PI * (r * r + PI * PI / (ell * ell));
        let err = ts
            .iter()
            .zip(u.iter())
            .map(|(t, v)| (v + (PI * t / ell).cos() / denom).abs())
            .fold(0.0f64, f64::max);
        println!("ode_apply r={r:<4}: max error vs analytic = {err:.3e}");
    }

    // one-sided derivative jump at t = s: -/+ 1/(4 pi)
    let (r, s) = (1.3, 0.2);
    for side in [1.0f64, -1.0] {
        let g = |d: f64| ode_green(r, ell, s + side * d, s).unwrap();
        let d1 = (g(1e-4) - g(0.0)) / 1e-4;
        let d2 = (g(5e-5) - g(0.0)) / 5e-5;
        let jump = side * (2.0 * d2 - d1);
        println!("one-sided d/dt h at s ({side:+}) = {jump:+.8e}  (1/4pi = {:+.8e})", 1.0 / (4.0 * PI));
    }
}
