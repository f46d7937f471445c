//! As the half-period grows the slab kernel's quadratic form on a
//! compact bump approaches the free-space Newtonian value.

use chainsolve::poisson::{newtonian_limit_experiment, BumpSpec};

fn main() {
    let bump = BumpSpec { amplitude: 1.0, sigma: 0.008, support_radius: 0.032 };
    let ells: Vec<f64> = [2.0, 4.0, 8.0, 16.0].iter().map(|m| m * bump.support_radius).collect();
    let rows = newtonian_limit_experiment(&bump, &ells, 24, 1e-9).unwrap();
    println!("ell,D_ell,D_inf,rel_err");
    for r in rows {
        println!("{:.5},{:.10e},{:.10e},{:.4e}", r.ell, r.d_ell, r.d_inf, r.rel_err);
    }
}
