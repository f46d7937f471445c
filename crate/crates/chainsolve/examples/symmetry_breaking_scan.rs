//! Scan the half-period: for small ell the radial ground state is the
//! planar state (c_r = 2 ell kappa); past the transition it dips below
//! and acquires genuine x3-dependence.

use chainsolve::fields::PotentialSpec;
use chainsolve::solver::{ell_scan, SolverConfig, SymmetryClass};

fn main() {
    let a = PotentialSpec::constant(1.0).unwrap();
    let cfg = SolverConfig {
        class: SymmetryClass::Radial,
        restarts: 2,
        seed_width: 1.0,
        seed_width_z: 0.7,
        ..SolverConfig::default()
    };
    let scan = ell_scan(&[0.5, 4.0], 8.0, 32, 16, &a, &cfg, 1e-8).unwrap();
    println!("{:>6} {:>14} {:>14} {:>14} {:>10} {:>8}", "ell", "c_r", "c_G", "2*ell*kappa", "d3(rad)", "status");
    for r in &scan.rows {
        println!(
            "{:>6} {:>14.6e} {:>14.6e} {:>14.6e} {:>10.4} {:>8}",
            r.ell, r.c_r, r.c_g, r.two_ell_kappa, r.d3_radial, r.status
        );
    }
    match scan.ell_star {
        Some(ls) => println!("\nsymmetry breaking at ell* = {ls}"),
        None => println!("\nno symmetry breaking inside this window"),
    }
}
