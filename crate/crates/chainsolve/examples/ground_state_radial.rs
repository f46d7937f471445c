//! Radial ground state of the slab system with a = 1: projected
//! gradient descent on the Nehari manifold, with post-hoc residuals.

use chainsolve::fields::{GridSpec, PotentialSpec};
use chainsolve::poisson::calibrated_kernel_table;
use chainsolve::solver::{ground_state, SolverConfig, SymmetryClass};
use chainsolve::variational::VariationalContext;

fn main() {
    let grid = GridSpec::new(6.0, 32, 1.0, 16).unwrap();
    let a = PotentialSpec::constant(1.0).unwrap();
    let (table, _) = calibrated_kernel_table(&grid, 1e-9).unwrap();
    let ctx = VariationalContext::new(grid, &a, &table).unwrap();
    let cfg = SolverConfig {
        class: SymmetryClass::Radial,
        seed_width: 0.8,
        seed_width_z: 0.6,
        ..SolverConfig::default()
    };
    let report = ground_state(&ctx, &cfg).unwrap();
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    println!("\ntrace tail:");
    for t in report.trace.iter().rev().take(5).rev() {
        println!("  iter {:>4}: phi = {:.10e}, |grad| = {:.3e}", t.iter, t.phi, t.grad_norm);
    }
}
