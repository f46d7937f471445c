//! The nonlocal potential w = K[u^2]: discrete Poisson residual,
//! logarithmic growth bound, and the near/far sign structure.

use chainsolve::fields::{Field, GridSpec};
use chainsolve::poisson::{apply_green, calibrated_kernel_table, growth_bound_constant, poisson_residual};

fn main() {
    for &(n, nz) in &[(24usize, 12usize), (48, 24)] {
        let grid = GridSpec::new(3.0, n, 1.0, nz).unwrap();
        let (table, _) = calibrated_kernel_table(&grid, 1e-8).unwrap();
        let u2 = Field::from_fn(grid, |x, y, z| {
            (-(x * x + y * y) / 0.5).exp() * (1.0 + 0.3 * (std::f64::consts::PI * z).cos())
        });
        let w = apply_green(&u2, &table).unwrap();
        println!("grid {n:>3}^2 x {nz:<3}: interior residual of Delta w = u^2 -> {:.4e}",
            poisson_residual(&w, &u2));
    }

    let grid = GridSpec::new(4.0, 32, 1.0, 16).unwrap();
    let (table, _) = calibrated_kernel_table(&grid, 1e-8).unwrap();
    let u = Field::from_fn(grid, |x, y, z| (-(x * x + y * y + z * z) / 0.25).exp());
    println!("growth bound constant C = {:.4}", growth_bound_constant(&u, &table).unwrap());

    // near/far sign structure of the potential of a narrow bump
    let w = apply_green(&u.squared(), &table).unwrap();
    let center = w.values[grid.index(grid.n_x / 2, grid.n_x / 2, 0)];
    let edge = w.values[grid.index(grid.n_x - 1, grid.n_x / 2, 0)];
    println!("potential at bump   = {center:+.5e} (negative near field)");
    println!("potential at |x'|~L = {edge:+.5e} (positive far field)");
}
