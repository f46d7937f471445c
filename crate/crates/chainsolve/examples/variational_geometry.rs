//! Fiber maps, the explicit Nehari rescale, the measured mountain-pass
//! radius, and the bilinear form estimates.

use chainsolve::fields::{Field, GridSpec, PotentialSpec};
use chainsolve::poisson::calibrated_kernel_table;
use chainsolve::variational::{
    bilinear_checks, measure_b1_constant, mountain_geometry, random_smooth_field,
    VariationalContext,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let grid = GridSpec::new(4.0, 24, 1.0, 12).unwrap();
    let a = PotentialSpec::constant(1.0).unwrap();
    let (table, _) = calibrated_kernel_table(&grid, 1e-8).unwrap();
    let ctx = VariationalContext::new(grid, &a, &table).unwrap();

    let u = Field::from_fn(grid, |x, y, z| (-(x * x + y * y + z * z) / 0.09).exp());
    let (n, v0) = ctx.phi_parts(&u).unwrap();
    println!("seed bump: ||u||_a^2 = {n:.6e}, V0 = {v0:.6e}");
    let s = ctx.nehari_scale(&u).unwrap();
    println!("Nehari rescale t_u = {:.8}", s.t);
    let ts = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5];
    let scaled = u.scaled(s.t);
    let fiber = ctx.fiber_profile(&scaled, &ts).unwrap();
    println!("fiber map of the rescaled bump (maximum at t = 1):");
    for (t, phi) in ts.iter().zip(fiber.iter()) {
        println!("  t = {t:>5}: Phi(t u) = {phi:+.8e}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mg = mountain_geometry(&ctx, 50, &mut rng).unwrap();
    println!("mountain geometry: beta = {:.4e}, min Phi = {:.4e}, min slope = {:.4e}",
        mg.beta, mg.min_phi, mg.min_slope);

    let c1 = measure_b1_constant(&ctx, 20, &mut rng).unwrap() * 1.5;
    let u = random_smooth_field(grid, &mut rng);
    let v = random_smooth_field(grid, &mut rng);
    let rep = bilinear_checks(&ctx, &u, &v, c1).unwrap();
    println!("bilinear estimates: B1 margin = {:+.4e}, B2 margin = {:+.4e}",
        rep.b1_margin, rep.b2_margin);
}
