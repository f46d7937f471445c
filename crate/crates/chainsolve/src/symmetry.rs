//! Symmetry reduction: O(2) planar radialization, the involution
//! σ∗u(x′, x₃) = −ū(x′, x₃ − ℓ), the projector onto the G-invariant
//! subspace, and the ∂₃-energy fraction classifying fully nontrivial
//! fields.
//!
//! Radial fields are kept on the full planar grid so they share the FFT
//! convolution path; `radialize` averages over the exact lattice orbits
//! of constant |x′| (cell centers sit at half-integer multiples of h, so
//! orbits are grouped by the integer m² + n² with m = 2i − N + 1).

use crate::fields::{gradient_energy_split, Field, FieldError, SymmetryTag};
use std::collections::HashMap;

/// Angular average over the planar variable at each (|x′|, x₃) orbit.
/// Idempotent; kills every nonzero angular mode the lattice resolves.
pub fn radialize(u: &Field) -> Field {
    let g = &u.grid;
    let n = g.n_x;
    let nz = g.n_z;
    let mut orbits: HashMap<i64, Vec<usize>> = HashMap::new();
    for i in 0..n {
        let m = 2 * i as i64 - n as i64 + 1;
        for j in 0..n {
            let mm = 2 * j as i64 - n as i64 + 1;
            orbits.entry(m * m + mm * mm).or_default().push(i * n + j);
        }
    }
    let mut out = Field::zeros(*g);
    let mut slice = vec![0.0; nz];
    for members in orbits.values() {
        for v in slice.iter_mut() {
            *v = 0.0;
        }
        for &p in members {
            for k in 0..nz {
                slice[k] += u.values[p * nz + k];
            }
        }
        let inv = 1.0 / members.len() as f64;
        for &p in members {
            for k in 0..nz {
                out.values[p * nz + k] = slice[k] * inv;
            }
        }
    }
    out.symmetry = SymmetryTag::Radial;
    out
}

/// The involution σ∗u = −ū(x′, x₃ − ℓ): circular half-period shift plus
/// sign flip. Exact on the grid; applying it twice returns the input
/// bitwise.
pub fn sigma_apply(u: &Field) -> Result<Field, FieldError> {
    let g = &u.grid;
    if g.n_z % 2 != 0 {
        return Err(FieldError::BadGrid("sigma needs an even vertical resolution".into()));
    }
    let half = g.n_z / 2;
    let mut out = Field::zeros(*g);
    for p in 0..g.n_x * g.n_x {
        for k in 0..g.n_z {
            out.values[p * g.n_z + k] = -u.values[p * g.n_z + (k + half) % g.n_z];
        }
    }
    out.symmetry = u.symmetry;
    Ok(out)
}

/// Orthogonal projector onto X_G: radialization composed with the
/// σ-average ½(u + σ∗u). Linear, idempotent, and a contraction.
pub fn project_g(u: &Field) -> Result<Field, FieldError> {
    let su = sigma_apply(u)?;
    let avg = u.axpy(1.0, &su).scaled(0.5);
    let mut out = radialize(&avg);
    out.symmetry = SymmetryTag::GInvariant;
    Ok(out)
}

/// ∫|∂₃u|² / ∫|∇u|² ∈ [0, 1]; zero exactly for x₃-constant fields.
/// Errors when the field has no gradient energy at all.
pub fn d3_energy_fraction(u: &Field) -> Result<f64, FieldError> {
    let (ex, ey, ez) = gradient_energy_split(u);
    let total = ex + ey + ez;
    if total == 0.0 {
        return Err(FieldError::BadGrid("gradient energy vanishes; fraction undefined".into()));
    }
    Ok(ez / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{inner, GridSpec};
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        GridSpec::new(2.0, 16, 1.0, 8).unwrap()
    }

    #[test]
    fn radialize_fixes_radial_and_kills_odd_modes() {
        let g = grid();
        let radial = Field::from_fn(g, |x, y, z| (-(x * x + y * y)).exp() * (1.0 + 0.3 * z));
        let r = radialize(&radial);
        let scale = radial.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in r.values.iter().zip(radial.values.iter()) {
            assert!((a - b).abs() < 1e-12 * scale);
        }
        let odd = Field::from_fn(g, |x, y, z| x * (-(x * x + y * y) - z * z).exp());
        let r = radialize(&odd);
        assert!(r.values.iter().all(|v| v.abs() < 1e-13));
        // idempotence
        let u = Field::from_fn(g, |x, y, z| (x + 0.5 * y).sin() + z * z);
        let r1 = radialize(&u);
        let r2 = radialize(&r1);
        for (a, b) in r1.values.iter().zip(r2.values.iter()) {
            assert!((a - b).abs() < 1e-13 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn sigma_is_an_involution() {
        let g = grid();
        let u = Field::from_fn(g, |x, y, z| (x * y).sin() + (PI * z).cos() * x);
        let s = sigma_apply(&u).unwrap();
        let ss = sigma_apply(&s).unwrap();
        assert_eq!(ss.values, u.values, "sigma^2 must be the identity bitwise");
    }

    #[test]
    fn sigma_fixed_and_antifixed_fields() {
        let g = grid();
        // g(x') cos(pi x3 / l) is sigma-invariant
        let u = Field::from_fn(g, |x, y, z| {
            (-(x * x + y * y)).exp() * (PI * z / g.ell).cos()
        });
        let s = sigma_apply(&u).unwrap();
        let scale = u.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in s.values.iter().zip(u.values.iter()) {
            assert!((a - b).abs() < 1e-12 * scale);
        }
        // x3-constant fields are anti-fixed
        let c = Field::from_fn(g, |x, y, _| (-(x * x) - y * y).exp());
        let sc = sigma_apply(&c).unwrap();
        for (a, b) in sc.values.iter().zip(c.values.iter()) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn project_g_properties() {
        let g = grid();
        let u = Field::from_fn(g, |x, y, z| {
            (-(x * x + y * y)).exp() * (PI * z / g.ell).cos()
        });
        let pu = project_g(&u).unwrap();
        let scale = u.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // already G-invariant: unchanged
        for (a, b) in pu.values.iter().zip(u.values.iter()) {
            assert!((a - b).abs() < 1e-12 * scale);
        }
        // sigma fixes the projection
        let spu = sigma_apply(&pu).unwrap();
        for (a, b) in spu.values.iter().zip(pu.values.iter()) {
            assert!((a - b).abs() < 1e-12 * scale);
        }
        // x3-constant fields project to zero, exactly
        let c = Field::from_fn(g, |x, y, _| x * y + 1.0);
        let pc = project_g(&c).unwrap();
        assert!(pc.values.iter().all(|v| *v == 0.0));
        // contraction in L2
        let w = Field::from_fn(g, |x, y, z| (3.0 * x).sin() * (2.0 * y).cos() + z);
        let pw = project_g(&w).unwrap();
        assert!(inner(&pw, &pw) <= inner(&w, &w) * (1.0 + 1e-12));
    }

    #[test]
    fn d3_fraction_basics() {
        let g = grid();
        let flat = Field::from_fn(g, |x, y, _| (-(x * x) - y * y).exp());
        assert_eq!(d3_energy_fraction(&flat).unwrap(), 0.0);
        let u = Field::from_fn(g, |x, y, z| (-(x * x) - y * y).exp() * (PI * z).cos());
        let f = d3_energy_fraction(&u).unwrap();
        assert!(f > 0.0 && f < 1.0);
        // invariant under scaling
        let f2 = d3_energy_fraction(&u.scaled(3.7)).unwrap();
        assert!((f - f2).abs() < 1e-14);
        assert!(d3_energy_fraction(&Field::zeros(g)).is_err());
    }

    #[test]
    fn d3_fraction_matches_separable_analytic_value() {
        // u = e^{-|x'|^2} cos(pi x3 / l): fraction =
        // (pi/l)^2 |g|_2^2 / (|grad g|_2^2 + (pi/l)^2 |g|_2^2)
        let g = GridSpec::new(5.5, 256, 1.0, 128).unwrap();
        let u = Field::from_fn(g, |x, y, z| {
            (-(x * x + y * y)).exp() * (PI * z / g.ell).cos()
        });
        let kappa2 = (PI / g.ell).powi(2);
        // for e^{-rho^2} in 2D: |g|_2^2 = pi/2, |grad g|_2^2 = pi
        let analytic = kappa2 * (PI / 2.0) / (PI + kappa2 * (PI / 2.0));
        let measured = d3_energy_fraction(&u).unwrap();
        assert!(
            (measured - analytic).abs() < 1e-3,
            "measured {measured} vs analytic {analytic}"
        );
    }
}
