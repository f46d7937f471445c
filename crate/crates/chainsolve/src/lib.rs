//! Green function of the Poisson problem on the periodic slab
//! Ω = ℝ² × (−ℓ, ℓ) and ground states of the associated
//! Schrödinger–Poisson (Choquard) system.
//!
//! The crate is organized around the pipeline
//!
//! 1. [`kernel`] — closed-form spectral data of the periodic Green
//!    function K = K₁ + K₂, the finite-part Hankel quadrature for the
//!    smooth part K₂, an independent renormalized image-sum oracle, and
//!    precomputed kernel tables for FFT convolution.
//! 2. [`fields`] — discrete fields on a truncated slab grid, the norms
//!    of the variational space, and convolution plumbing.
//! 3. [`poisson`] — the nonlocal operator 𝒦[u²], residual checks and the
//!    planar / Newtonian kernel-limit experiments.
//! 4. [`variational`] — the energy Φ, bilinear forms B₀/B₁/B₂, the
//!    a-metric gradient and the Nehari manifold.
//! 5. [`symmetry`] — O(2) radialization, the involution σ and the
//!    G-invariant subspace.
//! 6. [`solver`] — projected-gradient ground-state computation in three
//!    symmetry classes and the ℓ-scan locating symmetry breaking.
//!
//! Each major capability has a runnable demo under `examples/`; the
//! `chainsolve` binary provides a batch front-end (`kernel`, `solve`,
//! `ellscan`, `verify`, `export-slice`).

pub mod config;
pub mod fft;
pub mod fields;
pub mod kernel;
pub mod planar;
pub mod poisson;
pub mod quad;
pub mod solver;
pub mod symmetry;
pub mod variational;
pub mod verify;

pub use fields::{Field, GridSpec, PotentialSpec, SymmetryTag};
pub use kernel::{KernelTable, SlabKernel, SlabParams};
pub use solver::{SolveReport, SolverConfig, SymmetryClass};

