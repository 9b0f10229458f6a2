//! Monotone P1 finite elements for stationary mean field games whose
//! Hamiltonians are convex and Lipschitz but possibly nondifferentiable.
//!
//! The coupled system
//!
//! ```text
//!   -ν Δu + H(x, ∇u) + κ u = F[m]
//!   -ν Δm + κ m - G ∈ div(m ∂_p H(x, ∇u))
//! ```
//!
//! is discretised on triangulations of the unit square with continuous
//! piecewise-linear elements and homogeneous Dirichlet conditions. The
//! transport field of the density equation is a measurable selection from the
//! subdifferential of `H`, artificial diffusion restores a discrete maximum
//! principle on strictly acute meshes, the HJB equation is solved by policy
//! iteration and the coupled pair by an outer fixed-point loop.
//!
//! Module map:
//! - [`mesh`]: uniform nested triangulations, element geometry, acuteness.
//! - [`linalg`]: triplet/CSR storage and a sparse direct LU solver.
//! - [`fespace`]: the P1 space, quadrature, interpolation and error norms.
//! - [`hamiltonian`]: control-set Hamiltonians and subgradient selection.
//! - [`assembly`]: operators, load vectors and artificial diffusion.
//! - [`hjb`]: policy iteration for the discrete HJB equation.
//! - [`mfg`]: the KFP solve, the outer fixed point and diagnostics.
//! - [`problems`]: coupling/source data and the two benchmark experiments.
//! - [`cli`]: configuration and the `mfgpdi` command implementations.

pub mod assembly;
pub mod cli;
pub mod error;
pub mod fespace;
pub mod hamiltonian;
pub mod hjb;
pub mod linalg;
pub mod mesh;
pub mod mfg;
pub mod problems;

pub use error::{Error, Result};

/// A point of the plane.
pub type Point = [f64; 2];
/// A vector of the plane (gradients, drifts, fluxes).
pub type Vec2 = [f64; 2];

#[inline]
pub(crate) fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub(crate) fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}
