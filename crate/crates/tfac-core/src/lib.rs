//! Solver core for the time-fractional Allen-Cahn equation
//!
//!   d_t^alpha u - kappa^2 Lap u = u - u^3
//!
//! where d_t^alpha is the Caputo derivative of order alpha in (0,1).
//! The time discretization is the second-order nonuniform Alikhanov
//! formula evaluated at offset points t_{n-nu} on a graded mesh
//! t_n = (n/N)^gamma T, which compensates the weak singularity of the
//! solution at t = 0.  Space is discretized with a mixed pair: the flux
//! sigma = grad u lives in a Raviart-Thomas space RT_k, the scalar in
//! discontinuous P_k, k in {0, 1}.
//!
//! The crate is organized bottom-up:
//!
//! * [`special`]  - gamma function, the weight kernels omega_beta, and
//!   the Mittag-Leffler function E_alpha
//! * [`temporal`] - graded time meshes and the maximum-step restriction
//! * [`kernels`]  - discrete convolution kernels K^{n,j} of the
//!   Alikhanov formula, their complements P^{n,j}, and the executable
//!   checks of the kernel lemmas
//! * [`gronwall`] - the discrete fractional Gronwall inequality as a
//!   testable object: instance generation at hypothesis equality and
//!   evaluation of the closed-form bound
//! * [`mesh`], [`fem`] - structured triangulations and the RT_k x P_k-dc
//!   pair with projections and error norms
//! * [`sparse`], [`dense`] - the linear algebra the solver runs on
//! * [`solver`]   - the fully discrete scheme, one linear solve per step
//! * [`verification`] - manufactured solutions, weighted error norms,
//!   convergence studies, and truncation/linearization measurements
//!
//! Everything here is deterministic: identical inputs produce identical
//! trajectories.  The crate is `no_std`-compatible (with `alloc`); all
//! I/O lives in the companion CLI crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dense;
pub mod error;
pub mod fem;
pub mod gronwall;
pub mod kernels;
pub mod mesh;
pub mod rng;
pub mod solver;
pub mod sparse;
pub mod special;
pub mod temporal;
pub mod verification;

pub use error::Error;

/// The constant pi_A = 11/4 appearing in the kernel bounds and in the
/// Gronwall step restriction.
pub const PI_A: f64 = 11.0 / 4.0;
