//! Desk-scale numerics for the Yamabe flow on `S^1(T/2π) × S^(n-1)`.
//!
//! The crate reduces the conformal Yamabe problem on the product metric to
//! functions of the circle variable and provides:
//!
//! * [`geometry`]: conformal factors, scalar curvature, the Yamabe quotient and its gradient;
//! * [`phase_plane`]: the constant-scalar-curvature ODE, its Hamiltonian and period function;
//! * [`spectral`]: Laplace and linearized spectra, kernel detection, and a Monte Carlo
//!   check of a cubic integral on complex projective space;
//! * [`lyapunov_schmidt`]: the reduced functional on the kernel and its order of integrability;
//! * [`flow`]: an IMEX integrator for the volume-normalized flow plus decay-rate fits;
//! * [`slow_flow`]: the polynomial-rate ansatz, the projected ODE solvers and weighted norms;
//! * [`acceptance`]: the end-to-end checks used by the acceptance suite and the `report` command.
//!
//! Data-parallel scans run on rayon when the `parallel` feature is enabled and fall back to
//! sequential iteration otherwise; see [`exec`].

// `!(x > 0.0)` is used deliberately so that NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod exec;
pub mod flow;
pub mod geometry;
pub mod lyapunov_schmidt;
pub mod numerics;
pub mod phase_plane;
pub mod slow_flow;
pub mod spectral;

mod error;

pub use error::{Error, Result};
pub use geometry::{ConformalFactor, ManifoldSpec};
