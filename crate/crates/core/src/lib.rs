//! Underdamped Langevin sampling with an exact frozen-gradient integrator,
//! baseline samplers, closed-form Gaussian diagnostics and numeric checks of
//! the supporting matrix inequalities.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix the scalar for common uses.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod gaussian_analysis;
pub mod harness;
pub mod integrators;
pub mod linalg;
pub mod potentials;
pub mod rng;
pub mod quadrature;
pub mod scalar;
pub mod schedule;
pub mod verify;

pub use error::{Error, Result};
pub use integrators::{PhaseState, SamplerKind, StepCoefficients};
pub use linalg::Matrix;
pub use potentials::{LocallyNonconvexPotential, Potential, PotentialConstants, QuadraticPotential};
pub use rng::RngStream;
pub use scalar::Real;

pub type QuadraticPotential64 = QuadraticPotential<f64>;
pub type QuadraticPotential32 = QuadraticPotential<f32>;
pub type LocallyNonconvexPotential64 = LocallyNonconvexPotential<f64>;
pub type PhaseState64 = PhaseState<f64>;
pub type PhaseState32 = PhaseState<f32>;
pub type StepCoefficients64 = StepCoefficients<f64>;
pub type StepCoefficients32 = StepCoefficients<f32>;
pub type Matrix64 = Matrix<f64>;
