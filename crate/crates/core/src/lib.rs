//! Simulation and sampled verification of stability properties for
//! retarded functional differential equations
//!
//! ```text
//! x'(t) = f(x_t, u(t)),   x_t(τ) = x(t + τ),  τ ∈ [-θ, 0]
//! ```
//!
//! measured through Lyapunov-Krasovskii functionals (LKFs).
//!
//! The crate is organised bottom-up:
//!
//! - [`comparison`]: class K / K∞ / L / PD / KL function objects.
//! - [`history`]: piecewise-cubic elements of `C([-θ,0], ℝⁿ)`.
//! - [`dynamics`]: delay systems, inputs and a method-of-steps RK4 solver.
//! - [`lkf`]: LKF candidates, Driver and Dini derivatives, scalings.
//! - [`certify`]: sampled checks of dissipation conditions and a falsifier.
//! - [`estimate`]: empirical V-stability envelopes and constructive bounds.
//! - [`example`]: the scalar benchmark system with a bump nonlinearity.
//!
//! Every verdict produced here is sampled evidence, never a proof.

pub mod certify;
pub mod comparison;
pub mod dynamics;
pub mod envelope;
mod error;
pub mod estimate;
pub mod example;
pub mod history;
pub mod lkf;
pub mod quadrature;
pub mod report;
pub mod sampling;

pub use error::{Error, Result};
