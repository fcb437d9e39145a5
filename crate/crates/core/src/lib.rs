//! Anisotropic first-order aggregation with implicitly defined velocities,
//! its small-inertia relaxation, and the tooling to measure how the relaxed
//! dynamics passes through velocity jumps.
//!
//! The crate is organised bottom-up:
//!
//! - [`kernels`]: Morse potential and the vision weight `g`.
//! - [`polar`]: the heading/speed decomposition `H`, `R` of the velocity
//!   fixed-point equation, particle-derived and synthetic fields.
//! - [`roots`]: scanning, refining and classifying roots of `θ ↦ H(x, θ)`,
//!   plus jump-target selection.
//! - [`first_order`]: root-continuation integrator for the first-order model
//!   with breakdown detection.
//! - [`relax`]: the ε-relaxation system in polar form and transition-layer
//!   measurements.
//! - [`one_d`]: the scalar `(k, ℓ)` model.
//! - [`harness`]: ε-sweeps, log-log fits and report emission.

pub mod error;
pub mod first_order;
pub mod fixtures;
pub mod harness;
pub mod kernels;
pub mod one_d;
pub mod polar;
pub mod relax;
pub mod roots;
pub mod vec2;

pub use error::{Error, Result};
pub use vec2::Vec2;

/// Wrap an angle to the principal interval `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let w = (theta + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can return exactly 2π for tiny negative inputs
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Signed shortest arc from `from` to `to`, in `[-π, π)`.
pub fn angle_diff(to: f64, from: f64) -> f64 {
    wrap_angle(to - from)
}
