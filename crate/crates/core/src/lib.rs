//! Moving point singularities of the heat equation.
//!
//! The crate builds solutions of `u_t = Δu + δ(x − ξ(t))` for deterministic
//! and fractional-Brownian trajectories `ξ`, measures their mass on small
//! balls around the singular point, and fits the resulting scaling laws.
//!
//! * [`fbm`] samples fractional Gaussian noise and fBm paths exactly.
//! * [`paths`] wraps trajectories and the rebased increment `η(s) = ξ(T−s) − ξ(T)`.
//! * [`functionals`] computes exit times, occupation times and their tail integral.
//! * [`heatmass`] evaluates the heat kernel, ball masses, `F(x,T)` and the weak residual.
//! * [`scaling`] fits exponents and checks two-sided envelopes.

pub mod error;
pub mod fbm;
mod fft;
pub mod functionals;
pub mod heatmass;
pub mod paths;
pub mod quadrature;
pub mod scaling;
pub mod seeding;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
