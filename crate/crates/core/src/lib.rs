//! Exact high-dimensional dynamics of online sparse PCA.
//!
//! Four routes to the same quantities, each usable as a check on the others:
//!
//! * [`online`]: direct Monte Carlo of Oja's rule with soft thresholding on
//!   spiked-covariance streams ([`model`]);
//! * [`pde`]: the deterministic drift–diffusion limit of the empirical
//!   measure as `p → ∞`;
//! * [`oja`]: the closed-form overlap curve for plain Oja;
//! * [`steady`]: the stationary Boltzmann densities, the `(Q, R)` fixed-point
//!   equations and the SNR phase-transition sweep.

pub mod error;
pub mod model;
pub mod oja;
pub mod online;
pub mod pde;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod steady;

pub use error::{Error, Result};
