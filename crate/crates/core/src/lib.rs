//! Pseudospectral simulation of 2D stochastic convective Brinkman-Forchheimer
//! (CBF) equations on the periodic torus, together with a verification suite
//! for the operator identities and convergence behaviour the model is built on.
//!
//! The crate is organised around five pieces:
//!
//! * [`grid`] / [`field`] / [`ops`] — divergence-free Fourier fields on
//!   `[0,2π]²` and the deterministic operators (Leray projection, Stokes,
//!   convective, Forchheimer damping) realised pseudospectrally;
//! * [`noise`] — the truncated cylindrical Wiener process, its dyadic
//!   piecewise-constant derivative, the diffusion operator `G` and the
//!   Wong-Zakai drift correction;
//! * [`integrator`] — exponential-Euler time stepping for the Itô system,
//!   its Wong-Zakai approximant, the deterministic skeleton equation and the
//!   controlled stochastic system, all driven by shared Brownian paths;
//! * [`experiments`] — Monte-Carlo convergence studies and the inequality
//!   batteries that certify the operator estimates at desk scale;
//! * [`par`] — sample-level parallelism (rayon, with a sequential fallback
//!   behind the `parallel` feature).
//!
//! Trajectories are bitwise reproducible from `(seed, config)` alone; all
//! Monte-Carlo aggregation folds in sample order regardless of thread count.

pub mod error;
pub mod experiments;
pub mod field;
mod fft;
pub mod grid;
pub mod integrator;
pub mod noise;
pub mod ops;
pub mod par;

pub use error::Error;
pub use field::{PhysicalField, RawCoeffs, SpectralField};
pub use grid::{FluidParams, GridSpec};

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
