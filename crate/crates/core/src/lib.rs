//! Simulation and analysis toolkit for the mean-field integrate-and-fire
//! model with instantaneous excitatory feedback.
//!
//! Each neuron's potential `X` follows
//!
//! ```text
//! X_t = X_0 + ∫ b(X_s) ds + α e(t) + W_t − M_t,      e(t) = E[M_t]
//! ```
//!
//! where `M` counts threshold crossings at level 1. The crate provides:
//!
//! - [`paths`]: càdlàg path storage, the counting map `M = ⌊(sup Z)₊⌋`, the
//!   M1 oscillation functions and a discretized M1 distance.
//! - [`cascade`]: exact resolution of spike cascades in the N-particle
//!   system and the physical jump-size rule for empirical measures.
//! - [`particle_sim`]: Euler–Maruyama stepping of the N-particle system with
//!   cascade resolution at threshold events.
//! - [`delayed_sim`]: windowed solver for the delayed equation.
//! - [`analysis`]: jump detection, physical-jump verification, firing rates
//!   and convergence reports.

pub mod analysis;
pub mod cascade;
pub mod delayed_sim;
pub mod error;
pub mod particle_sim;
pub mod paths;
pub mod rng;

pub use error::{Error, Result};
