//! Sampling-based model predictive control on an Ising machine.
//!
//! A linearized tracking MPC problem for a kinematic bicycle is condensed
//! over the horizon into a quadratic energy over binary-encoded control
//! deviations. Control updates are drawn by Gibbs sampling from the matching
//! Boltzmann distribution, averaged per bit and rounded. Two Gaussian MPPI
//! baselines and an experiment harness are included.

pub mod controllers;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod qubo;
pub mod rng;
pub mod sampler;
pub mod scenarios;

pub use error::{Error, Result};
