//! Numerical laboratory for finite networks of (an)harmonic oscillators
//! coupled to finite-energy harmonic-continuum thermostats.
//!
//! The crate provides the direct coupled integrator, an independent
//! memory-kernel (generalized Langevin) reduction used as an oracle,
//! critical-point and convergence analysis of the effective potential,
//! and a scenario-driven runner that emits CSV/JSON artifacts.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod kernel;
mod lowdisc;
pub mod network;
pub mod quad;
pub mod runner;
pub mod scenario;
pub mod thermostat;

pub use error::{Error, Result};
