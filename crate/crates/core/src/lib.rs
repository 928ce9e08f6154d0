//! Monte Carlo simulation and fitting for a single-atom hyperfine qubit held
//! in a tightly focused optical tweezer.
//!
//! The crate models one trapped atom per trial: thermal motion in the trap,
//! Raman rotations between `|0> = |F=1, m_F=0>` and `|1> = |F=2, m_F=0>`,
//! free evolution with a motion-dependent differential light shift, the
//! stochastic imperfections of a real apparatus, and the push-out plus
//! fluorescence readout that maps the hyperfine level onto atom presence.
//! Trials are aggregated into N-shot experiments and fitted with the damped
//! Rabi, thermal Ramsey and exponential echo-decay models.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod noise;
pub mod quadrature;
pub mod readout;
pub mod rng;
pub mod runner;
pub mod trap;

pub use config::{load_config, RawConfig, SimConfig};
pub use error::{Error, Result};

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;
