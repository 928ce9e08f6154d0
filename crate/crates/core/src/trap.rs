//! Thermal motion in the tweezer.
//!
//! Each trial's atom carries a single motional energy `E` for the whole shot
//! (adiabatic, energy-resolved approximation). For a 3-D harmonic trap in
//! thermal equilibrium `E` is Gamma distributed with shape 3 and scale
//! `k_B T`. By the virial theorem the time-averaged potential energy is `E/2`,
//! which sets both the mean trap intensity the atom sees and its mean
//! differential light shift.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::{HBAR, K_B};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalEnsemble {
    pub temperature: f64,
    /// Trap depth U0 (J).
    pub depth: f64,
    /// K/s
    pub heating_rate: f64,
    pub lifetime: f64,
}

impl ThermalEnsemble {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Self {
            temperature: cfg.trap.temperature,
            depth: cfg.trap.depth,
            heating_rate: cfg.trap.heating_rate,
            lifetime: cfg.trap.lifetime,
        }
    }

    pub fn thermal_energy(&self) -> f64 {
        K_B * self.temperature
    }

    /// Whether the harmonic thermal model applies (3 k_B T < U0).
    pub fn is_harmonic_valid(&self) -> bool {
        3.0 * self.thermal_energy() < self.depth
    }

    /// Logs a warning when the ensemble is too hot for the harmonic model.
    pub fn check_validity(&self) -> bool {
        let ok = self.is_harmonic_valid();
        if !ok {
            log::warn!(
                "3 k_B T = {:.3e} J exceeds trap depth {:.3e} J; harmonic thermal model is not valid",
                3.0 * self.thermal_energy(),
                self.depth
            );
        }
        ok
    }
}

/// One draw of the motional energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionalSample {
    pub energy: f64,
}

impl MotionalSample {
    pub fn intensity_fraction(&self, depth: f64) -> f64 {
        intensity_fraction(self.energy, depth)
    }

    pub fn differential_shift(&self, eta: f64) -> f64 {
        differential_shift(self.energy, eta)
    }
}

/// Draws `E ~ Gamma(3, k_B T)` as the sum of three unit exponentials.
pub fn sample_motional_energy<R: Rng + ?Sized>(
    ensemble: &ThermalEnsemble,
    rng: &mut R,
) -> MotionalSample {
    let x: f64 = (0..3).map(|_| -> f64 { Exp1.sample(rng) }).sum();
    MotionalSample {
        energy: x * ensemble.thermal_energy(),
    }
}

/// Time-averaged trap intensity relative to the trap bottom for an atom of
/// energy `energy`: `clamp(1 - E / (2 U0), 0, 1)`.
pub fn intensity_fraction(energy: f64, depth: f64) -> f64 {
    (1.0 - energy / (2.0 * depth)).clamp(0.0, 1.0)
}

/// Qubit frequency offset `eta E / (2 hbar)` (rad/s) relative to an atom at
/// the trap bottom.
pub fn differential_shift(energy: f64, eta: f64) -> f64 {
    eta * energy / (2.0 * HBAR)
}

/// Trap survival over `elapsed` (probability `exp(-elapsed / lifetime)`)
/// and the linearly heated temperature.
pub fn survival_and_heating<R: Rng + ?Sized>(
    ensemble: &ThermalEnsemble,
    elapsed: f64,
    rng: &mut R,
) -> (bool, f64) {
    let u: f64 = rng.random();
    let survived = u < (-elapsed / ensemble.lifetime).exp();
    (
        survived,
        ensemble.temperature + ensemble.heating_rate * elapsed,
    )
}
