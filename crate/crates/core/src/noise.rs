//! Stochastic imperfections.
//!
//! The irreversible echo decay is phenomenological: its rate is
//! `a U + b B`. The `a U` part is realized as spontaneous Raman scattering
//! that destroys coherence, the `b B` part as phase diffusion from magnetic
//! field noise. Both coefficients come from [`calibrate_echo_coefficients`].
//! How the measured decay splits between the two mechanisms is only fixed by
//! assuming this linear form.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::QubitState;
use crate::error::{Error, Result};

/// Per-channel switches. Disabled channels still consume their random
/// draws, so toggling a channel never shifts the other channels' streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseChannels {
    /// Differential light shift from thermal motion.
    pub thermal_shift: bool,
    /// Reduced Rabi frequency from the time-averaged trap intensity.
    pub thermal_intensity: bool,
    /// Shot-to-shot technical intensity noise.
    pub intensity_noise: bool,
    pub scattering: bool,
    pub magnetic: bool,
    pub trap_loss: bool,
}

impl NoiseChannels {
    pub fn all() -> Self {
        Self {
            thermal_shift: true,
            thermal_intensity: true,
            intensity_noise: true,
            scattering: true,
            magnetic: true,
            trap_loss: true,
        }
    }

    pub fn none() -> Self {
        Self {
            thermal_shift: false,
            thermal_intensity: false,
            intensity_noise: false,
            scattering: false,
            magnetic: false,
            trap_loss: false,
        }
    }

    /// Motional dephasing only.
    pub fn motional_only() -> Self {
        Self {
            thermal_shift: true,
            ..Self::none()
        }
    }
}

impl Default for NoiseChannels {
    fn default() -> Self {
        Self::all()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Total relative RMS intensity noise of both Raman beams.
    pub intensity_rms: f64,
    /// Bias field (T).
    pub b_field: f64,
    /// Scattering rate per unit trap depth (1/(s J)).
    pub echo_coeff_a: f64,
    /// Phase-diffusion rate per unit field (1/(s T)).
    pub echo_coeff_b: f64,
    pub scatter_branch_f1: f64,
    pub channels: NoiseChannels,
}

impl NoiseConfig {
    /// Spontaneous Raman scattering rate at trap depth `depth` (1/s).
    pub fn scattering_rate(&self, depth: f64) -> f64 {
        self.echo_coeff_a * depth
    }

    /// Rate of contrast loss from magnetic phase diffusion (1/s).
    pub fn magnetic_rate(&self) -> f64 {
        self.echo_coeff_b * self.b_field
    }
}

const TRUNCATION_SIGMAS: f64 = 5.0;

/// Multiplicative Rabi-frequency factor for one shot:
/// `g ~ Normal(1, rms)` truncated at 5 sigma, never negative.
pub fn sample_intensity_factor<R: Rng + ?Sized>(cfg: &NoiseConfig, rng: &mut R) -> f64 {
    let z = loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= TRUNCATION_SIGMAS {
            break z;
        }
    };
    if !cfg.channels.intensity_noise {
        return 1.0;
    }
    (1.0 + cfg.intensity_rms * z).max(0.0)
}

/// Possibly scatters the atom during `elapsed` at trap depth `depth`.
/// A scattered atom loses coherence and lands in F=1 with probability
/// `scatter_branch_f1`, otherwise in F=2. Lost atoms are unaffected.
pub fn scattering_event<R: Rng + ?Sized>(
    state: QubitState,
    depth: f64,
    elapsed: f64,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> QubitState {
    let u_event: f64 = rng.random();
    let u_branch: f64 = rng.random();
    if !cfg.channels.scattering || elapsed <= 0.0 || state == QubitState::Lost {
        return state;
    }
    let p = -(-cfg.scattering_rate(depth) * elapsed).exp_m1();
    if u_event < p {
        if u_branch < cfg.scatter_branch_f1 {
            QubitState::ScatteredF1
        } else {
            QubitState::ScatteredF2
        }
    } else {
        state
    }
}

/// Random relative phase accumulated over a free gap: zero-mean Gaussian with
/// variance `2 b B gap`, independent between gaps.
pub fn sample_magnetic_phase_noise<R: Rng + ?Sized>(
    gap: f64,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    if !cfg.channels.magnetic || gap <= 0.0 {
        return 0.0;
    }
    z * (2.0 * cfg.magnetic_rate() * gap).sqrt()
}

/// One measured echo-decay condition, in laboratory units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoObservation {
    pub depth_mk: f64,
    pub b_mt: f64,
    pub t_decay_ms: f64,
}

/// Coefficients of `1/T_decay = a U + b B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoCoefficients {
    /// 1/(ms mK)
    pub a_per_mk_ms: f64,
    /// 1/(ms mT)
    pub b_per_mt_ms: f64,
}

impl EchoCoefficients {
    /// Predicted decay rate (1/ms).
    pub fn rate_per_ms(&self, depth_mk: f64, b_mt: f64) -> f64 {
        self.a_per_mk_ms * depth_mk + self.b_per_mt_ms * b_mt
    }

    pub fn decay_time_ms(&self, depth_mk: f64, b_mt: f64) -> f64 {
        1.0 / self.rate_per_ms(depth_mk, b_mt)
    }
}

/// Least-squares solution of `1/T = a U + b B` over the observations; exact
/// for two independent conditions.
pub fn calibrate_echo_coefficients(observations: &[EchoObservation]) -> Result<EchoCoefficients> {
    if observations.len() < 2 {
        return Err(Error::Singular(format!(
            "need at least 2 conditions, got {}",
            observations.len()
        )));
    }
    for (i, o) in observations.iter().enumerate() {
        if !(o.t_decay_ms > 0.0 && o.t_decay_ms.is_finite()) {
            return Err(Error::validation(
                format!("observations[{i}].t_decay_ms"),
                "must be > 0",
                o.t_decay_ms,
            ));
        }
    }
    let n = observations.len();
    let a = DMatrix::from_fn(n, 2, |i, j| {
        let o = &observations[i];
        if j == 0 {
            o.depth_mk
        } else {
            o.b_mt
        }
    });
    let y = DVector::from_iterator(n, observations.iter().map(|o| 1.0 / o.t_decay_ms));
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax.is_nan() || smax <= 0.0 || smin <= 1e-12 * smax {
        return Err(Error::Singular(
            "conditions do not separate depth and field dependence".into(),
        ));
    }
    let x = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::Singular(e.to_string()))?;
    Ok(EchoCoefficients {
        a_per_mk_ms: x[0],
        b_per_mt_ms: x[1],
    })
}

/// Reads observations from CSV with columns `depth_mk,b_mt,t_decay_ms`.
pub fn read_echo_observations(path: impl AsRef<Path>) -> Result<Vec<EchoObservation>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<EchoObservation>, _>>()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use crate::rng::{trial_rng, Domain};

    fn reference_noise() -> NoiseConfig {
        SimConfig::reference().noise
    }

    #[test]
    fn intensity_factor_noiseless() {
        let mut cfg = reference_noise();
        cfg.intensity_rms = 0.0;
        let mut rng = trial_rng(1, Domain::Experiment, 0, 0);
        assert!((0..1000).all(|_| sample_intensity_factor(&cfg, &mut rng) == 1.0));
        cfg.intensity_rms = 0.025;
        cfg.channels.intensity_noise = false;
        assert!((0..1000).all(|_| sample_intensity_factor(&cfg, &mut rng) == 1.0));
    }

    #[test]
    fn intensity_factor_spread() {
        let cfg = reference_noise();
        let mut rng = trial_rng(3, Domain::Experiment, 0, 0);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_intensity_factor(&cfg, &mut rng))
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() < 1e-4);
        assert!((var.sqrt() / 0.025 - 1.0).abs() < 0.01, "{}", var.sqrt());
    }

    #[test]
    fn period_jitter_follows_intensity_jitter() {
        // period 2 pi / (Omega g): relative spread equals that of g to first order
        let cfg = reference_noise();
        let mut rng = trial_rng(4, Domain::Experiment, 0, 0);
        let n = 400_000;
        let periods: Vec<f64> = (0..n)
            .map(|_| 1.0 / sample_intensity_factor(&cfg, &mut rng))
            .collect();
        let mean = periods.iter().sum::<f64>() / n as f64;
        let sd = (periods.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((sd / mean / 0.025 - 1.0).abs() < 0.03, "{}", sd / mean);
    }

    #[test]
    fn scattering_zero_time() {
        let cfg = reference_noise();
        let mut rng = trial_rng(1, Domain::Experiment, 0, 0);
        let s = QubitState::superposition(1.0, 0.2);
        for _ in 0..100 {
            assert_eq!(scattering_event(s, 1e-26, 0.0, &cfg, &mut rng), s);
        }
    }

    #[test]
    fn scattering_half_probability() {
        let cfg = reference_noise();
        let depth = SimConfig::reference().trap.depth;
        let t = std::f64::consts::LN_2 / cfg.scattering_rate(depth);
        let mut rng = trial_rng(5, Domain::Experiment, 0, 0);
        let n = 100_000;
        let mut scattered = 0;
        let mut to_f1 = 0;
        for _ in 0..n {
            match scattering_event(QubitState::ground(), depth, t, &cfg, &mut rng) {
                QubitState::ScatteredF1 => {
                    scattered += 1;
                    to_f1 += 1
                }
                QubitState::ScatteredF2 => scattered += 1,
                _ => {}
            }
        }
        let p = scattered as f64 / n as f64;
        assert!((p - 0.5).abs() < 0.01, "{p}");
        let branch = to_f1 as f64 / scattered as f64;
        assert!((branch - 0.5).abs() < 0.015, "{branch}");
    }

    #[test]
    fn scattering_rate_scales_with_depth() {
        let cfg = reference_noise();
        let hi = crate::K_B * 1.2e-3;
        let lo = crate::K_B * 0.4e-3;
        let ratio = cfg.scattering_rate(lo) / cfg.scattering_rate(hi);
        assert!((ratio - 1.0 / 3.0).abs() < 1e-12);
        // and empirically, from event counts at small probability
        let mut rng = trial_rng(6, Domain::Experiment, 0, 0);
        let t = 0.2 / cfg.scattering_rate(hi);
        let count = |depth: f64, rng: &mut crate::rng::TrialRng| {
            (0..200_000)
                .filter(|_| {
                    !scattering_event(QubitState::ground(), depth, t, &cfg, rng).is_coherent()
                })
                .count() as f64
        };
        let rate_hi = -(1.0 - count(hi, &mut rng) / 200_000.0).ln();
        let rate_lo = -(1.0 - count(lo, &mut rng) / 200_000.0).ln();
        assert!(
            (rate_lo / rate_hi - 1.0 / 3.0).abs() < 0.02,
            "{}",
            rate_lo / rate_hi
        );
    }

    #[test]
    fn magnetic_noise_zero_field() {
        let mut cfg = reference_noise();
        cfg.b_field = 0.0;
        let mut rng = trial_rng(1, Domain::Experiment, 0, 0);
        assert!((0..1000).all(|_| sample_magnetic_phase_noise(1e-2, &cfg, &mut rng) == 0.0));
    }

    #[test]
    fn magnetic_variance_is_diffusive() {
        let cfg = reference_noise();
        let mut rng = trial_rng(7, Domain::Experiment, 0, 0);
        let n = 1_000_000;
        let var = |gap: f64, rng: &mut crate::rng::TrialRng| {
            (0..n)
                .map(|_| sample_magnetic_phase_noise(gap, &cfg, rng).powi(2))
                .sum::<f64>()
                / n as f64
        };
        let v1 = var(5e-3, &mut rng);
        let v2 = var(10e-3, &mut rng);
        assert!((v2 / v1 - 2.0).abs() < 0.04, "{}", v2 / v1);
        let expected = 2.0 * cfg.magnetic_rate() * 5e-3;
        assert!((v1 / expected - 1.0).abs() < 0.01);
    }

    #[test]
    fn magnetic_contrast_matches_closed_form() {
        // With scattering off, <cos(phi1 - phi2)> over two gaps of length T
        // equals exp(-b B 2T).
        let mut cfg = reference_noise();
        cfg.echo_coeff_a = 0.0;
        let mut rng = trial_rng(8, Domain::Experiment, 0, 0);
        let n = 200_000;
        for half in [2e-3, 5e-3, 10e-3] {
            let mean = (0..n)
                .map(|_| {
                    (sample_magnetic_phase_noise(half, &cfg, &mut rng)
                        - sample_magnetic_phase_noise(half, &cfg, &mut rng))
                    .cos()
                })
                .sum::<f64>()
                / n as f64;
            let expected = (-cfg.magnetic_rate() * 2.0 * half).exp();
            assert!(
                (mean - expected).abs() < 5.0 / (n as f64).sqrt(),
                "{mean} vs {expected}"
            );
        }
    }

    fn reference_conditions() -> Vec<EchoObservation> {
        vec![
            EchoObservation {
                depth_mk: 1.2,
                b_mt: 0.36,
                t_decay_ms: 13.0,
            },
            EchoObservation {
                depth_mk: 0.4,
                b_mt: 0.18,
                t_decay_ms: 34.0,
            },
        ]
    }

    #[test]
    fn calibration_on_reference_conditions() {
        // Hand solution of the 2x2 system:
        //   1.2 a + 0.36 b = 1/13,  0.4 a + 0.18 b = 1/34
        //   => a = (1/13 - 2/34) / 0.4,  b = (1/34 - 0.4 a) / 0.18
        let a_ref = (1.0 / 13.0 - 2.0 / 34.0) / 0.4;
        let b_ref = (1.0 / 34.0 - 0.4 * a_ref) / 0.18;
        let c = calibrate_echo_coefficients(&reference_conditions()).unwrap();
        assert!((c.a_per_mk_ms - a_ref).abs() < 1e-14);
        assert!((c.b_per_mt_ms - b_ref).abs() < 1e-14);
        assert!((c.a_per_mk_ms - 0.045248).abs() < 5e-6);
        assert!((c.b_per_mt_ms - 0.062848).abs() < 5e-6);
        assert!((c.rate_per_ms(1.2, 0.36) - 1.0 / 13.0).abs() < 1e-12);
        assert!((c.decay_time_ms(0.4, 0.18) - 34.0).abs() < 1e-9);
        // the shipped defaults are this solution
        assert!((c.a_per_mk_ms - crate::config::DEFAULT_ECHO_A_PER_MK_MS).abs() < 1e-14);
        assert!((c.b_per_mt_ms - crate::config::DEFAULT_ECHO_B_PER_MT_MS).abs() < 1e-14);
    }

    #[test]
    fn calibration_singular_without_field() {
        let obs = vec![
            EchoObservation {
                depth_mk: 1.2,
                b_mt: 0.0,
                t_decay_ms: 13.0,
            },
            EchoObservation {
                depth_mk: 0.4,
                b_mt: 0.0,
                t_decay_ms: 34.0,
            },
        ];
        assert!(matches!(
            calibrate_echo_coefficients(&obs),
            Err(Error::Singular(_))
        ));
        assert!(matches!(
            calibrate_echo_coefficients(&reference_conditions()[..1]),
            Err(Error::Singular(_))
        ));
        // collinear
        let obs = vec![
            EchoObservation {
                depth_mk: 1.2,
                b_mt: 0.36,
                t_decay_ms: 13.0,
            },
            EchoObservation {
                depth_mk: 0.6,
                b_mt: 0.18,
                t_decay_ms: 26.0,
            },
        ];
        assert!(matches!(
            calibrate_echo_coefficients(&obs),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn calibration_least_squares_overdetermined() {
        let truth = EchoCoefficients {
            a_per_mk_ms: 0.05,
            b_per_mt_ms: 0.07,
        };
        let obs: Vec<EchoObservation> = [(1.2, 0.36), (0.4, 0.18), (0.8, 0.5), (1.0, 0.1)]
            .iter()
            .map(|&(u, b)| EchoObservation {
                depth_mk: u,
                b_mt: b,
                t_decay_ms: truth.decay_time_ms(u, b),
            })
            .collect();
        let c = calibrate_echo_coefficients(&obs).unwrap();
        assert!((c.a_per_mk_ms - 0.05).abs() < 1e-12);
        assert!((c.b_per_mt_ms - 0.07).abs() < 1e-12);
    }

    #[test]
    fn observations_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        std::fs::write(
            &path,
            "depth_mk,b_mt,t_decay_ms\n1.2,0.36,13\n0.4, 0.18, 34\n",
        )
        .unwrap();
        let obs = read_echo_observations(&path).unwrap();
        assert_eq!(obs, reference_conditions());
    }
}
