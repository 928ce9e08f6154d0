//! State preparation and the push-out/fluorescence readout chain.
//!
//! Push-out maps the hyperfine level onto atom presence (F=1 stays, F=2 is
//! expelled); a threshold on Poisson-distributed fluorescence counts then
//! decides presence.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::dynamics::QubitState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Photon count rate with an atom present, background included (1/s).
    pub atom_count_rate: f64,
    pub background_rate: f64,
    pub presence_window: f64,
    pub readout_window: f64,
    /// Fixed threshold; `None` selects [`choose_threshold`].
    pub threshold: Option<u64>,
    pub pushout_duration: f64,
    /// Trap depth while the push-out beam is on (J).
    pub pushout_depth: f64,
    /// Probability that push-out maps a level onto the wrong presence.
    pub pushout_error: f64,
}

impl DetectionConfig {
    /// Threshold for `window`: the configured one, or the error-minimizing one.
    pub fn threshold_for(&self, window: f64) -> u64 {
        self.threshold
            .unwrap_or_else(|| choose_threshold(self, window).threshold)
    }

    /// Copy with the threshold for `window` fixed, so repeated detections
    /// skip the threshold search.
    pub fn resolved(&self, window: f64) -> Self {
        Self {
            threshold: Some(self.threshold_for(window)),
            ..self.clone()
        }
    }
}

/// Optical pumping: `|0>` with probability `pump_efficiency`, otherwise a
/// dark F=1 Zeeman sublevel.
pub fn prepare_state<R: Rng + ?Sized>(pump_efficiency: f64, rng: &mut R) -> QubitState {
    let u: f64 = rng.random();
    if u < pump_efficiency {
        QubitState::ground()
    } else {
        QubitState::DarkF1
    }
}

/// State-selective push-out. Returns whether the atom is still trapped.
/// Coherent states collapse with Born probabilities first.
pub fn push_out<R: Rng + ?Sized>(state: QubitState, cfg: &DetectionConfig, rng: &mut R) -> bool {
    let u_born: f64 = rng.random();
    let u_error: f64 = rng.random();
    let present = match state {
        QubitState::Coherent { c1, .. } => u_born >= c1.norm_sqr(),
        QubitState::DarkF1 | QubitState::ScatteredF1 => true,
        QubitState::ScatteredF2 => false,
        QubitState::Lost => return false,
    };
    if u_error < cfg.pushout_error {
        !present
    } else {
        present
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub counts: u64,
    pub classified_present: bool,
}

/// Photon counts over `window` and the threshold decision.
pub fn detect_fluorescence<R: Rng + ?Sized>(
    present: bool,
    window: f64,
    cfg: &DetectionConfig,
    rng: &mut R,
) -> Detection {
    let threshold = cfg.threshold_for(window);
    let rate = if present {
        cfg.atom_count_rate
    } else {
        cfg.background_rate
    };
    let counts: f64 = Poisson::new(rate * window)
        .expect("positive count rate")
        .sample(rng);
    let counts = counts as u64;
    Detection {
        counts,
        classified_present: counts >= threshold,
    }
}

/// `P(X >= k)` for `X ~ Poisson(lambda)`.
pub fn poisson_upper_tail(lambda: f64, k: u64) -> f64 {
    if k == 0 {
        1.0
    } else {
        gamma_lr(k as f64, lambda)
    }
}

/// `P(X < k)` for `X ~ Poisson(lambda)`.
pub fn poisson_lower_tail(lambda: f64, k: u64) -> f64 {
    if k == 0 {
        0.0
    } else {
        gamma_ur(k as f64, lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: u64,
    /// Background alone reaches the threshold.
    pub false_present: f64,
    /// An atom stays below the threshold.
    pub false_absent: f64,
    /// True when the two count distributions cannot be told apart.
    pub degenerate: bool,
}

impl ThresholdChoice {
    pub fn total_error(&self) -> f64 {
        self.false_present + self.false_absent
    }
}

/// Integer threshold minimizing `P(bg >= k) + P(atom < k)`, smallest on ties.
pub fn choose_threshold(cfg: &DetectionConfig, window: f64) -> ThresholdChoice {
    let bg = cfg.background_rate * window;
    let atom = cfg.atom_count_rate * window;
    if atom <= bg {
        log::warn!("atom and background count rates coincide; threshold is arbitrary");
        let k = bg.floor() as u64 + 1;
        return ThresholdChoice {
            threshold: k,
            false_present: poisson_upper_tail(bg, k),
            false_absent: poisson_lower_tail(atom, k),
            degenerate: true,
        };
    }
    let k_max = (atom + 20.0 * atom.sqrt() + 20.0).ceil() as u64;
    let mut best: Option<ThresholdChoice> = None;
    for k in 1..=k_max {
        let c = ThresholdChoice {
            threshold: k,
            false_present: poisson_upper_tail(bg, k),
            false_absent: poisson_lower_tail(atom, k),
            degenerate: false,
        };
        if best.is_none_or(|b| c.total_error() < b.total_error()) {
            best = Some(c);
        }
    }
    best.expect("k_max >= 1")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use crate::rng::{trial_rng, Domain};

    fn detection() -> DetectionConfig {
        SimConfig::reference().detection
    }

    /// Direct summation of the Poisson pmf with a running product.
    fn pmf_table(lambda: f64, n: usize) -> Vec<f64> {
        let mut p = vec![(-lambda).exp()];
        for k in 1..n {
            let prev = p[k - 1];
            p.push(prev * lambda / k as f64);
        }
        p
    }

    #[test]
    fn tails_match_direct_sums() {
        for &lambda in &[0.5, 20.0, 100.0, 150.0] {
            let pmf = pmf_table(lambda, 600);
            for k in [0u64, 1, 10, 49, 50, 51, 80, 130] {
                let lower: f64 = pmf[..k as usize].iter().sum();
                let upper: f64 = pmf[k as usize..].iter().sum();
                assert!(
                    (poisson_lower_tail(lambda, k) - lower).abs()
                        < 1e-12 * lower.max(1e-300) + 1e-15
                );
                assert!(
                    (poisson_upper_tail(lambda, k) - upper).abs()
                        < 1e-9 * upper.max(1e-300) + 1e-15
                );
            }
        }
    }

    #[test]
    fn threshold_at_reference_rates() {
        let cfg = detection();
        let c = choose_threshold(&cfg, 0.010);
        assert_eq!(c.threshold, 50);
        assert!(!c.degenerate);
        assert!(c.false_present < 1e-6 && c.false_absent < 1e-6);
        // exhaustive scan with the direct-sum oracle
        let bg = pmf_table(20.0, 400);
        let at = pmf_table(100.0, 400);
        let total = |k: usize| bg[k..].iter().sum::<f64>() + at[..k].iter().sum::<f64>();
        let best = (1..=200)
            .min_by(|&a, &b| total(a).partial_cmp(&total(b)).unwrap())
            .unwrap();
        assert_eq!(best, 50);
        // likelihood-equality point 80 / ln 5
        assert!((80.0 / 5f64.ln() - 49.7).abs() < 0.05);
    }

    #[test]
    fn degenerate_rates() {
        let mut cfg = detection();
        cfg.atom_count_rate = cfg.background_rate;
        let c = choose_threshold(&cfg, 0.010);
        assert!(c.degenerate);
        assert_eq!(c.threshold, 21);
    }

    #[test]
    fn error_falls_with_window() {
        let cfg = detection();
        let e: Vec<f64> = [0.005, 0.010, 0.020]
            .iter()
            .map(|&w| choose_threshold(&cfg, w).total_error())
            .collect();
        assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
    }

    #[test]
    fn mean_counts() {
        let cfg = detection().resolved(0.010);
        let mut rng = trial_rng(1, Domain::Readout, 0, 0);
        let n = 100_000;
        for (present, expected) in [(true, 100.0), (false, 20.0)] {
            let total: u64 = (0..n)
                .map(|_| detect_fluorescence(present, 0.010, &cfg, &mut rng).counts)
                .sum();
            let mean = total as f64 / n as f64;
            assert!((mean / expected - 1.0).abs() < 0.01, "{mean}");
        }
    }

    #[test]
    fn detection_reproducible() {
        let cfg = detection().resolved(0.010);
        let draw = || {
            let mut rng = trial_rng(9, Domain::Readout, 1, 2);
            (0..50)
                .map(|i| detect_fluorescence(i % 2 == 0, 0.010, &cfg, &mut rng).counts)
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn preparation() {
        let mut rng = trial_rng(1, Domain::Experiment, 0, 0);
        assert!((0..1000).all(|_| prepare_state(1.0, &mut rng) == QubitState::ground()));
        let n = 100_000;
        let dark = (0..n)
            .filter(|_| prepare_state(0.85, &mut rng) == QubitState::DarkF1)
            .count();
        assert!((dark as f64 / n as f64 - 0.15).abs() < 0.005);
    }

    #[test]
    fn push_out_mapping() {
        let mut cfg = detection();
        cfg.pushout_error = 0.0;
        let mut rng = trial_rng(1, Domain::Experiment, 0, 0);
        for _ in 0..100 {
            assert!(push_out(QubitState::ground(), &cfg, &mut rng));
            assert!(!push_out(QubitState::excited(), &cfg, &mut rng));
            assert!(push_out(QubitState::DarkF1, &cfg, &mut rng));
            assert!(push_out(QubitState::ScatteredF1, &cfg, &mut rng));
            assert!(!push_out(QubitState::ScatteredF2, &cfg, &mut rng));
            assert!(!push_out(QubitState::Lost, &cfg, &mut rng));
        }
        let n = 10_000;
        let present = (0..n)
            .filter(|_| {
                push_out(
                    QubitState::superposition(std::f64::consts::FRAC_PI_2, 0.3),
                    &cfg,
                    &mut rng,
                )
            })
            .count() as f64
            / n as f64;
        let sigma = (0.25 / n as f64).sqrt();
        assert!((present - 0.5).abs() < 3.0 * sigma, "{present}");
    }

    #[test]
    fn push_out_error_rate() {
        let mut cfg = detection();
        cfg.pushout_error = 0.02;
        let mut rng = trial_rng(2, Domain::Experiment, 0, 0);
        let n = 100_000;
        let flipped = (0..n)
            .filter(|_| !push_out(QubitState::ground(), &cfg, &mut rng))
            .count() as f64
            / n as f64;
        assert!((flipped - 0.02).abs() < 0.002, "{flipped}");
    }
}
