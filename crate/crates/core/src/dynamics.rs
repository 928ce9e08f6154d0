//! Two-level qubit evolution under piecewise-constant Raman drive.
//!
//! In the frame rotating with the Raman difference frequency the Hamiltonian
//! of one segment is
//!
//! ```text
//! H / hbar = 1/2 * (Omega cos(phi) sx + Omega sin(phi) sy + delta sz)
//! ```
//!
//! on the basis `(|0>, |1>)`, so each segment is an exact SU(2) rotation by
//! the generalized Rabi angle `sqrt(Omega^2 + delta^2) t` and free evolution
//! builds up the relative phase `delta t`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};

/// Internal state of the atom at some point in a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum QubitState {
    /// Coherent superposition `c0 |0> + c1 |1>`.
    Coherent { c0: Complex64, c1: Complex64 },
    /// Left in `F=1, m_F=+-1` by imperfect pumping; not addressed by the drive.
    DarkF1,
    /// Incoherently scattered into the F=1 manifold.
    ScatteredF1,
    /// Incoherently scattered into the F=2 manifold.
    ScatteredF2,
    /// Left the trap.
    Lost,
}

impl QubitState {
    pub fn ground() -> Self {
        QubitState::Coherent {
            c0: Complex64::new(1.0, 0.0),
            c1: Complex64::new(0.0, 0.0),
        }
    }

    pub fn excited() -> Self {
        QubitState::Coherent {
            c0: Complex64::new(0.0, 0.0),
            c1: Complex64::new(1.0, 0.0),
        }
    }

    /// `cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>`
    pub fn superposition(theta: f64, phi: f64) -> Self {
        QubitState::Coherent {
            c0: Complex64::new((theta / 2.0).cos(), 0.0),
            c1: Complex64::from_polar((theta / 2.0).sin(), phi),
        }
    }

    pub fn is_coherent(&self) -> bool {
        matches!(self, QubitState::Coherent { .. })
    }

    pub fn amplitudes(&self) -> Option<(Complex64, Complex64)> {
        match *self {
            QubitState::Coherent { c0, c1 } => Some((c0, c1)),
            _ => None,
        }
    }

    /// Population of `|1>`; `None` for non-coherent states.
    pub fn excited_population(&self) -> Option<f64> {
        self.amplitudes().map(|(_, c1)| c1.norm_sqr())
    }

    pub fn norm_sqr(&self) -> Option<f64> {
        self.amplitudes()
            .map(|(c0, c1)| c0.norm_sqr() + c1.norm_sqr())
    }

    /// Probability that push-out would find the atom in F=1, ignoring
    /// readout errors.
    pub fn f1_probability(&self) -> f64 {
        match *self {
            QubitState::Coherent { c0, .. } => c0.norm_sqr(),
            QubitState::DarkF1 | QubitState::ScatteredF1 => 1.0,
            QubitState::ScatteredF2 | QubitState::Lost => 0.0,
        }
    }

    /// Distance between two coherent states, minimised over a global phase.
    /// Infinite when either state is not coherent.
    pub fn distance_up_to_phase(&self, other: &QubitState) -> f64 {
        match (self.amplitudes(), other.amplitudes()) {
            (Some((a0, a1)), Some((b0, b1))) => {
                let overlap = a0.conj() * b0 + a1.conj() * b1;
                let na = a0.norm_sqr() + a1.norm_sqr();
                let nb = b0.norm_sqr() + b1.norm_sqr();
                (na + nb - 2.0 * overlap.norm()).max(0.0).sqrt()
            }
            _ => f64::INFINITY,
        }
    }

    /// Adds `phase` to the relative phase of `|1>` against `|0>`.
    pub fn shift_phase(self, phase: f64) -> Self {
        match self {
            QubitState::Coherent { c0, c1 } => QubitState::Coherent {
                c0: c0 * Complex64::from_polar(1.0, -phase / 2.0),
                c1: c1 * Complex64::from_polar(1.0, phase / 2.0),
            },
            other => other,
        }
    }

    pub fn apply(self, segment: &PulseSegment) -> Self {
        match segment {
            PulseSegment::Raman(p) => apply_raman_pulse(self, p),
            PulseSegment::Free(f) => free_evolve(self, f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RamanPulse {
    pub duration: f64,
    /// Effective Rabi frequency (rad/s), >= 0.
    pub rabi: f64,
    /// Effective detuning (rad/s).
    pub detuning: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeEvolution {
    pub duration: f64,
    pub detuning: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PulseSegment {
    Raman(RamanPulse),
    Free(FreeEvolution),
}

/// Exact rotation for constant drive. Non-coherent states are untouched: the
/// dark Zeeman sublevels and scattered atoms are off resonance.
pub fn apply_raman_pulse(state: QubitState, pulse: &RamanPulse) -> QubitState {
    let QubitState::Coherent { c0, c1 } = state else {
        return state;
    };
    let omega = pulse.rabi;
    let delta = pulse.detuning;
    let generalized = omega.hypot(delta);
    if generalized == 0.0 || pulse.duration == 0.0 {
        return state;
    }
    let half = 0.5 * generalized * pulse.duration;
    let a = half.cos();
    let s = half.sin() / generalized;
    let i = Complex64::i();
    let u00 = Complex64::new(a, -s * delta);
    let u11 = Complex64::new(a, s * delta);
    let u01 = -i * s * omega * Complex64::from_polar(1.0, -pulse.phase);
    let u10 = -i * s * omega * Complex64::from_polar(1.0, pulse.phase);
    QubitState::Coherent {
        c0: u00 * c0 + u01 * c1,
        c1: u10 * c0 + u11 * c1,
    }
}

/// Accumulates the relative phase `detuning * duration`.
pub fn free_evolve(state: QubitState, free: &FreeEvolution) -> QubitState {
    state.shift_phase(free.detuning * free.duration)
}

/// `|1>` population after a pulse applied to `|0>`:
/// `(Omega/Omega')^2 sin^2(Omega' t / 2)`.
pub fn transfer_probability(rabi: f64, detuning: f64, duration: f64) -> f64 {
    let generalized = rabi.hypot(detuning);
    if generalized == 0.0 {
        return 0.0;
    }
    let ratio = rabi / generalized;
    let s = (0.5 * generalized * duration).sin();
    ratio * ratio * s * s
}

/// One step of an experimental cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SequenceEvent {
    Prepare {
        duration: f64,
    },
    Raman {
        duration: f64,
        rabi: f64,
        phase: f64,
    },
    Wait {
        duration: f64,
    },
    PushOut {
        duration: f64,
    },
    Detect {
        window: f64,
    },
}

/// Ordered timeline of one experimental cycle. `detuning` is the Raman
/// detuning from the trap-bottom transition, common to all segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub events: Vec<SequenceEvent>,
    pub detuning: f64,
}

impl PulseSequence {
    /// Wall-clock time from preparation to the end of push-out.
    pub fn trapped_duration(&self) -> f64 {
        self.events
            .iter()
            .map(|e| match *e {
                SequenceEvent::Prepare { duration }
                | SequenceEvent::Raman { duration, .. }
                | SequenceEvent::Wait { duration }
                | SequenceEvent::PushOut { duration } => duration,
                SequenceEvent::Detect { .. } => 0.0,
            })
            .sum()
    }

    pub fn raman_pulses(&self) -> impl Iterator<Item = &SequenceEvent> {
        self.events
            .iter()
            .filter(|e| matches!(e, SequenceEvent::Raman { .. }))
    }

    /// Sets the phase of the last Raman pulse (the analysis pulse).
    pub fn with_final_phase(mut self, phase: f64) -> Self {
        if let Some(SequenceEvent::Raman { phase: p, .. }) = self
            .events
            .iter_mut()
            .rev()
            .find(|e| matches!(e, SequenceEvent::Raman { .. }))
        {
            *p = phase;
        }
        self
    }

    /// Adds `offset` to the phase of every Raman pulse.
    pub fn with_phase_offset(mut self, offset: f64) -> Self {
        for e in &mut self.events {
            if let SequenceEvent::Raman { phase, .. } = e {
                *phase += offset;
            }
        }
        self
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    /// The coherent part of the sequence as ideal segments: nominal Rabi
    /// frequency and an extra detuning `offset` on every segment.
    pub fn segments(&self, offset: f64) -> Vec<PulseSegment> {
        let detuning = self.detuning + offset;
        self.events
            .iter()
            .filter_map(|e| match *e {
                SequenceEvent::Raman {
                    duration,
                    rabi,
                    phase,
                } => Some(PulseSegment::Raman(RamanPulse {
                    duration,
                    rabi,
                    detuning,
                    phase,
                })),
                SequenceEvent::Wait { duration } => {
                    Some(PulseSegment::Free(FreeEvolution { duration, detuning }))
                }
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SequenceKind {
    Rabi {
        pulse: f64,
    },
    Ramsey {
        gap: f64,
    },
    /// Spin echo: `pi/2 - first_gap - pi - second_gap - pi/2`.
    Echo {
        first_gap: f64,
        second_gap: f64,
    },
}

impl SequenceKind {
    fn durations(&self) -> Vec<(&'static str, f64)> {
        match *self {
            SequenceKind::Rabi { pulse } => vec![("pulse", pulse)],
            SequenceKind::Ramsey { gap } => vec![("gap", gap)],
            SequenceKind::Echo {
                first_gap,
                second_gap,
            } => vec![("first_gap", first_gap), ("second_gap", second_gap)],
        }
    }
}

/// Phase of the refocusing pulse relative to the pi/2 pulses.
pub const ECHO_PI_PHASE: f64 = FRAC_PI_2;

/// Builds the event timeline for `kind`. Pulses use the configured
/// trap-bottom Rabi frequency; pi/2 pulses last `(pi/2) / Omega0`.
pub fn build_sequence(kind: SequenceKind, cfg: &SimConfig) -> Result<PulseSequence> {
    for (name, d) in kind.durations() {
        if !d.is_finite() || d < 0.0 {
            return Err(Error::Sequence(format!(
                "{name} must be a finite non-negative duration, got {d}"
            )));
        }
    }
    let rabi = cfg.qubit.rabi;
    let half_pi = half_pi_duration(rabi);
    let raman = |duration: f64, phase: f64| SequenceEvent::Raman {
        duration,
        rabi,
        phase,
    };
    let mut events = vec![SequenceEvent::Prepare {
        duration: cfg.prep.pump_duration,
    }];
    match kind {
        SequenceKind::Rabi { pulse } => events.push(raman(pulse, 0.0)),
        SequenceKind::Ramsey { gap } => {
            events.push(raman(half_pi, 0.0));
            events.push(SequenceEvent::Wait { duration: gap });
            events.push(raman(half_pi, 0.0));
        }
        SequenceKind::Echo {
            first_gap,
            second_gap,
        } => {
            events.push(raman(half_pi, 0.0));
            events.push(SequenceEvent::Wait {
                duration: first_gap,
            });
            events.push(raman(2.0 * half_pi, ECHO_PI_PHASE));
            events.push(SequenceEvent::Wait {
                duration: second_gap,
            });
            events.push(raman(half_pi, 0.0));
        }
    }
    events.push(SequenceEvent::PushOut {
        duration: cfg.detection.pushout_duration,
    });
    events.push(SequenceEvent::Detect {
        window: cfg.detection.readout_window,
    });
    Ok(PulseSequence {
        events,
        detuning: cfg.qubit.detuning,
    })
}

/// Thermally averaged Ramsey signal
///
/// ```text
/// P(t) = B + C/2 * (1 + s^2)^(-3/2) * cos(dbar t + 3 (s - atan s) + phi0),  s = t / tau_c
/// ```
///
/// `dbar = delta - 3/tau_c` is the fringe frequency at short times. The
/// `3 (s - atan s)` term is the residual phase of the Gamma(3) characteristic
/// function once its linear part is absorbed into `dbar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RamseyModel {
    pub baseline: f64,
    pub contrast: f64,
    pub fringe_frequency: f64,
    pub tau_c: f64,
    pub phase: f64,
}

impl RamseyModel {
    /// Ideal-pulse model for `|1>` population at the configured detuning.
    pub fn from_config(cfg: &SimConfig) -> Self {
        let tau_c = cfg.tau_c();
        Self::ideal(cfg.qubit.detuning, tau_c)
    }

    pub fn ideal(detuning: f64, tau_c: f64) -> Self {
        let contrast = 1.0;
        Self {
            baseline: 1.0 - contrast / 2.0,
            contrast,
            fringe_frequency: detuning - 3.0 / tau_c,
            tau_c,
            phase: 0.0,
        }
    }

    /// Contrast decay factor `(1 + (t/tau_c)^2)^(-3/2)`.
    pub fn envelope(&self, t: f64) -> f64 {
        ramsey_envelope(t, self.tau_c)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let s = t / self.tau_c;
        let correction = 3.0 * (s - s.atan());
        self.baseline
            + 0.5
                * self.contrast
                * self.envelope(t)
                * (self.fringe_frequency * t + correction + self.phase).cos()
    }
}

pub fn ramsey_envelope(t: f64, tau_c: f64) -> f64 {
    let s = t / tau_c;
    (1.0 + s * s).powf(-1.5)
}

/// `|1>` population of the thermal Ramsey model with the configured detuning
/// and temperature.
pub fn analytic_ramsey(t: f64, cfg: &SimConfig) -> f64 {
    RamseyModel::from_config(cfg).eval(t)
}

pub(crate) fn half_pi_duration(rabi: f64) -> f64 {
    FRAC_PI_2 / rabi
}

pub(crate) fn pi_duration(rabi: f64) -> f64 {
    PI / rabi
}
