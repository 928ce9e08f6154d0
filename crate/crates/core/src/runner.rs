//! Trial execution, N-shot statistics, sweeps and result files.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::config::{RawConfig, SimConfig};
use crate::dynamics::{
    apply_raman_pulse, build_sequence, free_evolve, FreeEvolution, PulseSequence, QubitState,
    RamanPulse, SequenceEvent, SequenceKind,
};
use crate::error::{Error, Result};
use crate::noise::{sample_intensity_factor, sample_magnetic_phase_noise, scattering_event};
use crate::readout::{detect_fluorescence, prepare_state, push_out, DetectionConfig};
use crate::rng::{trial_rng, Domain};
use crate::trap::{
    differential_shift, intensity_fraction, sample_motional_energy, survival_and_heating,
    ThermalEnsemble,
};

/// Everything that happened in one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// State just before push-out.
    pub final_state: QubitState,
    /// Probability that push-out would keep the atom, from `final_state`.
    pub born_f1: f64,
    pub motional_energy: f64,
    pub survived: bool,
    /// Atom physically in the trap after push-out.
    pub present: bool,
    pub counts: u64,
    /// Readout verdict: atom detected, so the qubit is assigned F=1.
    pub classified_f1: bool,
    pub final_temperature: f64,
}

/// Per-trial simulator for a fixed configuration.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    detection: DetectionConfig,
    ensemble: ThermalEnsemble,
}

impl Simulator {
    pub fn new(cfg: &SimConfig) -> Self {
        let ensemble = ThermalEnsemble::from_config(cfg);
        ensemble.check_validity();
        Self {
            detection: cfg.detection.resolved(cfg.detection.readout_window),
            cfg: cfg.clone(),
            ensemble,
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn threshold(&self) -> u64 {
        self.detection.threshold.expect("resolved at construction")
    }

    /// Runs one experimental cycle. The number of random draws before
    /// detection does not depend on which noise channels are enabled.
    pub fn run_trial<R: Rng + ?Sized>(&self, seq: &PulseSequence, rng: &mut R) -> TrialOutcome {
        let cfg = &self.cfg;
        let noise = &cfg.noise;
        let channels = noise.channels;

        let mut state = prepare_state(cfg.prep.pump_efficiency, rng);
        let motion = sample_motional_energy(&self.ensemble, rng);
        let g = sample_intensity_factor(noise, rng);

        let shift = if channels.thermal_shift {
            differential_shift(motion.energy, cfg.qubit.eta)
        } else {
            0.0
        };
        let fraction = if channels.thermal_intensity {
            intensity_fraction(motion.energy, cfg.trap.depth)
        } else {
            1.0
        };
        let detuning = seq.detuning - shift;
        let depth = cfg.trap.depth;

        for event in &seq.events {
            match *event {
                SequenceEvent::Prepare { .. } | SequenceEvent::Detect { .. } => {}
                SequenceEvent::Raman {
                    duration,
                    rabi,
                    phase,
                } => {
                    state = scattering_event(state, depth, duration, noise, rng);
                    state = apply_raman_pulse(
                        state,
                        &RamanPulse {
                            duration,
                            rabi: rabi * fraction * g,
                            detuning,
                            phase,
                        },
                    );
                }
                SequenceEvent::Wait { duration } => {
                    state = scattering_event(state, depth, duration, noise, rng);
                    let magnetic = sample_magnetic_phase_noise(duration, noise, rng);
                    state = free_evolve(state, &FreeEvolution { duration, detuning })
                        .shift_phase(magnetic);
                }
                SequenceEvent::PushOut { duration } => {
                    state =
                        scattering_event(state, cfg.detection.pushout_depth, duration, noise, rng);
                }
            }
        }

        let (survived, final_temperature) =
            survival_and_heating(&self.ensemble, seq.trapped_duration(), rng);
        let survived = survived || !channels.trap_loss;
        if !survived {
            state = QubitState::Lost;
        }
        let born_f1 = state.f1_probability();
        let present = push_out(state, &self.detection, rng);
        let detection =
            detect_fluorescence(present, cfg.detection.readout_window, &self.detection, rng);

        TrialOutcome {
            final_state: state,
            born_f1,
            motional_energy: motion.energy,
            survived,
            present,
            counts: detection.counts,
            classified_f1: detection.classified_present,
            final_temperature,
        }
    }

    /// Number of trials classified F=1 out of `shots`, trial `i` drawing from
    /// stream `(seed, domain, point, i)`.
    pub fn count_f1(
        &self,
        seq: &PulseSequence,
        shots: u64,
        seed: u64,
        domain: Domain,
        point: u64,
        exec: Execution,
    ) -> u64 {
        let one = |i: u64| {
            let mut rng = trial_rng(seed, domain, point, i);
            self.run_trial(seq, &mut rng).classified_f1 as u64
        };
        match exec {
            Execution::Serial => (0..shots).map(one).sum(),
            Execution::Parallel => (0..shots).into_par_iter().map(one).sum(),
        }
    }

    /// Mean Born probability of F=1 over `shots` trials (no projection noise
    /// from the final measurement).
    pub fn expected_f1(
        &self,
        seq: &PulseSequence,
        shots: u64,
        seed: u64,
        point: u64,
        exec: Execution,
    ) -> f64 {
        let one = |i: u64| {
            let mut rng = trial_rng(seed, Domain::Expectation, point, i);
            self.run_trial(seq, &mut rng).born_f1
        };
        let total: f64 = match exec {
            Execution::Serial => (0..shots).map(one).sum(),
            // fixed-order reduction keeps the floating-point sum identical
            Execution::Parallel => (0..shots)
                .into_par_iter()
                .map(one)
                .collect::<Vec<_>>()
                .iter()
                .sum(),
        };
        total / shots as f64
    }
}

/// One trial with a freshly built [`Simulator`].
pub fn run_trial<R: Rng + ?Sized>(
    seq: &PulseSequence,
    cfg: &SimConfig,
    rng: &mut R,
) -> TrialOutcome {
    Simulator::new(cfg).run_trial(seq, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    PulseLength,
    GapTime,
    /// Second echo gap, first gap held at the template value.
    EchoT2,
    /// Total free time of a symmetric echo, `2T`.
    EchoTotalTime,
    Detuning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub template: SequenceKind,
    pub parameter: SweepParameter,
    /// Values in SI units (s or rad/s).
    pub grid: Vec<f64>,
    pub shots: u64,
    pub seed: u64,
    /// Phase of the analysis pulse; the template's own phase when `None`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_phase: Option<f64>,
}

impl SweepSpec {
    pub fn new(
        template: SequenceKind,
        parameter: SweepParameter,
        grid: Vec<f64>,
        shots: u64,
        seed: u64,
    ) -> Self {
        Self {
            template,
            parameter,
            grid,
            shots,
            seed,
            final_phase: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::validation("grid", "must not be empty", "[]"));
        }
        for (i, w) in self.grid.windows(2).enumerate() {
            if w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::validation(
                    format!("grid[{}]", i + 1),
                    "grid must be strictly increasing",
                    w[1],
                ));
            }
        }
        if let Some(bad) = self.grid.iter().find(|x| !x.is_finite()) {
            return Err(Error::validation("grid", "values must be finite", bad));
        }
        if self.shots == 0 {
            return Err(Error::validation("shots", "must be >= 1", 0));
        }
        let compatible = matches!(
            (self.parameter, self.template),
            (SweepParameter::PulseLength, SequenceKind::Rabi { .. })
                | (SweepParameter::GapTime, SequenceKind::Ramsey { .. })
                | (SweepParameter::EchoT2, SequenceKind::Echo { .. })
                | (SweepParameter::EchoTotalTime, SequenceKind::Echo { .. })
                | (SweepParameter::Detuning, _)
        );
        if !compatible {
            return Err(Error::Sequence(format!(
                "cannot sweep {:?} on a {:?} sequence",
                self.parameter, self.template
            )));
        }
        Ok(())
    }

    /// The sequence at sweep value `x`.
    pub fn sequence_at(&self, x: f64, cfg: &SimConfig) -> Result<PulseSequence> {
        let kind = match (self.parameter, self.template) {
            (SweepParameter::PulseLength, SequenceKind::Rabi { .. }) => {
                SequenceKind::Rabi { pulse: x }
            }
            (SweepParameter::GapTime, SequenceKind::Ramsey { .. }) => {
                SequenceKind::Ramsey { gap: x }
            }
            (SweepParameter::EchoT2, SequenceKind::Echo { first_gap, .. }) => SequenceKind::Echo {
                first_gap,
                second_gap: x,
            },
            (SweepParameter::EchoTotalTime, SequenceKind::Echo { .. }) => SequenceKind::Echo {
                first_gap: x / 2.0,
                second_gap: x / 2.0,
            },
            (SweepParameter::Detuning, kind) => kind,
            _ => {
                return Err(Error::Sequence(format!(
                    "cannot sweep {:?} on a {:?} sequence",
                    self.parameter, self.template
                )))
            }
        };
        let mut seq = build_sequence(kind, cfg)?;
        if self.parameter == SweepParameter::Detuning {
            seq = seq.with_detuning(x);
        }
        if let Some(phase) = self.final_phase {
            seq = seq.with_final_phase(phase);
        }
        Ok(seq)
    }
}

/// Binomial standard error `sqrt(p (1 - p) / n)`.
pub fn binomial_sigma(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResultPoint {
    pub x: f64,
    pub p_f1: f64,
    pub sigma: f64,
    pub n: u64,
    /// Trials in which the atom was detected after push-out.
    pub survivors: u64,
}

impl ResultPoint {
    pub fn from_counts(x: f64, survivors: u64, n: u64) -> Self {
        let p = survivors as f64 / n as f64;
        Self {
            x,
            p_f1: p,
            sigma: binomial_sigma(p, n),
            n,
            survivors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    pub timestamp_unix: u64,
    pub seed: u64,
    pub config_hash: String,
    pub sweep: SweepSpec,
    pub survivors: Vec<u64>,
    pub config: RawConfig,
    #[serde(default)]
    pub flags: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub points: Vec<ResultPoint>,
    pub metadata: Metadata,
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Runs every grid point for `spec.shots` trials.
pub fn run_experiment(
    spec: &SweepSpec,
    cfg: &SimConfig,
    exec: Execution,
) -> Result<ExperimentResult> {
    spec.validate()?;
    let sim = Simulator::new(cfg);
    let sequences = spec
        .grid
        .iter()
        .map(|&x| spec.sequence_at(x, cfg))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<ResultPoint> = spec
        .grid
        .iter()
        .zip(&sequences)
        .enumerate()
        .map(|(i, (&x, seq))| {
            let k = sim.count_f1(
                seq,
                spec.shots,
                spec.seed,
                Domain::Experiment,
                i as u64,
                exec,
            );
            ResultPoint::from_counts(x, k, spec.shots)
        })
        .collect();
    Ok(ExperimentResult {
        metadata: Metadata {
            version: VERSION.to_string(),
            timestamp_unix: unix_now(),
            seed: spec.seed,
            config_hash: cfg.hash(),
            sweep: spec.clone(),
            survivors: points.iter().map(|p| p.survivors).collect(),
            config: cfg.to_raw(),
            flags: serde_json::Value::Null,
        },
        points,
    })
}

/// Path of the metadata sidecar written next to a result CSV.
pub fn metadata_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    x: f64,
    p_f1: f64,
    sigma: f64,
    n: u64,
}

/// CSV payload (`x,p_f1,sigma,n`) as a string.
pub fn results_csv(result: &ExperimentResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in &result.points {
        w.serialize(CsvRow {
            x: p.x,
            p_f1: p.p_f1,
            sigma: p.sigma,
            n: p.n,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Fit(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes the CSV and its `.meta.json` sidecar.
pub fn write_results(result: &ExperimentResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, results_csv(result)?).map_err(|e| Error::io(path, e))?;
    let meta = metadata_path(path);
    let mut json = serde_json::to_string_pretty(&result.metadata)?;
    json.push('\n');
    std::fs::write(&meta, json).map_err(|e| Error::io(&meta, e))?;
    Ok(())
}

/// Reads a result written by [`write_results`].
pub fn read_results(path: impl AsRef<Path>) -> Result<ExperimentResult> {
    let path = path.as_ref();
    let rows = read_rows(path)?;
    let meta_path = metadata_path(path);
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let metadata: Metadata = serde_json::from_str(&text)?;
    if metadata.survivors.len() != rows.len() {
        return Err(Error::Parse {
            path: meta_path,
            message: format!(
                "{} survivor counts for {} rows",
                metadata.survivors.len(),
                rows.len()
            ),
        });
    }
    let points = rows
        .into_iter()
        .zip(&metadata.survivors)
        .map(|(r, &survivors)| ResultPoint {
            x: r.x,
            p_f1: r.p_f1,
            sigma: r.sigma,
            n: r.n,
            survivors,
        })
        .collect();
    Ok(ExperimentResult { points, metadata })
}

fn read_rows(path: &Path) -> Result<Vec<CsvRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    for col in ["x", "p_f1", "sigma", "n"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("missing column `{col}`"),
            });
        }
    }
    Ok(reader
        .deserialize()
        .collect::<std::result::Result<Vec<CsvRow>, _>>()?)
}

/// Fringe contrast at one sweep value, from repeated runs with different
/// analysis-pulse phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastPoint {
    pub x: f64,
    pub contrast: f64,
    pub sigma: f64,
    /// Shots per phase setting.
    pub n: u64,
}

/// Echo contrast `p(phi = pi) - p(phi = 0)`. Static phase errors are
/// refocused, so the two-phase difference captures the full contrast.
pub fn echo_contrast(
    spec: &SweepSpec,
    cfg: &SimConfig,
    exec: Execution,
) -> Result<Vec<ContrastPoint>> {
    spec.validate()?;
    let sim = Simulator::new(cfg);
    spec.grid
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let base = spec.sequence_at(x, cfg)?;
            let p = |phase: f64, slot: u64| {
                let seq = base.clone().with_final_phase(phase);
                let k = sim.count_f1(
                    &seq,
                    spec.shots,
                    spec.seed,
                    Domain::Contrast,
                    4 * i as u64 + slot,
                    exec,
                );
                k as f64 / spec.shots as f64
            };
            let p0 = p(0.0, 0);
            let p1 = p(PI, 1);
            let n = spec.shots;
            Ok(ContrastPoint {
                x,
                contrast: p1 - p0,
                sigma: (binomial_sigma(p0, n).powi(2) + binomial_sigma(p1, n).powi(2)).sqrt(),
                n,
            })
        })
        .collect()
}

/// Ramsey contrast `sqrt(X^2 + Y^2)` from four analysis phases, independent
/// of where the fringe happens to sit.
pub fn ramsey_contrast(
    spec: &SweepSpec,
    cfg: &SimConfig,
    exec: Execution,
) -> Result<Vec<ContrastPoint>> {
    spec.validate()?;
    let sim = Simulator::new(cfg);
    spec.grid
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let base = spec.sequence_at(x, cfg)?;
            let p: Vec<f64> = (0..4)
                .map(|k| {
                    let seq = base.clone().with_final_phase(k as f64 * FRAC_PI_2);
                    let c = sim.count_f1(
                        &seq,
                        spec.shots,
                        spec.seed,
                        Domain::Contrast,
                        4 * i as u64 + k,
                        exec,
                    );
                    c as f64 / spec.shots as f64
                })
                .collect();
            let n = spec.shots;
            let var: Vec<f64> = p.iter().map(|&q| binomial_sigma(q, n).powi(2)).collect();
            let qx = p[2] - p[0];
            let qy = p[3] - p[1];
            let c = qx.hypot(qy);
            let sigma = if c > 0.0 {
                ((qx * qx * (var[0] + var[2]) + qy * qy * (var[1] + var[3])) / (c * c)).sqrt()
            } else {
                (var.iter().sum::<f64>() / 2.0).sqrt()
            };
            Ok(ContrastPoint {
                x,
                contrast: c,
                sigma,
                n,
            })
        })
        .collect()
}

/// CSV payload `x,contrast,sigma,n`.
pub fn contrast_csv(points: &[ContrastPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Fit(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Pulse length that leaves a noiseless atom in F=1 with probability `p`.
pub fn pulse_for_probability(p: f64, rabi: f64) -> f64 {
    2.0 * p.clamp(0.0, 1.0).sqrt().acos() / rabi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub p_target: f64,
    pub shots: u64,
    pub repeats: u64,
    pub mean: f64,
    pub empirical_std: f64,
    pub predicted_std: f64,
    /// 99% band for the empirical standard deviation.
    pub band: (f64, f64),
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
}

impl AuditReport {
    pub fn all_consistent(&self) -> bool {
        self.entries.iter().all(|e| e.consistent)
    }
}

/// Two-sided 99% band for the sample standard deviation of `repeats`
/// binomial proportions. The sample variance is treated as a scaled
/// chi-square with effective degrees of freedom corrected for the excess
/// kurtosis of the binomial.
pub fn projection_noise_band(p: f64, shots: u64, repeats: u64) -> (f64, f64) {
    let sigma = binomial_sigma(p, shots);
    let pq = p * (1.0 - p);
    if pq == 0.0 || repeats < 2 {
        return (0.0, if pq == 0.0 { 0.0 } else { f64::INFINITY });
    }
    let r = repeats as f64;
    let excess = (1.0 - 6.0 * pq) / (shots as f64 * pq);
    let dof = 2.0 / (2.0 / (r - 1.0) + excess / r);
    let chi = ChiSquared::new(dof).expect("positive degrees of freedom");
    (
        sigma * (chi.inverse_cdf(0.005) / dof).sqrt(),
        sigma * (chi.inverse_cdf(0.995) / dof).sqrt(),
    )
}

/// For each target probability, runs `repeats` independent N-shot
/// experiments of a single noiseless pulse and compares the spread of the
/// estimates with the binomial prediction.
pub fn projection_noise_audit(
    p_targets: &[f64],
    shots: u64,
    repeats: u64,
    seed: u64,
    cfg: &SimConfig,
    exec: Execution,
) -> Result<AuditReport> {
    if shots == 0 {
        return Err(Error::validation("shots", "must be >= 1", 0));
    }
    if repeats < 2 {
        return Err(Error::validation("repeats", "must be >= 2", repeats));
    }
    if let Some(&bad) = p_targets.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::validation("p_targets", "must lie in [0, 1]", bad));
    }
    let noiseless = cfg.noiseless();
    let sim = Simulator::new(&noiseless);
    let entries = p_targets
        .iter()
        .enumerate()
        .map(|(ti, &p)| {
            let pulse = pulse_for_probability(p, noiseless.qubit.rabi);
            let seq = build_sequence(SequenceKind::Rabi { pulse }, &noiseless)?;
            let estimate = |rep: u64| {
                let point = ((ti as u64) << 32) | rep;
                let k = sim.count_f1(&seq, shots, seed, Domain::Audit, point, Execution::Serial);
                k as f64 / shots as f64
            };
            let estimates: Vec<f64> = match exec {
                Execution::Serial => (0..repeats).map(estimate).collect(),
                Execution::Parallel => (0..repeats).into_par_iter().map(estimate).collect(),
            };
            let r = repeats as f64;
            let mean = estimates.iter().sum::<f64>() / r;
            let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (r - 1.0);
            let empirical_std = var.sqrt();
            let band = projection_noise_band(p, shots, repeats);
            Ok(AuditEntry {
                p_target: p,
                shots,
                repeats,
                mean,
                empirical_std,
                predicted_std: binomial_sigma(p, shots),
                band,
                consistent: empirical_std >= band.0 && empirical_std <= band.1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AuditReport { entries })
}

/// End-to-end readout figures of merit at the configured detection settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutAudit {
    pub threshold: u64,
    /// Probability that a `|0>` atom is assigned F=2.
    pub error_f1: f64,
    /// Probability that a `|1>` atom is assigned F=1.
    pub error_f2: f64,
    /// Threshold classification error alone, from the Poisson tails.
    pub classification_error: f64,
    pub shots: u64,
}

impl ReadoutAudit {
    pub fn misassignment(&self) -> f64 {
        0.5 * (self.error_f1 + self.error_f2)
    }
}

/// Prepares perfect `|0>` and `|1>` atoms (no pumping errors, no pulses) and
/// measures how often push-out plus fluorescence assigns the wrong level.
pub fn readout_audit(
    cfg: &SimConfig,
    shots: u64,
    seed: u64,
    exec: Execution,
) -> Result<ReadoutAudit> {
    if shots == 0 {
        return Err(Error::validation("shots", "must be >= 1", 0));
    }
    let mut c = cfg.clone();
    c.prep.pump_efficiency = 1.0;
    let sim = Simulator::new(&c);
    let zero = build_sequence(SequenceKind::Rabi { pulse: 0.0 }, &c)?;
    let pi = build_sequence(
        SequenceKind::Rabi {
            pulse: crate::dynamics::pi_duration(c.qubit.rabi),
        },
        &c,
    )?;
    // an ideal pi pulse: drive noise is not part of the readout chain
    let mut ideal = c.clone();
    ideal.noise.channels.thermal_intensity = false;
    ideal.noise.channels.intensity_noise = false;
    ideal.noise.channels.thermal_shift = false;
    ideal.prep.pump_efficiency = 1.0;
    let sim_pi = Simulator::new(&ideal);
    let k0 = sim.count_f1(&zero, shots, seed, Domain::Readout, 0, exec);
    let k1 = sim_pi.count_f1(&pi, shots, seed, Domain::Readout, 1, exec);
    let choice = crate::readout::choose_threshold(&c.detection, c.detection.readout_window);
    let threshold = sim.threshold();
    let classification_error = if c.detection.threshold.is_some() {
        let w = c.detection.readout_window;
        crate::readout::poisson_upper_tail(c.detection.background_rate * w, threshold)
            + crate::readout::poisson_lower_tail(c.detection.atom_count_rate * w, threshold)
    } else {
        choice.total_error()
    };
    Ok(ReadoutAudit {
        threshold,
        error_f1: 1.0 - k0 as f64 / shots as f64,
        error_f2: k1 as f64 / shots as f64,
        classification_error,
        shots,
    })
}
