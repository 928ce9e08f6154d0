//! Experiment configuration.
//!
//! Files are TOML documents with one table per section (`[trap]`, `[qubit]`,
//! `[noise]`, `[detection]`, `[prep]`, `[run]`). Keys carry laboratory units
//! in their names (`depth_mk`, `rabi_mhz`, ...); every key is optional and
//! falls back to the reference parameter set shipped in `configs/reference.toml`.
//! Unknown keys are rejected.
//!
//! Internally everything is SI: energies in J, times in s, angular
//! frequencies in rad/s, fields in T, temperatures in K.

use std::f64::consts::{E, TAU};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::noise::{NoiseChannels, NoiseConfig};
use crate::readout::DetectionConfig;
use crate::{HBAR, K_B};

/// Environment variable naming a directory that holds `default.toml`.
pub const CONFIG_DIR_ENV: &str = "TWEEZER_CONFIG_DIR";

/// Echo-decay coefficients solved from the two reference conditions
/// (1.2 mK, 0.36 mT, 13 ms) and (0.4 mK, 0.18 mT, 34 ms).
pub const DEFAULT_ECHO_A_PER_MK_MS: f64 = 0.045_248_868_778_280_556;
pub const DEFAULT_ECHO_B_PER_MT_MS: f64 = 0.062_845_651_080_945_17;

// lab unit -> SI factors
const MILLI: f64 = 1e-3;
const MICRO: f64 = 1e-6;
const NANO: f64 = 1e-9;

fn mk_to_joule(mk: f64) -> f64 {
    K_B * mk * MILLI
}

fn joule_to_mk(j: f64) -> f64 {
    j / K_B / MILLI
}

fn khz_to_angular(khz: f64) -> f64 {
    TAU * khz * 1e3
}

fn angular_to_khz(w: f64) -> f64 {
    w / TAU / 1e3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawTrap {
    pub power_mw: f64,
    pub waist_um: f64,
    pub wavelength_nm: f64,
    pub depth_mk: f64,
    pub freq_radial_khz: f64,
    pub freq_axial_khz: f64,
    pub lifetime_s: f64,
    pub heating_uk_per_ms: f64,
    pub temperature_uk: f64,
}

impl Default for RawTrap {
    fn default() -> Self {
        Self {
            power_mw: 0.95,
            waist_um: 0.9,
            wavelength_nm: 810.0,
            depth_mk: 1.2,
            freq_radial_khz: 125.0,
            freq_axial_khz: 23.0,
            lifetime_s: 3.0,
            heating_uk_per_ms: 0.021,
            temperature_uk: 90.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawQubit {
    pub hyperfine_ghz: f64,
    /// Differential light-shift coefficient (roughly hyperfine splitting over
    /// trap detuning).
    pub eta: f64,
    /// Trap-bottom Raman Rabi frequency, Omega/2pi.
    pub rabi_mhz: f64,
    /// Raman detuning from the trap-bottom transition, delta/2pi (signed).
    pub detuning_khz: f64,
}

impl Default for RawQubit {
    fn default() -> Self {
        Self {
            hyperfine_ghz: 6.8,
            eta: 7e-4,
            rabi_mhz: 6.7,
            detuning_khz: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawNoise {
    /// Total RMS technical intensity noise of the two Raman beams.
    pub intensity_rms: f64,
    pub b_field_mt: f64,
    pub echo_a_per_mk_ms: f64,
    pub echo_b_per_mt_ms: f64,
    pub scatter_branch_f1: f64,
    pub thermal_shift: bool,
    pub thermal_intensity: bool,
    pub intensity_noise: bool,
    pub scattering: bool,
    pub magnetic: bool,
    pub trap_loss: bool,
}

impl Default for RawNoise {
    fn default() -> Self {
        Self {
            intensity_rms: 0.025,
            b_field_mt: 0.36,
            echo_a_per_mk_ms: DEFAULT_ECHO_A_PER_MK_MS,
            echo_b_per_mt_ms: DEFAULT_ECHO_B_PER_MT_MS,
            scatter_branch_f1: 0.5,
            thermal_shift: true,
            thermal_intensity: true,
            intensity_noise: true,
            scattering: true,
            magnetic: true,
            trap_loss: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawDetection {
    /// Count rate with an atom present (background included).
    pub atom_rate_per_s: f64,
    pub bg_rate_per_s: f64,
    pub detect_window_ms: f64,
    pub presence_window_ms: f64,
    /// Fixed discrimination threshold; chosen automatically when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_counts: Option<u64>,
    pub pushout_us: f64,
    pub pushout_depth_mk: f64,
    pub pushout_error: f64,
}

impl Default for RawDetection {
    fn default() -> Self {
        Self {
            atom_rate_per_s: 10_000.0,
            bg_rate_per_s: 2_000.0,
            detect_window_ms: 10.0,
            presence_window_ms: 15.0,
            threshold_counts: None,
            pushout_us: 100.0,
            pushout_depth_mk: 0.4,
            pushout_error: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawPrep {
    pub pump_efficiency: f64,
    pub pump_us: f64,
}

impl Default for RawPrep {
    fn default() -> Self {
        Self {
            pump_efficiency: 0.85,
            pump_us: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawRun {
    pub shots: u64,
    pub seed: u64,
}

impl Default for RawRun {
    fn default() -> Self {
        Self {
            shots: 100,
            seed: 1,
        }
    }
}

/// A configuration file as written, in laboratory units.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    pub trap: RawTrap,
    pub qubit: RawQubit,
    pub noise: RawNoise,
    pub detection: RawDetection,
    pub prep: RawPrep,
    pub run: RawRun,
}

struct Checker(Vec<Error>);

impl Checker {
    fn finite(&mut self, key: &str, v: f64) -> bool {
        if v.is_finite() {
            true
        } else {
            self.0.push(Error::validation(key, "must be finite", v));
            false
        }
    }

    fn positive(&mut self, key: &str, v: f64) {
        if self.finite(key, v) && v <= 0.0 {
            self.0.push(Error::validation(key, "must be > 0", v));
        }
    }

    fn non_negative(&mut self, key: &str, v: f64) {
        if self.finite(key, v) && v < 0.0 {
            self.0.push(Error::validation(key, "must be >= 0", v));
        }
    }

    fn within(&mut self, key: &str, v: f64, lo: f64, hi: f64) {
        if self.finite(key, v) && !(lo..=hi).contains(&v) {
            self.0.push(Error::validation(
                key,
                format!("must lie in [{lo}, {hi}]"),
                v,
            ));
        }
    }
}

impl RawConfig {
    /// Checks every documented constraint and returns the first violation.
    pub fn validate(&self) -> Result<()> {
        let mut c = Checker(Vec::new());
        let t = &self.trap;
        c.positive("trap.power_mw", t.power_mw);
        c.positive("trap.waist_um", t.waist_um);
        c.positive("trap.wavelength_nm", t.wavelength_nm);
        c.positive("trap.depth_mk", t.depth_mk);
        c.positive("trap.freq_radial_khz", t.freq_radial_khz);
        c.positive("trap.freq_axial_khz", t.freq_axial_khz);
        c.positive("trap.lifetime_s", t.lifetime_s);
        c.non_negative("trap.heating_uk_per_ms", t.heating_uk_per_ms);
        c.positive("trap.temperature_uk", t.temperature_uk);

        let q = &self.qubit;
        c.positive("qubit.hyperfine_ghz", q.hyperfine_ghz);
        c.positive("qubit.eta", q.eta);
        c.positive("qubit.rabi_mhz", q.rabi_mhz);
        c.finite("qubit.detuning_khz", q.detuning_khz);

        let n = &self.noise;
        c.within("noise.intensity_rms", n.intensity_rms, 0.0, 0.5);
        c.non_negative("noise.b_field_mt", n.b_field_mt);
        c.non_negative("noise.echo_a_per_mk_ms", n.echo_a_per_mk_ms);
        c.non_negative("noise.echo_b_per_mt_ms", n.echo_b_per_mt_ms);
        c.within("noise.scatter_branch_f1", n.scatter_branch_f1, 0.0, 1.0);

        let d = &self.detection;
        c.positive("detection.atom_rate_per_s", d.atom_rate_per_s);
        c.positive("detection.bg_rate_per_s", d.bg_rate_per_s);
        if d.atom_rate_per_s.is_finite()
            && d.bg_rate_per_s.is_finite()
            && d.atom_rate_per_s <= d.bg_rate_per_s
        {
            c.0.push(Error::validation(
                "detection.atom_rate_per_s",
                format!("must exceed detection.bg_rate_per_s ({})", d.bg_rate_per_s),
                d.atom_rate_per_s,
            ));
        }
        c.positive("detection.detect_window_ms", d.detect_window_ms);
        c.positive("detection.presence_window_ms", d.presence_window_ms);
        if d.threshold_counts == Some(0) {
            c.0.push(Error::validation(
                "detection.threshold_counts",
                "must be a positive integer",
                0,
            ));
        }
        c.positive("detection.pushout_us", d.pushout_us);
        c.positive("detection.pushout_depth_mk", d.pushout_depth_mk);
        c.within("detection.pushout_error", d.pushout_error, 0.0, 0.5);

        c.within("prep.pump_efficiency", self.prep.pump_efficiency, 0.0, 1.0);
        c.positive("prep.pump_us", self.prep.pump_us);

        if self.run.shots == 0 {
            c.0.push(Error::validation("run.shots", "must be >= 1", 0));
        }

        match c.0.into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("raw config is always representable as TOML")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapParams {
    /// Trap depth U0 (J).
    pub depth: f64,
    pub waist: f64,
    pub wavelength: f64,
    pub power: f64,
    pub omega_radial: f64,
    pub omega_axial: f64,
    pub lifetime: f64,
    /// K/s
    pub heating_rate: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitParams {
    pub hyperfine: f64,
    pub eta: f64,
    pub rabi: f64,
    pub detuning: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub pump_efficiency: f64,
    pub pump_duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub shots: u64,
    pub seed: u64,
}

/// Validated configuration in SI units. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub trap: TrapParams,
    pub qubit: QubitParams,
    pub noise: NoiseConfig,
    pub detection: DetectionConfig,
    pub prep: PrepConfig,
    pub run: RunConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl SimConfig {
    /// The reference parameter set.
    pub fn reference() -> Self {
        Self::from_raw(&RawConfig::default()).expect("default config is valid")
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        raw.validate()?;
        let t = &raw.trap;
        let q = &raw.qubit;
        let n = &raw.noise;
        let d = &raw.detection;
        Ok(Self {
            trap: TrapParams {
                depth: mk_to_joule(t.depth_mk),
                waist: t.waist_um * MICRO,
                wavelength: t.wavelength_nm * NANO,
                power: t.power_mw * MILLI,
                omega_radial: khz_to_angular(t.freq_radial_khz),
                omega_axial: khz_to_angular(t.freq_axial_khz),
                lifetime: t.lifetime_s,
                heating_rate: t.heating_uk_per_ms * MICRO / MILLI,
                temperature: t.temperature_uk * MICRO,
            },
            qubit: QubitParams {
                hyperfine: TAU * q.hyperfine_ghz * 1e9,
                eta: q.eta,
                rabi: TAU * q.rabi_mhz * 1e6,
                detuning: khz_to_angular(q.detuning_khz),
            },
            noise: NoiseConfig {
                intensity_rms: n.intensity_rms,
                b_field: n.b_field_mt * MILLI,
                echo_coeff_a: n.echo_a_per_mk_ms / MILLI / mk_to_joule(1.0),
                echo_coeff_b: n.echo_b_per_mt_ms / MILLI / MILLI,
                scatter_branch_f1: n.scatter_branch_f1,
                channels: NoiseChannels {
                    thermal_shift: n.thermal_shift,
                    thermal_intensity: n.thermal_intensity,
                    intensity_noise: n.intensity_noise,
                    scattering: n.scattering,
                    magnetic: n.magnetic,
                    trap_loss: n.trap_loss,
                },
            },
            detection: DetectionConfig {
                atom_count_rate: d.atom_rate_per_s,
                background_rate: d.bg_rate_per_s,
                presence_window: d.presence_window_ms * MILLI,
                readout_window: d.detect_window_ms * MILLI,
                threshold: d.threshold_counts,
                pushout_duration: d.pushout_us * MICRO,
                pushout_depth: mk_to_joule(d.pushout_depth_mk),
                pushout_error: d.pushout_error,
            },
            prep: PrepConfig {
                pump_efficiency: raw.prep.pump_efficiency,
                pump_duration: raw.prep.pump_us * MICRO,
            },
            run: RunConfig {
                shots: raw.run.shots,
                seed: raw.run.seed,
            },
        })
    }

    /// Converts back to laboratory units.
    pub fn to_raw(&self) -> RawConfig {
        let t = &self.trap;
        let q = &self.qubit;
        let n = &self.noise;
        let d = &self.detection;
        RawConfig {
            trap: RawTrap {
                power_mw: t.power / MILLI,
                waist_um: t.waist / MICRO,
                wavelength_nm: t.wavelength / NANO,
                depth_mk: joule_to_mk(t.depth),
                freq_radial_khz: angular_to_khz(t.omega_radial),
                freq_axial_khz: angular_to_khz(t.omega_axial),
                lifetime_s: t.lifetime,
                heating_uk_per_ms: t.heating_rate / MICRO * MILLI,
                temperature_uk: t.temperature / MICRO,
            },
            qubit: RawQubit {
                hyperfine_ghz: q.hyperfine / TAU / 1e9,
                eta: q.eta,
                rabi_mhz: q.rabi / TAU / 1e6,
                detuning_khz: angular_to_khz(q.detuning),
            },
            noise: RawNoise {
                intensity_rms: n.intensity_rms,
                b_field_mt: n.b_field / MILLI,
                echo_a_per_mk_ms: n.echo_coeff_a * mk_to_joule(1.0) * MILLI,
                echo_b_per_mt_ms: n.echo_coeff_b * MILLI * MILLI,
                scatter_branch_f1: n.scatter_branch_f1,
                thermal_shift: n.channels.thermal_shift,
                thermal_intensity: n.channels.thermal_intensity,
                intensity_noise: n.channels.intensity_noise,
                scattering: n.channels.scattering,
                magnetic: n.channels.magnetic,
                trap_loss: n.channels.trap_loss,
            },
            detection: RawDetection {
                atom_rate_per_s: d.atom_count_rate,
                bg_rate_per_s: d.background_rate,
                detect_window_ms: d.readout_window / MILLI,
                presence_window_ms: d.presence_window / MILLI,
                threshold_counts: d.threshold,
                pushout_us: d.pushout_duration / MICRO,
                pushout_depth_mk: joule_to_mk(d.pushout_depth),
                pushout_error: d.pushout_error,
            },
            prep: RawPrep {
                pump_efficiency: self.prep.pump_efficiency,
                pump_us: self.prep.pump_duration / MICRO,
            },
            run: RawRun {
                shots: self.run.shots,
                seed: self.run.seed,
            },
        }
    }

    /// Dephasing time constant 2 hbar / (eta k_B T). Infinite at T = 0.
    pub fn tau_c(&self) -> f64 {
        dephasing_timescales(self.qubit.eta, self.trap.temperature).tau_c
    }

    /// Differential shift of an atom at the full trap depth, eta U0 / hbar.
    pub fn max_differential_shift(&self) -> f64 {
        self.qubit.eta * self.trap.depth / HBAR
    }

    /// Canonical JSON serialization, used for hashing and metadata.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("SimConfig serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical_json().as_bytes()))
    }

    /// Same configuration with every stochastic channel disabled, perfect
    /// pumping and an error-free push-out.
    pub fn noiseless(&self) -> Self {
        let mut cfg = self.clone();
        cfg.noise.channels = NoiseChannels::none();
        cfg.prep.pump_efficiency = 1.0;
        cfg.detection.pushout_error = 0.0;
        cfg
    }
}

/// Characteristic times of thermal (reversible) dephasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DephasingSummary {
    /// 2 hbar / (eta k_B T), s
    pub tau_c: f64,
    /// 1/e time of the Ramsey contrast envelope, s
    pub t2_star: f64,
    /// Mean angular fringe shift of the thermal ensemble, rad/s
    pub mean_fringe_shift: f64,
}

/// Ratio of the envelope 1/e time to tau_c: solves (1 + x^2)^(-3/2) = 1/e.
pub fn t2_star_ratio() -> f64 {
    (E.powf(2.0 / 3.0) - 1.0).sqrt()
}

pub fn dephasing_timescales(eta: f64, temperature: f64) -> DephasingSummary {
    let rate = eta * K_B * temperature / HBAR;
    if rate <= 0.0 {
        return DephasingSummary {
            tau_c: f64::INFINITY,
            t2_star: f64::INFINITY,
            mean_fringe_shift: 0.0,
        };
    }
    let tau_c = 2.0 / rate;
    DephasingSummary {
        tau_c,
        t2_star: tau_c * t2_star_ratio(),
        mean_fringe_shift: 3.0 / tau_c,
    }
}

pub fn derived_timescales(cfg: &SimConfig) -> DephasingSummary {
    dephasing_timescales(cfg.qubit.eta, cfg.trap.temperature)
}

pub fn parse_config(text: &str, origin: &Path) -> Result<SimConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    SimConfig::from_raw(&raw)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SimConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

/// Location of `default.toml` under the directory named by
/// [`CONFIG_DIR_ENV`], if that variable is set.
pub fn default_config_path() -> Option<PathBuf> {
    std::env::var_os(CONFIG_DIR_ENV).map(|dir| PathBuf::from(dir).join("default.toml"))
}

/// Loads `path` if given, else `$TWEEZER_CONFIG_DIR/default.toml` when it
/// exists, else the built-in reference parameters.
pub fn resolve_config(path: Option<&Path>) -> Result<SimConfig> {
    if let Some(p) = path {
        return load_config(p);
    }
    match default_config_path() {
        Some(p) if p.exists() => load_config(p),
        _ => Ok(SimConfig::reference()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn defaults_carry_reference_values() {
        let cfg = SimConfig::reference();
        assert!(rel(cfg.trap.depth, K_B * 1.2e-3) < 1e-15);
        assert!(rel(cfg.qubit.rabi, TAU * 6.7e6) < 1e-15);
        assert!(rel(cfg.trap.temperature, 90e-6) < 1e-15);
        assert_eq!(cfg.prep.pump_efficiency, 0.85);
    }

    #[test]
    fn negative_depth_names_key() {
        let err = parse_config("[trap]\ndepth_mk = -1\n", Path::new("x.toml")).unwrap_err();
        match err {
            Error::Validation { key, .. } => assert_eq!(key, "trap.depth_mk"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn unknown_key_is_parse_error() {
        let err = parse_config("[trap]\ndepth_mK = 1\n", Path::new("x.toml")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err:?}");
        let err = parse_config("[traps]\n", Path::new("x.toml")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn malformed_toml_is_parse_error() {
        let err = parse_config("[trap\n", Path::new("x.toml")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn range_constraints() {
        for (text, key) in [
            ("[prep]\npump_efficiency = 1.2", "prep.pump_efficiency"),
            ("[noise]\nintensity_rms = 0.6", "noise.intensity_rms"),
            (
                "[detection]\natom_rate_per_s = 1000",
                "detection.atom_rate_per_s",
            ),
            (
                "[detection]\nthreshold_counts = 0",
                "detection.threshold_counts",
            ),
            ("[run]\nshots = 0", "run.shots"),
            ("[qubit]\neta = 0", "qubit.eta"),
        ] {
            match parse_config(text, Path::new("x.toml")) {
                Err(Error::Validation { key: k, .. }) => assert_eq!(k, key),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn signed_detuning_accepted() {
        let cfg = parse_config("[qubit]\ndetuning_khz = -20.8", Path::new("x.toml")).unwrap();
        assert!(rel(cfg.qubit.detuning, -TAU * 20.8e3) < 1e-15);
    }

    #[test]
    fn perfect_pumping_config() {
        let cfg = parse_config("[prep]\npump_efficiency = 1.0", Path::new("x.toml")).unwrap();
        assert_eq!(cfg.prep.pump_efficiency, 1.0);
    }

    #[test]
    fn timescales_at_reference_point() {
        let s = dephasing_timescales(7e-4, 90e-6);
        assert!((s.tau_c - 242.5e-6).abs() < 0.05e-6, "{}", s.tau_c);
        assert!((s.t2_star - 236.1e-6).abs() < 0.05e-6, "{}", s.t2_star);
        assert!((s.mean_fringe_shift - 12_371.97).abs() < 0.01);
        // quoted theory value 220 us, within 10%
        assert!(rel(s.t2_star, 220e-6) < 0.10);
        // the 1.94 hbar / (eta k_B T) form
        let quoted = 1.94 * HBAR / (7e-4 * K_B * 90e-6);
        assert!(rel(s.t2_star, quoted) < 0.005);
    }

    #[test]
    fn zero_temperature_limit() {
        let s = dephasing_timescales(7e-4, 0.0);
        assert!(s.tau_c.is_infinite() && s.t2_star.is_infinite());
        assert_eq!(s.mean_fringe_shift, 0.0);
    }

    #[test]
    fn t2_ratio_is_parameter_free() {
        for (eta, t) in [(7e-4, 90e-6), (1e-3, 10e-6), (3e-5, 1e-3)] {
            let s = dephasing_timescales(eta, t);
            assert!(rel(s.t2_star / s.tau_c, t2_star_ratio()) < 1e-15);
        }
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = SimConfig::reference();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.run.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
