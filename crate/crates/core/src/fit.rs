//! Weighted nonlinear least squares for the damped Rabi, thermal Ramsey and
//! exponential echo-decay models.
//!
//! The minimizer is Levenberg-Marquardt with Marquardt's diagonal scaling and
//! a numeric central-difference Jacobian, since the damped Rabi model is
//! itself a quadrature.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::dynamics::{ramsey_envelope, RamseyModel};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_hermite, gauss_laguerre};
use crate::{HBAR, K_B};

pub trait FitModel: Sync {
    fn name(&self) -> &'static str;
    fn param_names(&self) -> &'static [&'static str];
    fn eval(&self, x: f64, params: &[f64]) -> f64;

    /// Scale used for finite-difference steps when a parameter is zero.
    fn typical_scale(&self, _index: usize) -> f64 {
        1.0
    }

    fn eval_all(&self, xs: &[f64], params: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x, params)).collect()
    }
}

/// `y = C exp(-t / T_d) + b`, parameters `[C, T_d, b]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpDecayModel;

impl FitModel for ExpDecayModel {
    fn name(&self) -> &'static str {
        "exp_decay"
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["C", "T_d", "b"]
    }

    fn eval(&self, t: f64, p: &[f64]) -> f64 {
        p[0] * (-t / p[1]).exp() + p[2]
    }
}

/// Thermal Ramsey signal, parameters `[B, C, dbar, tau_c, phi0]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RamseyFitModel;

impl RamseyFitModel {
    pub fn to_model(p: &[f64]) -> RamseyModel {
        RamseyModel {
            baseline: p[0],
            contrast: p[1],
            fringe_frequency: p[2],
            tau_c: p[3],
            phase: p[4],
        }
    }
}

impl FitModel for RamseyFitModel {
    fn name(&self) -> &'static str {
        "ramsey"
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["B", "C", "dbar", "tau_c", "phi0"]
    }

    fn eval(&self, t: f64, p: &[f64]) -> f64 {
        Self::to_model(p).eval(t)
    }

    fn typical_scale(&self, index: usize) -> f64 {
        match index {
            2 => 1e3,
            3 => 1e-4,
            _ => 1.0,
        }
    }
}

/// Fixed physical inputs of the damped Rabi average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiNoiseParams {
    pub temperature: f64,
    pub depth: f64,
    pub eta: f64,
    pub detuning: f64,
    pub intensity_rms: f64,
    pub thermal_shift: bool,
    pub thermal_intensity: bool,
    pub intensity_noise: bool,
}

impl RabiNoiseParams {
    pub fn from_config(cfg: &SimConfig) -> Self {
        let ch = cfg.noise.channels;
        Self {
            temperature: cfg.trap.temperature,
            depth: cfg.trap.depth,
            eta: cfg.qubit.eta,
            detuning: cfg.qubit.detuning,
            intensity_rms: cfg.noise.intensity_rms,
            thermal_shift: ch.thermal_shift,
            thermal_intensity: ch.thermal_intensity,
            intensity_noise: ch.intensity_noise,
        }
    }
}

/// Quadrature over the motional energy and the intensity factor. Each node
/// carries the relative Rabi frequency `f(E) g`, the detuning it sees, and
/// its weight.
#[derive(Debug, Clone)]
pub struct ThermalAverager {
    scale: Vec<f64>,
    detuning: Vec<f64>,
    weight: Vec<f64>,
}

pub const ENERGY_NODES: usize = 64;
pub const INTENSITY_NODES: usize = 20;

impl ThermalAverager {
    pub fn new(p: &RabiNoiseParams) -> Self {
        let thermal = (p.thermal_shift || p.thermal_intensity) && p.temperature > 0.0;
        let energy = if thermal {
            let rule = gauss_laguerre(ENERGY_NODES, 2.0);
            let kt = K_B * p.temperature;
            rule.nodes
                .iter()
                .map(|x| x * kt)
                .zip(rule.weights)
                .collect::<Vec<_>>()
        } else {
            vec![(0.0, 1.0)]
        };
        let intensity = if p.intensity_noise && p.intensity_rms > 0.0 {
            let rule = gauss_hermite(INTENSITY_NODES);
            rule.nodes
                .iter()
                .map(|z| (1.0 + p.intensity_rms * z).max(0.0))
                .zip(rule.weights)
                .collect::<Vec<_>>()
        } else {
            vec![(1.0, 1.0)]
        };
        let mut out = Self {
            scale: Vec::new(),
            detuning: Vec::new(),
            weight: Vec::new(),
        };
        for &(e, we) in &energy {
            let f = if p.thermal_intensity {
                (1.0 - e / (2.0 * p.depth)).clamp(0.0, 1.0)
            } else {
                1.0
            };
            let delta = if p.thermal_shift {
                p.detuning - p.eta * e / (2.0 * HBAR)
            } else {
                p.detuning
            };
            for &(g, wg) in &intensity {
                out.scale.push(f * g);
                out.detuning.push(delta);
                out.weight.push(we * wg);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weight.is_empty()
    }

    fn nodes(&self, rabi: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        // (weight, amplitude (Omega/Omega')^2, Omega')
        self.scale
            .iter()
            .zip(&self.detuning)
            .zip(&self.weight)
            .map(move |((&s, &d), &w)| {
                let omega = rabi * s;
                let gen = omega.hypot(d);
                let amp = if gen > 0.0 {
                    (omega / gen).powi(2)
                } else {
                    0.0
                };
                (w, amp, gen)
            })
    }

    /// `<(Omega/Omega')^2 sin^2(Omega' t / 2)>`
    pub fn transfer(&self, rabi: f64, t: f64) -> f64 {
        self.nodes(rabi)
            .map(|(w, a, gen)| w * a * (0.5 * gen * t).sin().powi(2))
            .sum()
    }

    /// Normalized oscillation envelope `|<a e^{i Omega' t}>| / <a>`.
    pub fn envelope(&self, rabi: f64, t: f64) -> f64 {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut norm = 0.0;
        for (w, a, gen) in self.nodes(rabi) {
            sum += w * a * Complex64::from_polar(1.0, gen * t);
            norm += w * a;
        }
        if norm > 0.0 {
            sum.norm() / norm
        } else {
            0.0
        }
    }

    /// Amplitude-weighted mean generalized Rabi frequency.
    pub fn mean_frequency(&self, rabi: f64) -> f64 {
        let (num, den) = self.nodes(rabi).fold((0.0, 0.0), |(n, d), (w, a, gen)| {
            (n + w * a * gen, d + w * a)
        });
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// First time the envelope falls to 1/e, or `None` within 1000 periods.
    pub fn envelope_decay_time(&self, rabi: f64) -> Option<f64> {
        let mean = self.mean_frequency(rabi);
        if mean <= 0.0 {
            return None;
        }
        let target = (-1.0f64).exp();
        let period = TAU / mean;
        let dt = period / 50.0;
        let mut lo = 0.0;
        let mut hi = dt;
        while self.envelope(rabi, hi) > target {
            lo = hi;
            hi += dt;
            if hi > 1000.0 * period {
                return None;
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.envelope(rabi, mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

/// `y = b - C <(Omega/Omega')^2 sin^2(Omega' t / 2)>`, parameters
/// `[b, C, omega0]`. Starting from `|0>` (F=1) the signal falls from the
/// baseline `b`.
#[derive(Debug, Clone)]
pub struct DampedRabiModel {
    pub noise: RabiNoiseParams,
    averager: ThermalAverager,
}

impl DampedRabiModel {
    pub fn new(noise: RabiNoiseParams) -> Self {
        Self {
            averager: ThermalAverager::new(&noise),
            noise,
        }
    }

    pub fn from_config(cfg: &SimConfig) -> Self {
        Self::new(RabiNoiseParams::from_config(cfg))
    }

    pub fn averager(&self) -> &ThermalAverager {
        &self.averager
    }

    /// Envelope 1/e time and the same time in mean Rabi periods.
    pub fn envelope_decay(&self, rabi: f64) -> Option<(f64, f64)> {
        let t = self.averager.envelope_decay_time(rabi)?;
        let period = TAU / self.averager.mean_frequency(rabi);
        Some((t, t / period))
    }
}

impl FitModel for DampedRabiModel {
    fn name(&self) -> &'static str {
        "damped_rabi"
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["b", "C", "omega0"]
    }

    fn eval(&self, t: f64, p: &[f64]) -> f64 {
        p[0] - p[1] * self.averager.transfer(p[2], t)
    }

    fn typical_scale(&self, index: usize) -> f64 {
        if index == 2 {
            1e5
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitData {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl FitData {
    pub fn new(x: Vec<f64>, y: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() != sigma.len() {
            return Err(Error::validation(
                "data",
                "x, y and sigma must have equal length",
                x.len(),
            ));
        }
        if let Some(s) = sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::validation("sigma", "must be finite and > 0", s));
        }
        Ok(Self { x, y, sigma })
    }

    /// Rows with `sigma = 0` (p in {0, 1}) get the floor `1/(2N)`.
    pub fn from_rows(rows: &[(f64, f64, f64, u64)]) -> Result<Self> {
        let sigma = rows
            .iter()
            .map(|&(_, _, s, n)| if s > 0.0 { s } else { sigma_floor(n) })
            .collect();
        Self::new(
            rows.iter().map(|r| r.0).collect(),
            rows.iter().map(|r| r.1).collect(),
            sigma,
        )
    }

    /// Reads `x,<y>,sigma,n` where `<y>` is `p_f1` or `contrast`.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let headers = reader.headers()?.clone();
        let col = |names: &[&str]| {
            headers
                .iter()
                .position(|h| names.contains(&h))
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("missing column `{}`", names.join("` or `")),
                })
        };
        let ix = col(&["x"])?;
        let iy = col(&["p_f1", "contrast"])?;
        let is = col(&["sigma"])?;
        let i_n = col(&["n"])?;
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i].trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("`{}`: {e}", &rec[i]),
                })
            };
            rows.push((num(ix)?, num(iy)?, num(is)?, num(i_n)? as u64));
        }
        Self::from_rows(&rows)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

pub fn sigma_floor(n: u64) -> f64 {
    1.0 / (2.0 * n.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub rel_tolerance: f64,
    pub step_tolerance: f64,
    pub initial_lambda: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            rel_tolerance: 1e-10,
            step_tolerance: 1e-12,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// 1-sigma errors; `None` for fixed or undetermined parameters.
    pub errors: Vec<Option<f64>>,
    pub free: Vec<bool>,
    pub chi2: f64,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Objective after each accepted step, starting with the initial point.
    pub chi2_history: Vec<f64>,
    /// Parameters along which the Jacobian is (numerically) rank deficient.
    pub degenerate: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.params[i])
    }

    pub fn error(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .and_then(|i| self.errors[i])
    }
}

/// Weighted sum of squared residuals.
pub fn chi_square(model: &dyn FitModel, data: &FitData, params: &[f64]) -> f64 {
    data.x
        .iter()
        .zip(&data.y)
        .zip(&data.sigma)
        .map(|((&x, &y), &s)| ((y - model.eval(x, params)) / s).powi(2))
        .sum()
}

fn step_size(model: &dyn FitModel, params: &[f64], j: usize, rel: f64) -> f64 {
    rel * params[j].abs().max(model.typical_scale(j))
}

/// Central-difference derivative columns of the model at `xs` for the
/// parameters in `cols`.
fn jacobian(
    model: &dyn FitModel,
    xs: &[f64],
    params: &[f64],
    cols: &[usize],
    rel: f64,
) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(xs.len(), cols.len());
    let mut p = params.to_vec();
    for (c, &j) in cols.iter().enumerate() {
        let h = step_size(model, params, j, rel);
        p[j] = params[j] + h;
        let up = model.eval_all(xs, &p);
        p[j] = params[j] - h;
        let down = model.eval_all(xs, &p);
        p[j] = params[j];
        for i in 0..xs.len() {
            jac[(i, c)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

const JACOBIAN_STEP: f64 = 1e-6;

/// Minimizes chi-square over the parameters with `free[i]` set.
pub fn fit(
    model: &dyn FitModel,
    data: &FitData,
    init: &[f64],
    free: &[bool],
    opts: &FitOptions,
) -> Result<FitResult> {
    let names = model.param_names();
    if init.len() != names.len() || free.len() != names.len() {
        return Err(Error::validation(
            "init",
            format!("{} expects {} parameters", model.name(), names.len()),
            init.len(),
        ));
    }
    let cols: Vec<usize> = (0..names.len()).filter(|&i| free[i]).collect();
    if data.len() < cols.len() + 1 {
        return Err(Error::validation(
            "data",
            format!(
                "need at least {} rows for {} free parameters",
                cols.len() + 1,
                cols.len()
            ),
            data.len(),
        ));
    }
    if init.iter().any(|p| !p.is_finite()) {
        return Err(Error::validation(
            "init",
            "parameters must be finite",
            format!("{init:?}"),
        ));
    }
    let weights: Vec<f64> = data.sigma.iter().map(|s| 1.0 / s).collect();
    let residuals = |p: &[f64]| -> DVector<f64> {
        let f = model.eval_all(&data.x, p);
        DVector::from_iterator(
            data.len(),
            (0..data.len()).map(|i| (data.y[i] - f[i]) * weights[i]),
        )
    };
    let weighted_jacobian = |p: &[f64]| {
        let mut j = jacobian(model, &data.x, p, &cols, JACOBIAN_STEP);
        for (i, w) in weights.iter().enumerate() {
            j.row_mut(i).scale_mut(*w);
        }
        j
    };

    let mut p = init.to_vec();
    let mut r = residuals(&p);
    let mut chi2 = r.norm_squared();
    if !chi2.is_finite() {
        return Err(Error::Fit(
            "model is not finite at the initial parameters".into(),
        ));
    }
    let mut history = vec![chi2];
    let mut lambda = opts.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations && !cols.is_empty() {
        iterations += 1;
        if chi2 <= f64::MIN_POSITIVE {
            converged = true;
            break;
        }
        let jac = weighted_jacobian(&p);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut accepted = None;
        while lambda < 1e20 {
            let mut a = jtj.clone();
            for k in 0..cols.len() {
                let d = jtj[(k, k)];
                a[(k, k)] += lambda * if d > 0.0 { d } else { 1.0 };
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&jtr);
            let mut trial = p.clone();
            for (k, &j) in cols.iter().enumerate() {
                trial[j] += delta[k];
            }
            let r_new = residuals(&trial);
            let chi2_new = r_new.norm_squared();
            if chi2_new.is_finite() && chi2_new <= chi2 {
                accepted = Some((trial, r_new, chi2_new, delta));
                lambda = (lambda / 10.0).max(1e-12);
                break;
            }
            lambda *= 10.0;
        }
        let Some((trial, r_new, chi2_new, delta)) = accepted else {
            // no downhill step at any damping: a minimum to working precision
            converged = true;
            break;
        };
        let decrease = (chi2 - chi2_new) / chi2.max(f64::MIN_POSITIVE);
        let step = cols
            .iter()
            .enumerate()
            .map(|(k, &j)| delta[k].abs() / p[j].abs().max(model.typical_scale(j)))
            .fold(0.0, f64::max);
        p = trial;
        r = r_new;
        chi2 = chi2_new;
        history.push(chi2);
        if decrease < opts.rel_tolerance || step < opts.step_tolerance || chi2 <= f64::MIN_POSITIVE
        {
            converged = true;
            break;
        }
    }
    if cols.is_empty() {
        converged = true;
    }

    let mut errors = vec![None; names.len()];
    let mut degenerate = Vec::new();
    if !cols.is_empty() {
        let jac = weighted_jacobian(&p);
        let svd = jac.clone().svd(false, true);
        let smax = svd.singular_values.max();
        let v_t = svd.v_t.as_ref().expect("requested V^T");
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s.is_nan() || s <= 1e-10 * smax {
                for (c, &j) in cols.iter().enumerate() {
                    if v_t[(k, c)].abs() > 0.3 && !degenerate.contains(&names[j].to_string()) {
                        degenerate.push(names[j].to_string());
                    }
                }
            }
        }
        if degenerate.is_empty() {
            if let Some(cov) = (jac.transpose() * &jac).try_inverse() {
                for (c, &j) in cols.iter().enumerate() {
                    let v = cov[(c, c)];
                    if v.is_finite() && v >= 0.0 {
                        errors[j] = Some(v.sqrt());
                    }
                }
            } else {
                degenerate.extend(cols.iter().map(|&j| names[j].to_string()));
            }
        }
        if !degenerate.is_empty() {
            converged = false;
        }
    }

    Ok(FitResult {
        model: model.name().to_string(),
        names: names.iter().map(|s| s.to_string()).collect(),
        params: p,
        errors,
        free: free.to_vec(),
        chi2,
        residual_norm: chi2.sqrt(),
        converged,
        iterations,
        chi2_history: history,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianCheck {
    /// Worst per-parameter disagreement between the two step sizes.
    pub max_deviation: f64,
    pub deviations: Vec<f64>,
    /// Parameters with an identically zero derivative column.
    pub degenerate: Vec<String>,
}

/// Compares central differences at relative steps 1e-6 and 1e-7. The
/// deviation of a column is `max |d1 - d2| / max |d1|`.
pub fn numeric_jacobian_check(model: &dyn FitModel, params: &[f64], xs: &[f64]) -> JacobianCheck {
    let all: Vec<usize> = (0..params.len()).collect();
    let d1 = jacobian(model, xs, params, &all, 1e-6);
    let d2 = jacobian(model, xs, params, &all, 1e-7);
    let mut deviations = Vec::new();
    let mut degenerate = Vec::new();
    for j in 0..params.len() {
        let scale = d1.column(j).amax();
        if scale == 0.0 {
            degenerate.push(model.param_names()[j].to_string());
            deviations.push(0.0);
            continue;
        }
        deviations.push((d1.column(j) - d2.column(j)).amax() / scale);
    }
    JacobianCheck {
        max_deviation: deviations.iter().cloned().fold(0.0, f64::max),
        deviations,
        degenerate,
    }
}

/// Angular frequency with the largest periodogram power of `y - mean(y)`,
/// scanned from one cycle over the data span up to the Nyquist frequency of
/// the smallest sample spacing. Returns the frequency and the phase `phi` of
/// the best-matching `cos(omega x + phi)`.
pub fn dominant_frequency(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() < 3 {
        return None;
    }
    let span = x[x.len() - 1] - x[0];
    let min_dx = x
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    if span.is_nan() || span <= 0.0 || !min_dx.is_finite() {
        return None;
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let lo = 0.5 * TAU / span;
    let hi = PI / min_dx;
    let steps = (40 * x.len()).max(400);
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for k in 0..=steps {
        let w = lo + (hi - lo) * k as f64 / steps as f64;
        let s: Complex64 = x
            .iter()
            .zip(y)
            .map(|(&t, &v)| (v - mean) * Complex64::from_polar(1.0, -w * t))
            .sum();
        let power = s.norm_sqr();
        if power > best.2 {
            best = (w, s.arg(), power);
        }
    }
    Some((best.0, best.1))
}

fn best_of(results: Vec<FitResult>) -> Result<FitResult> {
    results
        .into_iter()
        .min_by(|a, b| {
            b.converged
                .cmp(&a.converged)
                .then(a.chi2.total_cmp(&b.chi2))
        })
        .ok_or_else(|| Error::Fit("no starting point".into()))
}

/// Initial `[C, T_d, b]` from the data ends and a log-linear slope.
pub fn exp_decay_init(data: &FitData, baseline: Option<f64>) -> [f64; 3] {
    let b = baseline.unwrap_or_else(|| *data.y.last().unwrap_or(&0.0));
    let pts: Vec<(f64, f64)> = data
        .x
        .iter()
        .zip(&data.y)
        .filter(|(_, &y)| y - b > 0.0)
        .map(|(&x, &y)| (x, (y - b).ln()))
        .collect();
    let span = data.x.last().copied().unwrap_or(1.0) - data.x.first().copied().unwrap_or(0.0);
    let mut td = span / 3.0;
    let mut c = data.y.first().copied().unwrap_or(1.0) - b;
    if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        if slope < 0.0 && slope.is_finite() {
            td = -1.0 / slope;
            c = (my - slope * mx).exp();
        }
    }
    [c, td, b]
}

/// Exponential decay fit; `baseline = Some(b)` holds `b` fixed.
pub fn fit_exp_decay(
    data: &FitData,
    baseline: Option<f64>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let init = exp_decay_init(data, baseline);
    fit(
        &ExpDecayModel,
        data,
        &init,
        &[true, true, baseline.is_none()],
        opts,
    )
}

/// Ramsey fit from periodogram starts over both fringe-frequency signs and
/// several envelope times.
pub fn fit_ramsey(data: &FitData, opts: &FitOptions) -> Result<FitResult> {
    let (w, phase) = dominant_frequency(&data.x, &data.y)
        .ok_or_else(|| Error::Fit("too few points for a frequency scan".into()))?;
    let b = data.y.iter().sum::<f64>() / data.len() as f64;
    let (lo, hi) = data
        .y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let c = (hi - lo).max(1e-3);
    let span = data.x[data.len() - 1] - data.x[0];
    let mut results = Vec::new();
    for sign in [1.0, -1.0] {
        for frac in [0.25, 0.5, 1.0, 2.0] {
            let init = [b, c, sign * w, frac * span, sign * phase];
            if let Ok(r) = fit(&RamseyFitModel, data, &init, &[true; 5], opts) {
                if r.params[3] > 0.0 {
                    results.push(r);
                }
            }
        }
    }
    best_of(results)
}

/// Damped Rabi fit of `C` and `omega0` with the baseline fixed at
/// `baseline`. The starting frequency comes from the periodogram, refined by
/// a coarse chi-square scan.
pub fn fit_damped_rabi(
    model: &DampedRabiModel,
    data: &FitData,
    baseline: f64,
    opts: &FitOptions,
) -> Result<FitResult> {
    let (w, _) = dominant_frequency(&data.x, &data.y)
        .ok_or_else(|| Error::Fit("too few points for a frequency scan".into()))?;
    let lo = data.y.iter().cloned().fold(f64::INFINITY, f64::min);
    let c = (baseline - lo).max(1e-3);
    // the oscillation runs at the thermally reduced frequency; scan around it
    let mut best = (w, f64::INFINITY);
    for k in 0..=80 {
        let omega = w * (0.7 + 0.6 * k as f64 / 80.0);
        let chi = chi_square(model, data, &[baseline, c, omega]);
        if chi < best.1 {
            best = (omega, chi);
        }
    }
    fit(
        model,
        data,
        &[baseline, c, best.0],
        &[false, true, true],
        opts,
    )
}

/// Fit plus model-specific derived quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub fit: FitResult,
    pub points: usize,
    pub derived: BTreeMap<String, f64>,
}

impl FitReport {
    pub fn ramsey(fit: FitResult, points: usize) -> Self {
        let mut derived = BTreeMap::new();
        let tau_c = fit.params[3];
        derived.insert("t2_star".into(), tau_c * crate::config::t2_star_ratio());
        derived.insert("fringe_frequency_hz".into(), fit.params[2] / TAU);
        Self {
            fit,
            points,
            derived,
        }
    }

    pub fn damped_rabi(fit: FitResult, model: &DampedRabiModel, points: usize) -> Self {
        let mut derived = BTreeMap::new();
        let omega0 = fit.params[2];
        derived.insert("rabi_frequency_hz".into(), omega0 / TAU);
        derived.insert(
            "mean_period".into(),
            TAU / model.averager().mean_frequency(omega0),
        );
        if let Some((t, periods)) = model.envelope_decay(omega0) {
            derived.insert("envelope_decay_time".into(), t);
            derived.insert("envelope_decay_periods".into(), periods);
        }
        Self {
            fit,
            points,
            derived,
        }
    }

    pub fn exp_decay(fit: FitResult, points: usize) -> Self {
        Self {
            fit,
            points,
            derived: BTreeMap::new(),
        }
    }
}

/// Model curve on `samples` evenly spaced points across `[x0, x1]`. Ramsey
/// curves also carry the envelope `B +- (C/2) (1 + (t/tau_c)^2)^(-3/2)`.
pub fn curve_csv(
    model: &dyn FitModel,
    params: &[f64],
    x0: f64,
    x1: f64,
    samples: usize,
) -> Result<String> {
    let ramsey = model.name() == "ramsey";
    let mut w = csv::Writer::from_writer(Vec::new());
    if ramsey {
        w.write_record(["x", "y", "envelope_upper", "envelope_lower"])?;
    } else {
        w.write_record(["x", "y"])?;
    }
    let n = samples.max(2);
    for k in 0..n {
        let x = x0 + (x1 - x0) * k as f64 / (n - 1) as f64;
        let y = model.eval(x, params);
        if ramsey {
            let half = 0.5 * params[1] * ramsey_envelope(x, params[3]);
            w.write_record([
                x.to_string(),
                y.to_string(),
                (params[0] + half).to_string(),
                (params[0] - half).to_string(),
            ])?;
        } else {
            w.write_record([x.to_string(), y.to_string()])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Fit(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::transfer_probability;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn grid(n: usize, t1: f64) -> Vec<f64> {
        (0..n).map(|i| t1 * i as f64 / (n - 1) as f64).collect()
    }

    fn exact_data(model: &dyn FitModel, xs: Vec<f64>, p: &[f64], sigma: f64) -> FitData {
        let y = model.eval_all(&xs, p);
        let n = xs.len();
        FitData::new(xs, y, vec![sigma; n]).unwrap()
    }

    #[test]
    fn exp_decay_exact_recovery() {
        let truth = [0.8, 13e-3, 0.05];
        let data = exact_data(&ExpDecayModel, grid(20, 40e-3), &truth, 0.01);
        let r = fit_exp_decay(&data, None, &FitOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.residual_norm < 1e-12, "{}", r.residual_norm);
        for (a, b) in r.params.iter().zip(truth) {
            assert!((a / b - 1.0).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn exp_decay_noisy_recovery() {
        let truth = [1.0, 13e-3, 0.0];
        let xs = grid(20, 40e-3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let y: Vec<f64> = xs
            .iter()
            .map(|&t| {
                let v = ExpDecayModel.eval(t, &truth);
                v + Normal::new(0.0, 0.05 * v).unwrap().sample(&mut rng)
            })
            .collect();
        let sigma: Vec<f64> = xs
            .iter()
            .map(|&t| 0.05 * ExpDecayModel.eval(t, &truth))
            .collect();
        let data = FitData::new(xs, y, sigma).unwrap();
        let r = fit_exp_decay(&data, None, &FitOptions::default()).unwrap();
        let td = r.get("T_d").unwrap();
        let err = r.error("T_d").unwrap();
        assert!((td - 13e-3).abs() < 2.0 * err, "{td} +- {err}");
    }

    #[test]
    fn chi2_history_monotone() {
        let truth = [0.5, 1.0, 0.1];
        let data = exact_data(&ExpDecayModel, grid(15, 3.0), &truth, 0.02);
        let r = fit(
            &ExpDecayModel,
            &data,
            &[1.0, 0.3, 0.0],
            &[true; 3],
            &FitOptions::default(),
        )
        .unwrap();
        assert!(r.chi2_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.converged);
    }

    #[test]
    fn fixed_parameters_stay_fixed() {
        let truth = [0.5, 1.0, 0.1];
        let data = exact_data(&ExpDecayModel, grid(15, 3.0), &truth, 0.02);
        let r = fit(
            &ExpDecayModel,
            &data,
            &[0.4, 0.8, 0.2],
            &[true, true, false],
            &FitOptions::default(),
        )
        .unwrap();
        assert_eq!(r.params[2], 0.2);
        assert_eq!(r.errors[2], None);
        assert!(r.errors[0].is_some());
    }

    #[test]
    fn too_few_rows() {
        let data = exact_data(&ExpDecayModel, grid(3, 3.0), &[1.0, 1.0, 0.0], 0.1);
        let e = fit(
            &ExpDecayModel,
            &data,
            &[1.0, 1.0, 0.0],
            &[true; 3],
            &FitOptions::default(),
        )
        .unwrap_err();
        assert!(e.is_validation());
    }

    #[test]
    fn rank_deficiency_reported() {
        // with C = 0 the data carry no information on T_d
        let data = exact_data(&ExpDecayModel, grid(10, 3.0), &[0.0, 1.0, 0.3], 0.01);
        let r = fit(
            &ExpDecayModel,
            &data,
            &[0.0, 1.0, 0.3],
            &[false, true, true],
            &FitOptions::default(),
        )
        .unwrap();
        assert!(!r.converged);
        assert_eq!(r.degenerate, vec!["T_d".to_string()]);
    }

    #[test]
    fn jacobian_check_models() {
        let xs = grid(30, 40e-3);
        let c = numeric_jacobian_check(&ExpDecayModel, &[0.8, 13e-3, 0.05], &xs);
        assert!(c.max_deviation < 1e-5, "{c:?}");
        assert!(c.degenerate.is_empty());
        let c = numeric_jacobian_check(&ExpDecayModel, &[0.0, 13e-3, 0.05], &xs);
        assert_eq!(c.degenerate, vec!["T_d".to_string()]);

        let xs = grid(40, 800e-6);
        let p = [0.5, 1.0, TAU * 18.8e3, 242.5e-6, 0.3];
        let c = numeric_jacobian_check(&RamseyFitModel, &p, &xs);
        assert!(c.max_deviation < 1e-5, "{c:?}");

        let model = DampedRabiModel::from_config(&SimConfig::reference());
        let xs = grid(40, 1.2e-6);
        let c = numeric_jacobian_check(&model, &[0.99, 0.84, TAU * 6.7e6], &xs);
        assert!(c.max_deviation < 1e-5, "{c:?}");
    }

    #[test]
    fn ramsey_envelope_sensitivity_decays() {
        let tau = 242.5e-6;
        let p = [0.5, 1.0, 0.0, tau, 0.0];
        // dY/dC = envelope/2 * cos(...) ; its magnitude bound falls monotonically
        let ts: Vec<f64> = (1..20).map(|k| k as f64 * tau).collect();
        let bound: Vec<f64> = ts
            .iter()
            .map(|&t| {
                let h = 1e-6;
                let mut up = p;
                up[1] += h;
                let mut dn = p;
                dn[1] -= h;
                let d = (RamseyFitModel.eval(t, &up) - RamseyFitModel.eval(t, &dn)) / (2.0 * h);
                let phase = 3.0 * (t / tau - (t / tau).atan());
                d / phase.cos().abs().max(1e-3) // strip the oscillation
            })
            .map(f64::abs)
            .collect();
        assert!(bound.windows(2).all(|w| w[1] < w[0]), "{bound:?}");
    }

    #[test]
    fn ramsey_exact_recovery() {
        let truth = [0.5, 0.95, TAU * 20.8e3 - 3.0 / 242.5e-6, 242.5e-6, 0.2];
        let data = exact_data(&RamseyFitModel, grid(81, 800e-6), &truth, 0.05);
        let r = fit_ramsey(&data, &FitOptions::default()).unwrap();
        assert!(r.converged);
        for (a, b) in r.params.iter().zip(truth) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn damped_rabi_exact_recovery() {
        let model = DampedRabiModel::from_config(&SimConfig::reference());
        let truth = [0.99, 0.84, TAU * 6.7e6];
        let data = exact_data(&model, grid(60, 1.2e-6), &truth, 0.05);
        let r = fit_damped_rabi(&model, &data, 0.99, &FitOptions::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert!((r.params[1] / truth[1] - 1.0).abs() < 1e-6);
        assert!((r.params[2] / truth[2] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn averager_noiseless_limit() {
        let mut cfg = SimConfig::reference();
        cfg.noise.channels = crate::noise::NoiseChannels::none();
        cfg.qubit.detuning = TAU * 1e6;
        let model = DampedRabiModel::from_config(&cfg);
        assert_eq!(model.averager().len(), 1);
        for t in [0.0, 1e-7, 3e-7] {
            let a = model.averager().transfer(cfg.qubit.rabi, t);
            let b = transfer_probability(cfg.qubit.rabi, cfg.qubit.detuning, t);
            assert!((a - b).abs() < 1e-14);
        }
        assert!(model
            .averager()
            .envelope_decay_time(cfg.qubit.rabi)
            .is_none());
    }

    #[test]
    fn envelope_decay_periods_at_both_powers() {
        let mut cfg = SimConfig::reference();
        let fast = DampedRabiModel::from_config(&cfg)
            .envelope_decay(cfg.qubit.rabi)
            .unwrap();
        cfg.qubit.rabi = TAU * 18e3;
        let slow = DampedRabiModel::from_config(&cfg)
            .envelope_decay(cfg.qubit.rabi)
            .unwrap();
        for (_, periods) in [fast, slow] {
            assert!((3.0..=8.0).contains(&periods), "{periods}");
        }
    }

    #[test]
    fn envelope_thermal_only_closed_form() {
        // intensity-fraction spread alone: |<e^{i Omega f t}>| over Gamma(3)
        // energies gives (1 + (Omega t kT / 2U0)^2)^(-3/2), up to the clamp
        // at E > 2 U0 which carries ~1e-9 of the probability
        let cfg = SimConfig::reference();
        let mut p = RabiNoiseParams::from_config(&cfg);
        p.thermal_shift = false;
        p.intensity_noise = false;
        let avg = ThermalAverager::new(&p);
        let k = K_B * p.temperature / (2.0 * p.depth);
        for t in [20e-9, 100e-9, 400e-9] {
            let s = cfg.qubit.rabi * t * k;
            let expected = (1.0 + s * s).powf(-1.5);
            let got = avg.envelope(cfg.qubit.rabi, t);
            assert!((got - expected).abs() < 1e-8, "t={t}: {got} vs {expected}");
        }
    }

    #[test]
    fn periodogram_finds_frequency() {
        let xs = grid(60, 1.2e-6);
        let w0 = TAU * 6.0e6;
        let ys: Vec<f64> = xs
            .iter()
            .map(|&t| 0.5 + 0.4 * (w0 * t + 0.7).cos())
            .collect();
        let (w, phase) = dominant_frequency(&xs, &ys).unwrap();
        assert!((w / w0 - 1.0).abs() < 0.03, "{w}");
        assert!((phase - 0.7).abs() < 0.3, "{phase}");
    }

    #[test]
    fn sigma_floor_applied() {
        let d = FitData::from_rows(&[(0.0, 1.0, 0.0, 100), (1.0, 0.5, 0.05, 100)]).unwrap();
        assert_eq!(d.sigma, vec![0.005, 0.05]);
    }

    #[test]
    fn curve_has_envelope_columns() {
        let p = [0.5, 1.0, 1e5, 2e-4, 0.0];
        let s = curve_csv(&RamseyFitModel, &p, 0.0, 8e-4, 5).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("x,y,envelope_upper,envelope_lower"));
        assert_eq!(s.lines().count(), 6);
        let s = curve_csv(&ExpDecayModel, &[1.0, 1.0, 0.0], 0.0, 1.0, 3).unwrap();
        assert!(s.starts_with("x,y\n"));
    }
}
