use std::f64::consts::{FRAC_PI_2, TAU};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tweezer::config::{derived_timescales, resolve_config};
use tweezer::dynamics::SequenceKind;
use tweezer::fit::{
    curve_csv, fit_damped_rabi, fit_exp_decay, fit_ramsey, DampedRabiModel, ExpDecayModel, FitData,
    FitModel, FitOptions, FitReport, RamseyFitModel,
};
use tweezer::noise::{calibrate_echo_coefficients, read_echo_observations};
use tweezer::runner::{
    contrast_csv, echo_contrast, metadata_path, projection_noise_audit, readout_audit, results_csv,
    run_experiment, Execution, ExperimentResult, SweepParameter, SweepSpec,
};
use tweezer::SimConfig;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "tweezer",
    version,
    about = "Single-atom hyperfine qubit simulator"
)]
struct Cli {
    /// Configuration file (TOML). Defaults to $TWEEZER_CONFIG_DIR/default.toml,
    /// then the built-in reference parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides `run.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Shots per point (overrides `run.shots`).
    #[arg(long, global = true)]
    shots: Option<u64>,
    /// Output file. Simulations also write `<out>.meta.json`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Sweep a pulse sequence and record the fraction of atoms found in F=1.
    #[command(subcommand)]
    Simulate(Simulate),
    /// End-to-end push-out and fluorescence misassignment.
    ReadoutAudit {
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
    },
    /// Spread of N-shot estimates against the binomial prediction.
    NoiseAudit {
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.005, 0.1, 0.5, 0.9, 0.95])]
        p: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        repeats: u64,
    },
    /// Fit a model to a result CSV.
    Fit(FitArgs),
    /// Solve 1/T = a U + b B from measured echo decay times.
    CalibrateEcho {
        /// CSV with columns depth_mk,b_mt,t_decay_ms.
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Print the resolved configuration and derived time scales.
    ShowConfig,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Simulate {
    /// Rabi flopping against pulse length.
    Rabi(RabiArgs),
    /// Ramsey fringes against the gap between the pi/2 pulses.
    Ramsey(RamseyArgs),
    /// Spin echo.
    Echo(EchoArgs),
}

#[derive(Debug, Args, Serialize)]
struct RabiArgs {
    /// Longest pulse; 1.2 us above 1 MHz Rabi frequency, 250 us below.
    #[arg(long)]
    t_max_us: Option<f64>,
    #[arg(long, default_value_t = 60)]
    points: usize,
    #[arg(long)]
    rabi_mhz: Option<f64>,
    #[arg(long)]
    detuning_khz: Option<f64>,
    /// Drop grid points with shorter pulses.
    #[arg(long)]
    mask_below_ns: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct RamseyArgs {
    #[arg(long, default_value_t = 800.0)]
    t_max_us: f64,
    #[arg(long, default_value_t = 161)]
    points: usize,
    #[arg(long, default_value_t = 20.8)]
    detuning_khz: f64,
    /// pi/2 pulse length; sets the Rabi frequency.
    #[arg(long, default_value_t = 1.2)]
    pi2_us: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum EchoMode {
    /// Symmetric echo against the total free time 2T.
    Total,
    /// Second gap scanned around a fixed first gap T.
    Scan,
}

#[derive(Debug, Args, Serialize)]
struct EchoArgs {
    #[arg(long, value_enum, default_value_t = EchoMode::Total)]
    mode: EchoMode,
    /// Longest total free time (total mode).
    #[arg(long, default_value_t = 40.0)]
    t_max_ms: f64,
    #[arg(long, default_value_t = 41)]
    points: usize,
    /// First gap T (scan mode).
    #[arg(long = "echo-T-ms", default_value_t = 5.0)]
    echo_t_ms: f64,
    /// Full width of the second-gap scan (scan mode).
    #[arg(long, default_value_t = 200.0)]
    scan_us: f64,
    #[arg(long)]
    detuning_khz: Option<f64>,
    /// Phase of the final pi/2 pulse.
    #[arg(long, default_value_t = 0.0)]
    phase_deg: f64,
    /// Record fringe contrast p(180 deg) - p(0 deg) instead of p_f1.
    #[arg(long)]
    contrast: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModelKind {
    DampedRabi,
    Ramsey,
    ExpDecay,
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    /// Result CSV (`x,p_f1,sigma,n` or `x,contrast,sigma,n`).
    #[arg(long = "in")]
    input: PathBuf,
    /// Write the model curve here.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Hold the baseline at this value. damped-rabi defaults to
    /// 1 - detection.pushout_error; exp-decay fits it unless given.
    #[arg(long)]
    baseline: Option<f64>,
}

/// Bad flag values; exit status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let invalid = e.chain().any(|c| {
                c.downcast_ref::<UsageError>().is_some()
                    || c.downcast_ref::<tweezer::Error>()
                        .is_some_and(|t| t.is_validation())
            });
            ExitCode::from(if invalid { 2 } else { 1 })
        }
    }
}

fn load(cli: &Cli) -> Result<SimConfig> {
    let mut cfg = resolve_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(shots) = cli.shots {
        if shots == 0 {
            return Err(usage("--shots must be >= 1"));
        }
        cfg.run.shots = shots;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load(cli)?;
    match &cli.command {
        Command::Simulate(sim) => simulate(cli, sim, cfg),
        Command::ReadoutAudit { trials } => {
            let audit = readout_audit(&cfg, *trials, cfg.run.seed, Execution::Parallel)?;
            emit(cli, &audit, || {
                format!(
                    "threshold {} counts\n|0> read as F=2: {:.5}\n|1> read as F=1: {:.5}\nmean misassignment: {:.5}\nthreshold classification error: {:.3e}\n",
                    audit.threshold,
                    audit.error_f1,
                    audit.error_f2,
                    audit.misassignment(),
                    audit.classification_error
                )
            })
        }
        Command::NoiseAudit { p, repeats } => {
            let report = projection_noise_audit(
                p,
                cfg.run.shots,
                *repeats,
                cfg.run.seed,
                &cfg,
                Execution::Parallel,
            )?;
            emit(cli, &report, || {
                let mut s = String::from(
                    "p_target,shots,empirical_std,predicted_std,band_low,band_high,consistent\n",
                );
                for e in &report.entries {
                    s += &format!(
                        "{},{},{:.6},{:.6},{:.6},{:.6},{}\n",
                        e.p_target,
                        e.shots,
                        e.empirical_std,
                        e.predicted_std,
                        e.band.0,
                        e.band.1,
                        e.consistent
                    );
                }
                s
            })
        }
        Command::Fit(args) => fit_command(cli, args, cfg),
        Command::CalibrateEcho { input } => {
            let obs = read_echo_observations(input)?;
            let c = calibrate_echo_coefficients(&obs)?;
            emit(cli, &c, || {
                format!(
                    "a = {:.6} 1/(ms mK)\nb = {:.6} 1/(ms mT)\n",
                    c.a_per_mk_ms, c.b_per_mt_ms
                )
            })
        }
        Command::ShowConfig => {
            #[derive(Serialize)]
            struct Shown {
                config: tweezer::RawConfig,
                config_hash: String,
                tau_c: f64,
                t2_star: f64,
                mean_fringe_shift: f64,
            }
            let d = derived_timescales(&cfg);
            let shown = Shown {
                config: cfg.to_raw(),
                config_hash: cfg.hash(),
                tau_c: d.tau_c,
                t2_star: d.t2_star,
                mean_fringe_shift: d.mean_fringe_shift,
            };
            emit(cli, &shown, || {
                format!(
                    "{}\n# config hash {}\n# tau_c = {:.2} us, T2* = {:.2} us, mean fringe shift = 2pi x {:.1} Hz\n",
                    cfg.to_raw().to_toml_string().trim_end(),
                    shown.config_hash,
                    d.tau_c * 1e6,
                    d.t2_star * 1e6,
                    d.mean_fringe_shift / TAU
                )
            })
        }
    }
}

/// Writes `text()` (or JSON with `--json`) to `--out` or stdout.
fn emit<T: Serialize>(cli: &Cli, value: &T, text: impl FnOnce() -> String) -> Result<()> {
    let body = if cli.json {
        serde_json::to_string_pretty(value)? + "\n"
    } else {
        text()
    };
    match &cli.out {
        Some(path) => {
            std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            std::io::stdout().write_all(body.as_bytes())?;
            Ok(())
        }
    }
}

fn linear_grid(t0: f64, t1: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(usage("--points must be >= 2"));
    }
    if !t0.is_finite() || !t1.is_finite() || t1 <= t0 {
        return Err(usage(format!("sweep range [{t0}, {t1}] is empty")));
    }
    Ok((0..points)
        .map(|i| t0 + (t1 - t0) * i as f64 / (points - 1) as f64)
        .collect())
}

fn positive(flag: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(usage(format!("{flag} must be > 0, got {v}")))
    }
}

fn simulate(cli: &Cli, sim: &Simulate, mut cfg: SimConfig) -> Result<()> {
    let (spec, contrast) = match sim {
        Simulate::Rabi(a) => {
            if let Some(mhz) = a.rabi_mhz {
                cfg.qubit.rabi = TAU * positive("--rabi-mhz", mhz)? * 1e6;
            }
            if let Some(khz) = a.detuning_khz {
                cfg.qubit.detuning = TAU * khz * 1e3;
            }
            let default_max = if cfg.qubit.rabi >= TAU * 1e6 {
                1.2
            } else {
                250.0
            };
            let t_max = positive("--t-max-us", a.t_max_us.unwrap_or(default_max))? * 1e-6;
            let mut grid = linear_grid(0.0, t_max, a.points)?;
            if let Some(ns) = a.mask_below_ns {
                grid.retain(|&t| t >= ns * 1e-9);
                if grid.is_empty() {
                    return Err(usage("--mask-below-ns removes every grid point"));
                }
            }
            let spec = SweepSpec::new(
                SequenceKind::Rabi { pulse: 0.0 },
                SweepParameter::PulseLength,
                grid,
                cfg.run.shots,
                cfg.run.seed,
            );
            (spec, false)
        }
        Simulate::Ramsey(a) => {
            cfg.qubit.rabi = FRAC_PI_2 / (positive("--pi2-us", a.pi2_us)? * 1e-6);
            cfg.qubit.detuning = TAU * a.detuning_khz * 1e3;
            let grid = linear_grid(0.0, positive("--t-max-us", a.t_max_us)? * 1e-6, a.points)?;
            let spec = SweepSpec::new(
                SequenceKind::Ramsey { gap: 0.0 },
                SweepParameter::GapTime,
                grid,
                cfg.run.shots,
                cfg.run.seed,
            );
            (spec, false)
        }
        Simulate::Echo(a) => {
            if let Some(khz) = a.detuning_khz {
                cfg.qubit.detuning = TAU * khz * 1e3;
            }
            let mut spec = match a.mode {
                EchoMode::Total => SweepSpec::new(
                    SequenceKind::Echo {
                        first_gap: 0.0,
                        second_gap: 0.0,
                    },
                    SweepParameter::EchoTotalTime,
                    linear_grid(0.0, positive("--t-max-ms", a.t_max_ms)? * 1e-3, a.points)?,
                    cfg.run.shots,
                    cfg.run.seed,
                ),
                EchoMode::Scan => {
                    let t = positive("--echo-T-ms", a.echo_t_ms)? * 1e-3;
                    let half = 0.5 * positive("--scan-us", a.scan_us)? * 1e-6;
                    SweepSpec::new(
                        SequenceKind::Echo {
                            first_gap: t,
                            second_gap: t,
                        },
                        SweepParameter::EchoT2,
                        linear_grid((t - half).max(0.0), t + half, a.points)?,
                        cfg.run.shots,
                        cfg.run.seed,
                    )
                }
            };
            if !a.contrast {
                spec.final_phase = Some(a.phase_deg.to_radians());
            }
            (spec, a.contrast)
        }
    };
    let flags = serde_json::to_value(cli)?;

    if contrast {
        let points = echo_contrast(&spec, &cfg, Execution::Parallel)?;
        let csv = contrast_csv(&points)?;
        if let Some(path) = &cli.out {
            std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
            let meta = serde_json::json!({
                "version": tweezer::runner::VERSION,
                "seed": spec.seed,
                "config_hash": cfg.hash(),
                "sweep": spec,
                "quantity": "contrast",
                "config": cfg.to_raw(),
                "flags": flags,
            });
            let mp = metadata_path(path);
            std::fs::write(&mp, serde_json::to_string_pretty(&meta)? + "\n")?;
        }
        if cli.json {
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({ "points": points }))?
            );
        } else if cli.out.is_none() {
            print!("{csv}");
        }
        return Ok(());
    }

    let mut result: ExperimentResult = run_experiment(&spec, &cfg, Execution::Parallel)?;
    result.metadata.flags = flags;
    if let Some(path) = &cli.out {
        tweezer::runner::write_results(&result, path)?;
    }
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&result)?);
    } else if cli.out.is_none() {
        print!("{}", results_csv(&result)?);
    }
    Ok(())
}

/// Configuration recorded next to a result file, if any.
fn sidecar_config(csv: &Path) -> Option<SimConfig> {
    let text = std::fs::read_to_string(metadata_path(csv)).ok()?;
    let value: serde_json::Value = serde_json::from_str(&text).ok()?;
    let raw: tweezer::RawConfig = serde_json::from_value(value.get("config")?.clone()).ok()?;
    SimConfig::from_raw(&raw).ok()
}

fn fit_command(cli: &Cli, args: &FitArgs, cfg: SimConfig) -> Result<()> {
    let data = FitData::from_csv(&args.input)?;
    if data.is_empty() {
        return Err(usage(format!("{} has no data rows", args.input.display())));
    }
    let opts = FitOptions::default();
    let cfg = if cli.config.is_some() {
        cfg
    } else {
        sidecar_config(&args.input).unwrap_or(cfg)
    };
    let rabi_model;
    let (report, model): (FitReport, &dyn FitModel) = match args.model {
        ModelKind::DampedRabi => {
            rabi_model = DampedRabiModel::from_config(&cfg);
            let baseline = args.baseline.unwrap_or(1.0 - cfg.detection.pushout_error);
            let f = fit_damped_rabi(&rabi_model, &data, baseline, &opts)?;
            (
                FitReport::damped_rabi(f, &rabi_model, data.len()),
                &rabi_model,
            )
        }
        ModelKind::Ramsey => (
            FitReport::ramsey(fit_ramsey(&data, &opts)?, data.len()),
            &RamseyFitModel,
        ),
        ModelKind::ExpDecay => (
            FitReport::exp_decay(fit_exp_decay(&data, args.baseline, &opts)?, data.len()),
            &ExpDecayModel,
        ),
    };
    if !report.fit.converged {
        log::warn!("fit did not converge; reporting the best point found");
    }
    if let Some(path) = &args.curve {
        let x0 = data.x[0];
        let x1 = data.x[data.len() - 1];
        let curve = curve_csv(model, &report.fit.params, x0, x1, 500)?;
        std::fs::write(path, curve).with_context(|| format!("writing {}", path.display()))?;
    }
    let json = serde_json::to_string_pretty(&report)? + "\n";
    if let Some(path) = &cli.out {
        std::fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
    }
    if cli.json {
        print!("{json}");
    } else {
        let f = &report.fit;
        let mut s = format!(
            "model {} ({} points), chi2 = {:.4}, converged = {}, iterations = {}\n",
            f.model, report.points, f.chi2, f.converged, f.iterations
        );
        for (i, name) in f.names.iter().enumerate() {
            match f.errors[i] {
                Some(e) => s += &format!("{name} = {:.8e} +- {:.3e}\n", f.params[i], e),
                None => s += &format!("{name} = {:.8e} (fixed)\n", f.params[i]),
            }
        }
        for (k, v) in &report.derived {
            s += &format!("{k} = {v:.6e}\n");
        }
        if !f.degenerate.is_empty() {
            s += &format!("degenerate: {}\n", f.degenerate.join(", "));
        }
        print!("{s}");
    }
    Ok(())
}
