//! `consensus-lab` command pipelines: simulate, certify and verify.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    diameter, fit_cutoff, fit_exponential, max_norm, mean, variance, window_contraction, window_log_slopes, DecayFit,
    Observable, CONSENSUS_LEVEL,
};
use crate::config::{ExperimentConfig, InitSet, Lambda2Request};
use crate::dynamics::{integrate_with_stops, rescale_dilation, Configuration, Kernel, Trajectory};
use crate::error::{Error, Result};
use crate::graphs::{is_balanced, BALANCE_TOL};
use crate::signals::{certify_eta, certify_lambda2, PersistenceReport, PiecewiseConstantSignal};

/// Slack allowed on monotone observables between consecutive samples.
pub const MONOTONE_SLACK: f64 = 1e-9;
/// Bound on barycenter drift for linear balanced runs.
pub const MEAN_DRIFT_TOL: f64 = 1e-9;
/// Slack on the log-variance slope against `-2 µ*`.
pub const SLOPE_SLACK: f64 = 1e-3;
/// Windows starting below this observable value are left out of the slope check.
pub const LOG_SLOPE_FLOOR: f64 = 1e-12;
/// Fits stop at the first sample below this fraction of the initial value.
pub const FIT_FLOOR: f64 = 1e-14;

#[derive(Debug, Parser)]
#[command(
    name = "consensus-lab",
    version,
    about = "Consensus over switching interaction graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one initial configuration and export the trajectory.
    Simulate(CommonArgs),
    /// Certify scrambling / connectivity persistence of the signal.
    Certify(CommonArgs),
    /// Sweep initial conditions and measure window contraction and decay rates.
    Verify(CommonArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override run.dt.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Override the sweep seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub relation: String,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, value: f64, relation: &str, threshold: f64) -> Self {
        let passed = match relation {
            "<=" => value <= threshold,
            "<" => value < threshold,
            ">=" => value >= threshold,
            ">" => value > threshold,
            _ => value == threshold,
        };
        Check {
            name: name.to_string(),
            value,
            threshold,
            relation: relation.to_string(),
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    pub checks: Vec<Check>,
    pub all_passed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Summary {
    fn new(command: &str, checks: Vec<Check>, notes: Vec<String>) -> Self {
        let all_passed = checks.iter().all(|c| c.passed);
        Summary {
            command: command.to_string(),
            checks,
            all_passed,
            notes,
        }
    }
}

/// Paths written by one command, plus its summary.
#[derive(Debug, Clone, Default)]
pub struct OutputBundle {
    pub dir: PathBuf,
    pub trajectory_files: Vec<PathBuf>,
    pub observables_file: Option<PathBuf>,
    pub persistence_reports: Vec<PathBuf>,
    pub contraction_report: Option<PathBuf>,
    pub decay_fit: Option<PathBuf>,
    pub summary_file: PathBuf,
    pub summary: Option<Summary>,
    pub verify: Option<VerifyReport>,
}

impl OutputBundle {
    pub fn all_passed(&self) -> bool {
        self.summary.as_ref().is_some_and(|s| s.all_passed)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    writeln!(w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    traj.write_csv(&mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn write_observables(path: &Path, traj: &Trajectory) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut body = String::from("t,diameter,variance\n");
    for (t, s) in traj.times.iter().zip(&traj.states) {
        body.push_str(&format!("{t:.16e},{:.16e},{:.16e}\n", diameter(s), variance(s)));
    }
    w.write_all(body.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// A configuration with every agent drawn uniformly from the Euclidean unit
/// ball. `(seed, index)` selects an independent ChaCha stream.
pub fn unit_ball_configuration(n: usize, d: usize, seed: u64, index: u64) -> Configuration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut positions = Vec::with_capacity(n * d);
    for _ in 0..n {
        loop {
            let p: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            if p.iter().map(|c| c * c).sum::<f64>() <= 1.0 {
                positions.extend(p);
                break;
            }
        }
    }
    Configuration::new(n, d, positions).expect("finite sample")
}

struct Prepared {
    cfg: ExperimentConfig,
    signal: PiecewiseConstantSignal,
    dt: f64,
    out: PathBuf,
}

fn prepare(args: &CommonArgs) -> Result<Prepared> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(dt) = args.dt {
        cfg.run.dt = Some(dt);
    }
    if let Some(seed) = args.seed {
        cfg.sweep.get_or_insert_with(Default::default).seed = seed;
    }
    let signal = cfg.validate()?;
    let dt = cfg.step(&signal);
    let out = args
        .out
        .clone()
        .or_else(|| cfg.outputs.dir.clone())
        .ok_or_else(|| Error::config("outputs.dir", "no output directory (use --out)"))?;
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;
    Ok(Prepared { cfg, signal, dt, out })
}

/// Multiples of `tau` in `(0, t_end)`; forced onto the sample grid so that
/// window endpoints coincide with samples.
fn window_stops(tau: f64, t_end: f64) -> Vec<f64> {
    let count = (t_end / tau).floor() as usize;
    (1..=count).map(|k| k as f64 * tau).filter(|&s| s < t_end).collect()
}

fn linear_balanced(kernel: &Kernel, sig: &PiecewiseConstantSignal) -> bool {
    matches!(kernel, Kernel::Constant { .. }) && sig.pieces().iter().all(|p| is_balanced(p, BALANCE_TOL))
}

/// Largest increase between consecutive samples of `f`.
fn max_increase(traj: &Trajectory, f: impl Fn(&Configuration) -> f64) -> f64 {
    let v: Vec<f64> = traj.states.iter().map(f).collect();
    v.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

fn mean_drift(traj: &Trajectory) -> f64 {
    let m0 = mean(&traj.states[0]);
    traj.states
        .iter()
        .map(|s| {
            mean(s)
                .iter()
                .zip(&m0)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

pub fn cmd_simulate(args: &CommonArgs) -> Result<OutputBundle> {
    let p = prepare(args)?;
    let cfg = &p.cfg;
    let x0 = match &cfg.initial {
        Some(x) => x.clone(),
        None => {
            let seed = cfg.sweep.as_ref().map_or(0, |s| s.seed);
            unit_ball_configuration(cfg.system.n, cfg.system.d, seed, 0)
        }
    };
    let stops = window_stops(cfg.window.tau, cfg.run.t_end);
    let traj = integrate_with_stops(
        &x0,
        &p.signal,
        &cfg.system.kernel,
        cfg.run.t_end,
        p.dt,
        cfg.run.sample_every,
        &stops,
    )?;

    let mut bundle = OutputBundle {
        dir: p.out.clone(),
        ..Default::default()
    };
    if cfg.outputs.trajectories {
        let path = p.out.join("trajectory.csv");
        write_trajectory(&path, &traj)?;
        bundle.trajectory_files.push(path);
    }
    let obs = p.out.join("observables.csv");
    write_observables(&obs, &traj)?;
    bundle.observables_file = Some(obs);

    let mut checks = vec![
        Check::new(
            "diameter_nonincreasing",
            max_increase(&traj, diameter),
            "<=",
            MONOTONE_SLACK,
        ),
        Check::new(
            "max_norm_nonincreasing",
            max_increase(&traj, max_norm),
            "<=",
            MONOTONE_SLACK,
        ),
    ];
    if linear_balanced(&cfg.system.kernel, &p.signal) {
        checks.push(Check::new("mean_drift", mean_drift(&traj), "<=", MEAN_DRIFT_TOL));
    }
    let summary = Summary::new("simulate", checks, vec![]);
    bundle.summary_file = p.out.join("summary.json");
    write_json(&bundle.summary_file, &summary)?;
    bundle.summary = Some(summary);
    Ok(bundle)
}

#[derive(Serialize)]
struct ErrorReport {
    kind: &'static str,
    error: String,
}

pub fn cmd_certify(args: &CommonArgs) -> Result<OutputBundle> {
    let p = prepare(args)?;
    let cfg = &p.cfg;
    let horizon = cfg.certify.horizon.unwrap_or(cfg.run.t_end);
    let mut bundle = OutputBundle {
        dir: p.out.clone(),
        ..Default::default()
    };
    let mut checks = Vec::new();
    let mut notes = Vec::new();

    let eta = certify_eta(&p.signal, cfg.window, horizon)?;
    let path = p.out.join("persistence_eta.json");
    write_json(&path, &eta)?;
    bundle.persistence_reports.push(path);
    checks.push(Check::new("eta_persistence", eta.infimum_value, ">=", cfg.window.mu));

    let balanced = p.signal.pieces().iter().all(|a| is_balanced(a, BALANCE_TOL));
    let want_lambda2 = match cfg.certify.lambda2 {
        Lambda2Request::Off => false,
        Lambda2Request::Auto => balanced,
        Lambda2Request::Required => true,
    };
    if want_lambda2 {
        let path = p.out.join("persistence_lambda2.json");
        match certify_lambda2(&p.signal, cfg.window, horizon) {
            Ok(r) => {
                write_json(&path, &r)?;
                checks.push(Check::new("lambda2_persistence", r.infimum_value, ">=", cfg.window.mu));
            }
            Err(e) => {
                write_json(
                    &path,
                    &ErrorReport {
                        kind: "connectivity",
                        error: e.to_string(),
                    },
                )?;
                return Err(e);
            }
        }
        bundle.persistence_reports.push(path);
    } else if !balanced {
        notes.push("signal is not balanced; connectivity persistence skipped".into());
    }

    let summary = Summary::new("certify", checks, notes);
    bundle.summary_file = p.out.join("summary.json");
    write_json(&bundle.summary_file, &summary)?;
    bundle.summary = Some(summary);
    Ok(bundle)
}

/// Outcome of one sweep member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub initial_diameter: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    pub kappa_hat: f64,
    pub all_strict: bool,
    pub windows: usize,
    /// Largest `ln(factor) / tau` over windows starting above [`LOG_SLOPE_FLOOR`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_log_slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus_at: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<DecayFit>,
    pub factors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub kind: Observable,
    pub tau: f64,
    pub worst_kappa_hat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_gamma: Option<f64>,
    pub worst_rms_log_residual: f64,
    pub all_strict_every_run: bool,
    pub eta: PersistenceReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<PersistenceReport>,
    pub runs: Vec<RunRecord>,
}

#[derive(Serialize)]
struct AnalysisEntry<'a> {
    index: usize,
    kind: Observable,
    kappa_hat: f64,
    factors: &'a [f64],
    fit: Option<DecayFit>,
}

fn verify_one(
    index: usize,
    x0: &Configuration,
    cfg: &ExperimentConfig,
    sig: &PiecewiseConstantSignal,
    dt: f64,
    stops: &[f64],
) -> Result<(RunRecord, Option<Trajectory>)> {
    let observable = cfg.verify.observable;
    let d0 = diameter(x0);
    if d0 == 0.0 {
        return Ok((
            RunRecord {
                index,
                initial_diameter: 0.0,
                skipped: Some("consensus at t=0".into()),
                kappa_hat: 0.0,
                all_strict: true,
                windows: 0,
                max_log_slope: None,
                consensus_at: Some(0.0),
                fit: None,
                factors: vec![],
            },
            None,
        ));
    }
    let raw = integrate_with_stops(
        x0,
        sig,
        &cfg.system.kernel,
        cfg.run.t_end,
        dt,
        cfg.run.sample_every,
        stops,
    )?;
    let traj = rescale_dilation(x0, &raw)?;
    let report = window_contraction(&traj, cfg.window.tau, observable)?;
    let values: Vec<f64> = traj.states.iter().map(|s| observable.eval(s)).collect();
    let cut = fit_cutoff(&values, FIT_FLOOR);
    let fit = if cut >= 3 && values[0] > CONSENSUS_LEVEL {
        Some(fit_exponential(&traj.times[..cut], &values[..cut])?)
    } else {
        None
    };
    let max_log_slope = window_log_slopes(&traj, cfg.window.tau, observable, LOG_SLOPE_FLOOR)?
        .into_iter()
        .map(|(_, s)| s)
        .reduce(f64::max);
    Ok((
        RunRecord {
            index,
            initial_diameter: d0,
            skipped: None,
            kappa_hat: report.kappa_hat,
            all_strict: report.all_strict,
            windows: report.factors.len(),
            max_log_slope,
            consensus_at: report.consensus_at,
            fit,
            factors: report.factors,
        },
        Some(traj),
    ))
}

pub fn cmd_verify(args: &CommonArgs) -> Result<OutputBundle> {
    let p = prepare(args)?;
    let cfg = &p.cfg;
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::config("sweep", "verify requires a sweep section"))?;
    let initials: Vec<Configuration> = match &sweep.init_set {
        InitSet::UnitBall => (0..sweep.num_initial)
            .map(|k| unit_ball_configuration(cfg.system.n, cfg.system.d, sweep.seed, k as u64))
            .collect(),
        InitSet::Explicit(list) => list.clone(),
    };
    let stops = window_stops(cfg.window.tau, cfg.run.t_end);

    let horizon = cfg.certify.horizon.unwrap_or(cfg.run.t_end);
    let eta = certify_eta(&p.signal, cfg.window, horizon)?;
    let lambda2 = if linear_balanced(&cfg.system.kernel, &p.signal) && cfg.certify.lambda2 != Lambda2Request::Off {
        Some(certify_lambda2(&p.signal, cfg.window, horizon)?)
    } else {
        None
    };

    let outcomes: Vec<Result<(RunRecord, Option<Trajectory>)>> = initials
        .par_iter()
        .enumerate()
        .map(|(k, x0)| verify_one(k, x0, cfg, &p.signal, p.dt, &stops))
        .collect();

    let mut bundle = OutputBundle {
        dir: p.out.clone(),
        ..Default::default()
    };
    let mut runs = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        let (record, traj) = outcome?;
        if let (true, Some(traj)) = (cfg.outputs.trajectories, traj) {
            let path = p.out.join(format!("trajectory_{:03}.csv", record.index));
            write_trajectory(&path, &traj)?;
            bundle.trajectory_files.push(path);
        }
        runs.push(record);
    }

    let active: Vec<&RunRecord> = runs.iter().filter(|r| r.skipped.is_none()).collect();
    let worst_kappa_hat = active.iter().map(|r| r.kappa_hat).fold(0.0, f64::max);
    let worst_gamma = active.iter().filter_map(|r| r.fit.map(|f| f.gamma)).reduce(f64::min);
    let worst_rms = active
        .iter()
        .filter_map(|r| r.fit.map(|f| f.rms_log_residual))
        .fold(0.0, f64::max);
    let all_strict_every_run = active.iter().all(|r| r.all_strict && r.windows > 0);
    let non_strict = active.iter().filter(|r| !(r.all_strict && r.windows > 0)).count();
    let mut notes: Vec<String> = runs
        .iter()
        .filter_map(|r| r.skipped.as_ref().map(|s| format!("run {}: {s}", r.index)))
        .collect();

    let mut checks = vec![
        Check::new("eta_persistence", eta.infimum_value, ">=", cfg.window.mu),
        Check::new("non_strict_runs", non_strict as f64, "==", 0.0),
        Check::new("worst_kappa_hat", worst_kappa_hat, "<", 1.0),
    ];
    if let Some(g) = worst_gamma {
        checks.push(Check::new("worst_gamma", g, ">", 0.0));
    } else {
        notes.push("no run produced a decay fit".into());
    }
    if let (Some(l2), Observable::Variance) = (&lambda2, cfg.verify.observable) {
        let slope = active
            .iter()
            .filter_map(|r| r.max_log_slope)
            .fold(f64::NEG_INFINITY, f64::max);
        let c = match cfg.system.kernel {
            Kernel::Constant { c } => c,
            Kernel::CuckerSmale { .. } => unreachable!("linear_balanced requires a constant kernel"),
        };
        checks.push(Check::new(
            "log_variance_slope",
            slope,
            "<=",
            -2.0 * c * l2.infimum_value + SLOPE_SLACK,
        ));
    }

    let verify = VerifyReport {
        kind: cfg.verify.observable,
        tau: cfg.window.tau,
        worst_kappa_hat,
        worst_gamma,
        worst_rms_log_residual: worst_rms,
        all_strict_every_run,
        eta,
        lambda2,
        runs,
    };

    let eta_path = p.out.join("persistence_eta.json");
    write_json(&eta_path, &verify.eta)?;
    bundle.persistence_reports.push(eta_path);
    if let Some(l2) = &verify.lambda2 {
        let path = p.out.join("persistence_lambda2.json");
        write_json(&path, l2)?;
        bundle.persistence_reports.push(path);
    }
    let contraction_path = p.out.join("contraction_report.json");
    let entries: Vec<AnalysisEntry> = verify
        .runs
        .iter()
        .map(|r| AnalysisEntry {
            index: r.index,
            kind: verify.kind,
            kappa_hat: r.kappa_hat,
            factors: &r.factors,
            fit: r.fit,
        })
        .collect();
    write_json(&contraction_path, &entries)?;
    bundle.contraction_report = Some(contraction_path);
    let fit_path = p.out.join("decay_fit.json");
    write_json(&fit_path, &verify)?;
    bundle.decay_fit = Some(fit_path);

    let summary = Summary::new("verify", checks, notes);
    bundle.summary_file = p.out.join("summary.json");
    write_json(&bundle.summary_file, &summary)?;
    bundle.summary = Some(summary);
    bundle.verify = Some(verify);
    Ok(bundle)
}

/// Runs the parsed command and maps the outcome to the exit-code contract:
/// 0 when every check passes, 2 when a check fails, 1 on input errors.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(bundle) => {
            if let Some(s) = &bundle.summary {
                for c in &s.checks {
                    println!(
                        "{} {}: {:.6e} {} {:.6e}",
                        if c.passed { "PASS" } else { "FAIL" },
                        c.name,
                        c.value,
                        c.relation,
                        c.threshold
                    );
                }
            }
            if bundle.all_passed() {
                0
            } else {
                2
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
