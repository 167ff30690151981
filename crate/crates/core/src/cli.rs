//! Command-line front end: `run`, `sweep` and `analyze`.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 when a
//! simulation or analysis fails after starting.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::censorship::{censorship_window, consecutive_runs};
use crate::analysis::eta::eta_study;
use crate::analysis::fork::{block_probability_per_unit, fork_probability, UnawareModel};
use crate::analysis::shares::{share_redistribution_with, BlockTrace, RedistributionTarget};
use crate::analysis::timeout::timeout_curve;
use crate::artifacts::{self, BlockRow, Manifest, SweepRow, ENV_ARTIFACT_ROOT};
use crate::config::{
    parse_duration, Algorithm, ConfigError, DelayModel, PowerSpec, Scenario, SimConfig,
    SolveTimeModel,
};
use crate::protocol::SelectionMode;
use crate::simnet::{run_replication, SimReport};
use crate::stochastic::{Concentration, MiningRate, RandomSource};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const ANALYSES: &[&str] = &["timeout-curve", "shares", "eta", "fork", "censorship"];
pub const SWEEP_KEYS: &[&str] = &["k", "eta", "miners", "concentration", "seed", "timeout", "lambda"];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "greenpow", version, about = "Green-PoW mining simulator and analyses")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one configuration, or a sweep when sweep axes are given.
    Run(RunArgs),
    /// Simulate the cartesian product of the sweep axes.
    Sweep(RunArgs),
    /// Analytic models and post-processing of traces and reports.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Pow,
    GreenPow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    PartitionRunnerups,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolveModelArg {
    SharedDraw,
    Memoryless,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON config file. Flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Re-run the config embedded in a manifest written by an earlier run.
    #[arg(long, conflicts_with = "config")]
    pub manifest: Option<PathBuf>,
    /// Output directory. Defaults to a directory under the artifact root.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = ENV_ARTIFACT_ROOT, default_value = "artifacts")]
    pub artifact_root: PathBuf,
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    /// Miner count; a list turns into a sweep axis.
    #[arg(long, value_delimiter = ',')]
    pub miners: Vec<usize>,
    /// COUNT(k) runner-up selection.
    #[arg(long, conflicts_with = "eta")]
    pub k: Option<usize>,
    /// TIME_WINDOW(eta) runner-up selection, e.g. `30s`.
    #[arg(long, value_parser = parse_duration)]
    pub eta: Option<f64>,
    /// Block budget.
    #[arg(long)]
    pub blocks: Option<u64>,
    /// Block rate per time unit.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replications: Option<u32>,
    /// Second-round timeout, e.g. `1380s` or `23min`.
    #[arg(long, value_parser = parse_duration)]
    pub timeout: Option<f64>,
    /// Constant propagation delay.
    #[arg(long, value_parser = parse_duration)]
    pub delay: Option<f64>,
    /// Fraction of miners holding half of the power.
    #[arg(long)]
    pub concentration: Option<f64>,
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,
    #[arg(long, value_enum)]
    pub solve_model: Option<SolveModelArg>,
    /// Freeze difficulty at its initial values.
    #[arg(long)]
    pub no_retarget: bool,
    /// Record every state transition.
    #[arg(long)]
    pub trace: bool,
    /// Sweep axis `key=a..b` or `key=v1,v2,...`, keys: k, eta, miners,
    /// concentration, seed, timeout, lambda. Repeatable.
    #[arg(long)]
    pub sweep: Vec<String>,
    /// Also write full run artifacts for every sweep point.
    #[arg(long)]
    pub point_artifacts: bool,
    /// Worker threads for replications and sweep points.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Proportional,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Exponential,
    Linear,
    Step,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// One of: timeout-curve, shares, eta, fork, censorship.
    pub name: Option<String>,
    #[arg(long)]
    pub timeout_curve: bool,
    /// Block trace CSV (`height,miner_id`) for the share analysis.
    #[arg(long, value_name = "TRACE")]
    pub shares: Option<PathBuf>,
    #[arg(long)]
    pub eta: bool,
    #[arg(long)]
    pub fork: bool,
    #[arg(long)]
    pub censorship: bool,
    /// Run directory whose blocks.csv feeds the censorship statistics.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.7, 0.8, 0.9])]
    pub p: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    /// Power distributions: `uniform` or a top-holder fraction such as `0.05`.
    #[arg(long, value_delimiter = ',', default_value = "uniform")]
    pub dist: Vec<String>,
    #[arg(long, default_value_t = 200)]
    pub miners: usize,
    #[arg(long, default_value_t = 20_000)]
    pub blocks: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "proportional")]
    pub target: TargetArg,
    #[arg(long, value_enum, default_value = "exponential")]
    pub model: ModelArg,
    /// Propagation time constants for the fork model.
    #[arg(long, value_delimiter = ',', default_values_t = [2.0])]
    pub param: Vec<f64>,
    /// Block probability per time unit; defaults to `1 - exp(-lambda)`.
    #[arg(long)]
    pub p_b: Option<f64>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(a) => run_command(&a, false),
        Command::Sweep(a) => run_command(&a, true),
        Command::Analyze(a) => analyze_command(&a),
    }
}

// ---- run / sweep ---------------------------------------------------------

pub fn resolve_config(args: &RunArgs) -> Result<SimConfig, CliError> {
    let mut cfg = if let Some(path) = &args.manifest {
        Manifest::load(path)
            .map_err(|e| CliError::Config(format!("manifest {}: {e}", path.display())))?
            .config
    } else if let Some(path) = &args.config {
        SimConfig::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    } else {
        SimConfig::default()
    };
    if let Some(a) = args.algorithm {
        cfg.algorithm = match a {
            AlgorithmArg::Pow => Algorithm::Pow,
            AlgorithmArg::GreenPow => Algorithm::GreenPow,
        };
    }
    if let [m] = args.miners[..] {
        cfg.miners = m;
    }
    if let Some(k) = args.k {
        cfg.selection = SelectionMode::Count { k };
    }
    if let Some(eta) = args.eta {
        cfg.selection = SelectionMode::TimeWindow { eta };
    }
    if let Some(b) = args.blocks {
        cfg.block_budget = b;
    }
    if let Some(l) = args.lambda {
        cfg.lambda = l;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    if let Some(t) = args.timeout {
        cfg.timeout = Some(t);
    }
    if let Some(d) = args.delay {
        cfg.topology.delay = DelayModel::Constant(d);
    }
    if let Some(c) = args.concentration {
        cfg.power = PowerSpec::Concentration(Concentration::new(c));
    }
    if let Some(ScenarioArg::PartitionRunnerups) = args.scenario {
        cfg.scenario = Some(Scenario::PartitionRunnerups {
            duration: None,
            every: 10,
            offset: 1,
        });
    }
    if let Some(m) = args.solve_model {
        cfg.solve_model = match m {
            SolveModelArg::SharedDraw => SolveTimeModel::SharedDraw,
            SolveModelArg::Memoryless => SolveTimeModel::Memoryless,
        };
    }
    if args.no_retarget {
        cfg.difficulty.window = None;
    }
    if args.trace {
        cfg.trace = true;
    }
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<String>,
}

/// Parses `key=a..b` (inclusive integer range) or `key=v1,v2,...`.
pub fn parse_sweep_axis(text: &str) -> Result<SweepAxis, CliError> {
    let bad = |m: &str| CliError::Config(format!("--sweep {text}: {m}"));
    let (key, spec) = text.split_once('=').ok_or_else(|| bad("expected key=values"))?;
    let key = key.trim();
    if !SWEEP_KEYS.contains(&key) {
        return Err(bad(&format!("unknown key, expected one of {}", SWEEP_KEYS.join(", "))));
    }
    let values: Vec<String> = if let Some((a, b)) = spec.split_once("..") {
        let a: i64 = a.trim().parse().map_err(|_| bad("range bounds must be integers"))?;
        let b: i64 = b.trim().parse().map_err(|_| bad("range bounds must be integers"))?;
        if b < a {
            return Err(bad("empty range"));
        }
        (a..=b).map(|v| v.to_string()).collect()
    } else {
        spec.split(',').map(|v| v.trim().to_string()).collect()
    };
    if values.iter().any(String::is_empty) {
        return Err(bad("empty value"));
    }
    Ok(SweepAxis {
        key: key.to_string(),
        values,
    })
}

fn apply_axis(cfg: &mut SimConfig, key: &str, value: &str) -> Result<(), CliError> {
    let bad = || CliError::Config(format!("sweep value {key}={value} does not parse"));
    match key {
        "k" => cfg.selection = SelectionMode::Count { k: value.parse().map_err(|_| bad())? },
        "eta" => {
            cfg.selection = SelectionMode::TimeWindow {
                eta: parse_duration(value).map_err(|_| bad())?,
            }
        }
        "miners" => cfg.miners = value.parse().map_err(|_| bad())?,
        "concentration" => {
            cfg.power = PowerSpec::Concentration(Concentration::new(value.parse().map_err(|_| bad())?))
        }
        "seed" => cfg.seed = value.parse().map_err(|_| bad())?,
        "timeout" => cfg.timeout = Some(parse_duration(value).map_err(|_| bad())?),
        "lambda" => cfg.lambda = value.parse().map_err(|_| bad())?,
        _ => return Err(bad()),
    }
    Ok(())
}

/// Cartesian product of the axes, first axis outermost.
pub fn expand_sweep(base: &SimConfig, axes: &[SweepAxis]) -> Result<Vec<SimConfig>, CliError> {
    let mut points = vec![base.clone()];
    for axis in axes {
        let mut next = Vec::with_capacity(points.len() * axis.values.len());
        for p in &points {
            for v in &axis.values {
                let mut c = p.clone();
                apply_axis(&mut c, &axis.key, v)?;
                next.push(c);
            }
        }
        points = next;
    }
    Ok(points)
}

fn sweep_axes(args: &RunArgs) -> Result<Vec<SweepAxis>, CliError> {
    let mut axes = args
        .sweep
        .iter()
        .map(|s| parse_sweep_axis(s))
        .collect::<Result<Vec<_>, _>>()?;
    if args.miners.len() > 1 {
        axes.push(SweepAxis {
            key: "miners".into(),
            values: args.miners.iter().map(|m| m.to_string()).collect(),
        });
    }
    Ok(axes)
}

fn run_command(args: &RunArgs, require_sweep: bool) -> Result<(), CliError> {
    if let Some(w) = args.workers {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global();
    }
    let base = resolve_config(args)?;
    let axes = sweep_axes(args)?;
    if axes.is_empty() {
        if require_sweep {
            return Err(CliError::Config("sweep needs at least one --sweep axis or a --miners list".into()));
        }
        base.validate()?;
        let dir = args
            .out
            .clone()
            .unwrap_or_else(|| args.artifact_root.join(format!("run-{}", base.seed)));
        let reports = run_point(&base, &dir)?;
        let (_, agg) = artifacts::aggregate(&reports);
        let mut so = io::stdout().lock();
        // A closed stdout is not a failed run.
        let _ = writeln!(so, "{}", serde_json::to_string_pretty(&agg).map_err(runtime)?);
        let _ = writeln!(so, "artifacts: {}", dir.display());
        return Ok(());
    }
    let points = expand_sweep(&base, &axes)?;
    for (i, p) in points.iter().enumerate() {
        p.validate()
            .map_err(|e| CliError::Config(format!("sweep point {i}: {e}")))?;
    }
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| args.artifact_root.join(format!("sweep-{}", base.seed)));
    run_sweep(&base, &axes, &points, &dir, args.point_artifacts)?;
    let _ = writeln!(
        io::stdout().lock(),
        "{} sweep points: {}",
        points.len(),
        dir.join("sweep.csv").display()
    );
    Ok(())
}

/// Runs every replication of `cfg` and writes its artifacts to `dir`. On
/// failure the finished replications are still written, next to an error
/// marker.
pub fn run_point(cfg: &SimConfig, dir: &Path) -> Result<Vec<SimReport>, CliError> {
    artifacts::write_manifest(dir, cfg).map_err(runtime)?;
    info!("running {} replication(s) into {}", cfg.replications, dir.display());
    let results: Vec<_> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| run_replication(cfg, r))
        .collect();
    let mut reports = Vec::new();
    let mut failure = None;
    for res in results {
        match res {
            Ok(r) => reports.push(r),
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }
    artifacts::write_run(dir, &reports).map_err(runtime)?;
    if let Some(e) = failure {
        artifacts::write_error_marker(dir, &e.to_string()).map_err(runtime)?;
        return Err(runtime(e));
    }
    Ok(reports)
}

fn power_label(p: &PowerSpec) -> String {
    crate::analysis::eta::distribution_label(p)
}

#[derive(Serialize)]
struct SweepManifest<'a> {
    tool: &'static str,
    version: &'static str,
    base: &'a SimConfig,
    axes: Vec<(String, Vec<String>)>,
    points: usize,
}

pub fn run_sweep(
    base: &SimConfig,
    axes: &[SweepAxis],
    points: &[SimConfig],
    dir: &Path,
    point_artifacts: bool,
) -> Result<Vec<SweepRow>, CliError> {
    std::fs::create_dir_all(dir).map_err(runtime)?;
    let manifest = SweepManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        base,
        axes: axes.iter().map(|a| (a.key.clone(), a.values.clone())).collect(),
        points: points.len(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(runtime)?;
    text.push('\n');
    std::fs::write(dir.join("sweep_manifest.json"), text).map_err(runtime)?;

    let results: Vec<Result<SweepRow, CliError>> = points
        .par_iter()
        .enumerate()
        .map(|(i, cfg)| {
            let reports = if point_artifacts {
                run_point(cfg, &dir.join(format!("point-{i:04}")))?
            } else {
                (0..cfg.replications as u64)
                    .map(|r| run_replication(cfg, r))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(runtime)?
            };
            let (_, agg) = artifacts::aggregate(&reports);
            let (k, eta) = match cfg.selection {
                SelectionMode::Count { k } => (Some(k), None),
                SelectionMode::TimeWindow { eta } => (None, Some(eta)),
            };
            Ok(SweepRow {
                point: i,
                algorithm: cfg.algorithm.as_str().to_string(),
                miners: cfg.miners,
                k,
                eta,
                power: power_label(&cfg.power),
                seed: cfg.seed,
                replications: agg.replications,
                saving_pct: agg.saving_pct_mean,
                saving_pct_std: agg.saving_pct_std,
                fork_rate_first: agg.fork_rate_first,
                fork_rate_second: agg.fork_rate_second,
                timeout_epochs: agg.timeout_epochs,
                violations: agg.violations,
            })
        })
        .collect();
    let mut rows = Vec::new();
    let mut failure = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                warn!("sweep point {i} failed: {e}");
                failure.get_or_insert(format!("sweep point {i}: {e}"));
            }
        }
    }
    artifacts::write_sweep(&dir.join("sweep.csv"), &rows).map_err(runtime)?;
    if let Some(msg) = failure {
        artifacts::write_error_marker(dir, &msg).map_err(runtime)?;
        return Err(CliError::Runtime(msg));
    }
    Ok(rows)
}

// ---- analyze -------------------------------------------------------------

fn selected_analysis(a: &AnalyzeArgs) -> Result<&'static str, CliError> {
    let mut chosen: Vec<&'static str> = Vec::new();
    if let Some(name) = &a.name {
        match ANALYSES.iter().find(|n| **n == name.as_str()) {
            Some(n) => chosen.push(n),
            None => {
                return Err(CliError::Config(format!(
                    "unknown analysis '{name}', valid names: {}",
                    ANALYSES.join(", ")
                )))
            }
        }
    }
    for (flag, name) in [
        (a.timeout_curve, "timeout-curve"),
        (a.shares.is_some(), "shares"),
        (a.eta, "eta"),
        (a.fork, "fork"),
        (a.censorship, "censorship"),
    ] {
        if flag && !chosen.contains(&name) {
            chosen.push(name);
        }
    }
    match chosen[..] {
        [one] => Ok(one),
        [] => Err(CliError::Config(format!(
            "no analysis selected, valid names: {}",
            ANALYSES.join(", ")
        ))),
        _ => Err(CliError::Config("select exactly one analysis".into())),
    }
}

fn emit<T: Serialize>(out: Option<&Path>, rows: &[T]) -> Result<(), CliError> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(runtime)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    for r in rows {
        match w.serialize(r) {
            Err(e) if matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == io::ErrorKind::BrokenPipe) => {
                return Ok(())
            }
            other => other.map_err(runtime)?,
        }
    }
    match w.flush() {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => other.map_err(runtime),
    }
}

pub fn parse_distribution(text: &str) -> Result<PowerSpec, CliError> {
    let t = text.trim();
    let top = if t == "uniform" {
        0.5
    } else {
        let v = t.strip_prefix("top").unwrap_or(t);
        let (v, scale) = match v.strip_suffix('%') {
            Some(p) => (p, 0.01),
            None => (v, 1.0),
        };
        v.parse::<f64>()
            .map(|x| x * scale)
            .map_err(|_| CliError::Config(format!("distribution '{text}': use uniform or a fraction")))?
    };
    Ok(PowerSpec::Concentration(Concentration::new(top)))
}

#[derive(Serialize)]
struct ForkRow {
    model: &'static str,
    param: f64,
    integral: f64,
    p_b: f64,
    fork_probability: f64,
}

#[derive(Serialize)]
struct CensorshipRow {
    algorithm: &'static str,
    k: u64,
    window: f64,
}

#[derive(Serialize)]
struct ProducerRunRow {
    producer: usize,
    longest_run: usize,
    repeated_runs: usize,
    window: f64,
}

fn analyze_command(a: &AnalyzeArgs) -> Result<(), CliError> {
    let name = selected_analysis(a)?;
    let rate = || MiningRate::new(a.lambda).map_err(|e| CliError::Config(format!("--lambda: {e}")));
    let out = a.out.as_deref();
    match name {
        "timeout-curve" => {
            let rows = timeout_curve(rate()?, &a.p).map_err(|e| CliError::Config(e.to_string()))?;
            emit(out, &rows)
        }
        "shares" => {
            let path = a
                .shares
                .clone()
                .ok_or_else(|| CliError::Config("shares needs --shares TRACE".into()))?;
            let trace = BlockTrace::from_path(&path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let target = match a.target {
                TargetArg::Proportional => RedistributionTarget::Proportional,
                TargetArg::Uniform => RedistributionTarget::Uniform,
            };
            let mut rng = RandomSource::new(a.seed, 0);
            let r = share_redistribution_with(&trace, &mut rng, target).map_err(runtime)?;
            emit(out, &r.rows)
        }
        "eta" => {
            let ks = if a.k.is_empty() { vec![3, 5, 10, 15, 20] } else { a.k.clone() };
            let powers = a
                .dist
                .iter()
                .map(|d| parse_distribution(d))
                .collect::<Result<Vec<_>, _>>()?;
            let base = SimConfig {
                miners: a.miners,
                block_budget: a.blocks,
                lambda: a.lambda,
                seed: a.seed,
                ..SimConfig::default()
            };
            for p in &powers {
                let mut c = base.clone();
                c.power = p.clone();
                c.selection = SelectionMode::Count { k: *ks.iter().max().unwrap_or(&1) };
                c.validate()?;
            }
            let rows = eta_study(&base, &ks, &powers).map_err(runtime)?;
            emit(out, &rows)
        }
        "fork" => {
            let p_b = match a.p_b {
                Some(p) => p,
                None => block_probability_per_unit(rate()?),
            };
            let mut rows = Vec::new();
            for &param in &a.param {
                let (label, model) = match a.model {
                    ModelArg::Exponential => ("exponential", UnawareModel::Exponential { tau: param }),
                    ModelArg::Linear => ("linear", UnawareModel::Linear { t: param }),
                    ModelArg::Step => ("step", UnawareModel::Step { t: param }),
                };
                let pr = fork_probability(model, p_b).map_err(|e| CliError::Config(e.to_string()))?;
                rows.push(ForkRow {
                    model: label,
                    param,
                    integral: model.integral(),
                    p_b,
                    fork_probability: pr,
                });
            }
            emit(out, &rows)
        }
        "censorship" => {
            let rate = rate()?;
            if let Some(dir) = &a.report {
                let producers = read_canonical_producers(&dir.join("blocks.csv"))?;
                let stats = consecutive_runs(&producers);
                let rows: Vec<ProducerRunRow> = stats
                    .longest
                    .iter()
                    .map(|(&p, &l)| ProducerRunRow {
                        producer: p,
                        longest_run: l,
                        repeated_runs: stats.repeated_runs.get(&p).copied().unwrap_or(0),
                        window: stats.window_of(&p, rate),
                    })
                    .collect();
                return emit(out, &rows);
            }
            let ks: Vec<u64> = if a.k.is_empty() {
                (1..=6).collect()
            } else {
                a.k.iter().map(|&k| k as u64).collect()
            };
            let mut rows = Vec::new();
            for alg in [Algorithm::Pow, Algorithm::GreenPow] {
                for &k in &ks {
                    rows.push(CensorshipRow {
                        algorithm: alg.as_str(),
                        k,
                        window: censorship_window(k, rate, alg)
                            .map_err(|e| CliError::Config(e.to_string()))?,
                    });
                }
            }
            emit(out, &rows)
        }
        _ => unreachable!("selected_analysis returns a known name"),
    }
}

/// Producers of replication 0 in height order.
fn read_canonical_producers(path: &Path) -> Result<Vec<usize>, CliError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<BlockRow> = rdr
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    rows.retain(|r| r.replication == 0);
    rows.sort_by_key(|r| r.height);
    Ok(rows.into_iter().map(|r| r.producer).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_axis_parsing() {
        let a = parse_sweep_axis("k=1..10").unwrap();
        assert_eq!(a.values.len(), 10);
        let b = parse_sweep_axis("miners=100,200").unwrap();
        assert_eq!(b.values, vec!["100", "200"]);
        assert!(parse_sweep_axis("nope=1").is_err());
        assert!(parse_sweep_axis("k=5..1").is_err());
        assert!(parse_sweep_axis("k").is_err());
    }

    #[test]
    fn cartesian_product() {
        let axes = [
            parse_sweep_axis("k=1..10").unwrap(),
            parse_sweep_axis("miners=100,200,300").unwrap(),
        ];
        let pts = expand_sweep(&SimConfig::default(), &axes).unwrap();
        assert_eq!(pts.len(), 30);
        assert_eq!(pts[0].selection, SelectionMode::Count { k: 1 });
        assert_eq!(pts[2].miners, 300);
        assert_eq!(pts[29].selection, SelectionMode::Count { k: 10 });
    }

    #[test]
    fn distributions() {
        assert_eq!(
            parse_distribution("uniform").unwrap(),
            PowerSpec::Concentration(Concentration::new(0.5))
        );
        assert_eq!(
            parse_distribution("top5%").unwrap(),
            PowerSpec::Concentration(Concentration::new(0.05))
        );
        assert!(parse_distribution("many").is_err());
    }
}
