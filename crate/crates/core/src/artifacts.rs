//! On-disk results of a run or sweep.
//!
//! Every CSV is UTF-8 with LF line endings and a header row. Nothing here
//! depends on wall-clock time, so re-running a manifest reproduces the files
//! byte for byte.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SimConfig;
use crate::simnet::{SimReport, Summary};

pub const ENV_ARTIFACT_ROOT: &str = "GREENPOW_ARTIFACT_ROOT";
pub const ERROR_MARKER: &str = "ERROR";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ArtifactError> {
    let wrap = |source| ArtifactError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(wrap)?;
    for row in rows {
        w.serialize(row).map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))
}

/// Like [`write_csv`] but emits the header even with no rows.
fn write_csv_with_header<T: Serialize>(
    path: &Path,
    header: &[&str],
    rows: &[T],
) -> Result<(), ArtifactError> {
    if !rows.is_empty() {
        return write_csv(path, rows);
    }
    fs::write(path, format!("{}\n", header.join(","))).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRow {
    pub replication: u64,
    pub height: u64,
    pub block_id: u64,
    pub parent_id: Option<u64>,
    pub producer: usize,
    pub round_tag: String,
    pub target: String,
    pub found_at: f64,
}

pub const BLOCK_HEADER: &[&str] = &[
    "replication", "height", "block_id", "parent_id", "producer", "round_tag", "target", "found_at",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub replication: u64,
    pub epoch: u64,
    pub e_first: f64,
    pub e_second: f64,
    pub e_total: f64,
}

pub const ENERGY_HEADER: &[&str] = &["replication", "epoch", "e_first", "e_second", "e_total"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForkRow {
    pub replication: u64,
    pub height: u64,
    pub parent_id: Option<u64>,
    pub round_tag: String,
    /// Block ids separated by `;`.
    pub competing: String,
    pub resolved_winner: Option<u64>,
}

pub const FORK_HEADER: &[&str] =
    &["replication", "height", "parent_id", "round_tag", "competing", "resolved_winner"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub replication: u64,
    pub epoch: u64,
    pub first_block: u64,
    pub second_block: u64,
    pub first_producer: usize,
    pub second_producer: usize,
    pub second_tag: String,
    pub timed_out: bool,
    pub runner_ups: usize,
    pub runnerup_span: f64,
    pub first_interval: f64,
    pub second_interval: f64,
}

pub const EPOCH_HEADER: &[&str] = &[
    "replication", "epoch", "first_block", "second_block", "first_producer", "second_producer",
    "second_tag", "timed_out", "runner_ups", "runnerup_span", "first_interval", "second_interval",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRow {
    pub replication: u64,
    pub window: u64,
    pub track: String,
    pub at: f64,
    pub d1: f64,
    pub d2: f64,
    pub t_avg: Option<f64>,
    pub factor: f64,
}

pub const DIFFICULTY_HEADER: &[&str] =
    &["replication", "window", "track", "at", "d1", "d2", "t_avg", "factor"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub replication: u64,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub replications: usize,
    pub saving_pct_mean: f64,
    pub saving_pct_std: f64,
    pub fork_rate_first: f64,
    pub fork_rate_second: f64,
    pub timeout_epochs: u64,
    pub violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub runs: Vec<RunSummary>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: SimConfig,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, ArtifactError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn aggregate(reports: &[SimReport]) -> (Vec<RunSummary>, Aggregate) {
    let runs: Vec<RunSummary> = reports
        .iter()
        .map(|r| RunSummary {
            replication: r.replication,
            summary: r.summary(),
        })
        .collect();
    let n = runs.len().max(1) as f64;
    let savings: Vec<f64> = runs.iter().map(|r| r.summary.saving_pct).collect();
    let mean = savings.iter().sum::<f64>() / n;
    let var = if savings.len() > 1 {
        savings.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let sum_u = |f: fn(&Summary) -> u64| runs.iter().map(|r| f(&r.summary)).sum::<u64>();
    let first_heights: u64 = runs.iter().map(|r| r.summary.blocks.div_ceil(2)).sum();
    let second_heights: u64 = runs.iter().map(|r| r.summary.blocks / 2).sum();
    let rate = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let agg = Aggregate {
        replications: runs.len(),
        saving_pct_mean: mean,
        saving_pct_std: var.sqrt(),
        fork_rate_first: rate(sum_u(|s| s.forks_first), first_heights),
        fork_rate_second: rate(sum_u(|s| s.forks_second), second_heights),
        timeout_epochs: sum_u(|s| s.timeout_epochs),
        violations: sum_u(|s| s.violations),
    };
    (runs, agg)
}

pub const RUN_FILES: &[&str] = &[
    "blocks.csv",
    "energy.csv",
    "forks.csv",
    "epochs.csv",
    "difficulty.csv",
    "summary.json",
];

/// Writes the manifest first so a failed run still records how to repeat it.
pub fn write_manifest(dir: &Path, config: &SimConfig) -> Result<(), ArtifactError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config: config.clone(),
        files: RUN_FILES.iter().map(|s| s.to_string()).collect(),
    };
    write_json(&dir.join(MANIFEST), &manifest)
}

pub fn write_run(dir: &Path, reports: &[SimReport]) -> Result<(), ArtifactError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut blocks = Vec::new();
    let mut energy = Vec::new();
    let mut forks = Vec::new();
    let mut epochs = Vec::new();
    let mut difficulty = Vec::new();
    for r in reports {
        let rep = r.replication;
        blocks.extend(r.blocks.iter().map(|b| BlockRow {
            replication: rep,
            height: b.height,
            block_id: b.id.0,
            parent_id: b.parent.map(|p| p.0),
            producer: b.producer,
            round_tag: b.round_tag.as_str().to_string(),
            target: format!("{:?}", b.target_used),
            found_at: b.found_at,
        }));
        energy.extend(r.epochs.iter().map(|e| EnergyRow {
            replication: rep,
            epoch: e.epoch,
            e_first: e.energy.first,
            e_second: e.energy.second,
            e_total: e.energy.total(),
        }));
        forks.extend(r.forks.iter().map(|f| ForkRow {
            replication: rep,
            height: f.height,
            parent_id: f.parent.map(|p| p.0),
            round_tag: f.round_tag.as_str().to_string(),
            competing: f
                .competing
                .iter()
                .map(|id| id.0.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            resolved_winner: f.resolved_winner.map(|id| id.0),
        }));
        epochs.extend(r.epochs.iter().map(|e| EpochRow {
            replication: rep,
            epoch: e.epoch,
            first_block: e.first_block.0,
            second_block: e.second_block.0,
            first_producer: e.first_producer,
            second_producer: e.second_producer,
            second_tag: e.second_tag.as_str().to_string(),
            timed_out: e.timed_out(),
            runner_ups: e.runner_ups.len(),
            runnerup_span: e.runnerup_span(usize::MAX),
            first_interval: e.first_interval,
            second_interval: e.second_interval,
        }));
        difficulty.extend(r.difficulty.history.iter().map(|h| DifficultyRow {
            replication: rep,
            window: h.window,
            track: format!("{:?}", h.track),
            at: h.at,
            d1: h.d1,
            d2: h.d2,
            t_avg: h.t_avg,
            factor: h.factor,
        }));
    }
    write_csv_with_header(&dir.join("blocks.csv"), BLOCK_HEADER, &blocks)?;
    write_csv_with_header(&dir.join("energy.csv"), ENERGY_HEADER, &energy)?;
    write_csv_with_header(&dir.join("forks.csv"), FORK_HEADER, &forks)?;
    write_csv_with_header(&dir.join("epochs.csv"), EPOCH_HEADER, &epochs)?;
    write_csv_with_header(&dir.join("difficulty.csv"), DIFFICULTY_HEADER, &difficulty)?;
    let (runs, aggregate) = aggregate(reports);
    write_json(&dir.join("summary.json"), &SummaryFile { runs, aggregate })
}

pub fn write_error_marker(dir: &Path, message: &str) -> Result<(), ArtifactError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(ERROR_MARKER);
    fs::write(&path, format!("{message}\n")).map_err(io_err(&path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: usize,
    pub algorithm: String,
    pub miners: usize,
    pub k: Option<usize>,
    pub eta: Option<f64>,
    pub power: String,
    pub seed: u64,
    pub replications: usize,
    pub saving_pct: f64,
    pub saving_pct_std: f64,
    pub fork_rate_first: f64,
    pub fork_rate_second: f64,
    pub timeout_epochs: u64,
    pub violations: u64,
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), ArtifactError> {
    write_csv(path, rows)
}
