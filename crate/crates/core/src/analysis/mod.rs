//! Post-hoc analytics over simulation reports and block traces.

pub mod censorship;
pub mod eta;
pub mod fork;
pub mod shares;
pub mod timeout;

use thiserror::Error;

pub use censorship::{censorship_window, consecutive_runs, RunStats};
pub use eta::{eta_study, EtaPoint};
pub use fork::{fork_probability, fork_probability_with, UnawareModel};
pub use shares::{share_redistribution, BlockTrace, Redistribution, ShareRow};
pub use timeout::{timeout_curve, TimeoutPoint};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("probability must lie in [0, 1), got {0}")]
    InvalidProbability(f64),
    #[error("invalid unaware-miner model: {0}")]
    InvalidModel(String),
    #[error("quadrature did not reach the requested accuracy")]
    Quadrature,
    #[error("k must be >= 1")]
    InvalidK,
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("empty trace")]
    EmptyTrace,
    #[error("no miner is left to receive redistributed blocks")]
    NoRedistributionTarget,
    #[error("trace csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sim(#[from] crate::simnet::SimError),
}
