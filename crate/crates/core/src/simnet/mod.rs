//! Deterministic discrete-event simulation of a mining network.
//!
//! A run processes events in `(time, seq)` order until the canonical chain
//! holds `block_budget` blocks. Identical configs give bit-identical
//! reports.

pub mod chain;
mod engine;
pub mod queue;
pub mod topology;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Algorithm, ConfigError, D2Init, SimConfig, SolveTimeModel};
use crate::difficulty::{DifficultyError, DifficultyState};
use crate::energy::{closed_form_pow, saving, EnergyError, EnergyLedger, EpochEnergy};
use crate::protocol::{Block, BlockId, MinerId, Phase, ProtocolError, RoundTag, SelectionMode};
use crate::stochastic::{finishing_order, HashPowerProfile, MiningRate, Purpose, RandomSource};

pub use chain::{ChainView, ForkRecord};
pub use queue::{EventKind, EventQueue, SimEvent};
pub use topology::TopologyModel;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("deadlock at t={at}: no events left with {canonical_blocks}/{budget} blocks")]
    Deadlock {
        at: f64,
        canonical_blocks: u64,
        budget: u64,
    },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Difficulty(#[from] DifficultyError),
    #[error(transparent)]
    Chain(#[from] chain::ChainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Start,
    Nonce,
    Block,
    Claim,
    Eta,
    Timeout,
    Reorg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub at: f64,
    pub miner: MinerId,
    pub from: Option<Phase>,
    pub to: Phase,
    pub height: u64,
    pub cause: Cause,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub first_block: BlockId,
    pub second_block: BlockId,
    pub first_producer: MinerId,
    pub second_producer: MinerId,
    pub second_tag: RoundTag,
    /// Network-wide claims for the canonical first-round block, in claim
    /// order, with the times they were found.
    pub runner_ups: Vec<MinerId>,
    pub announce_times: Vec<f64>,
    /// Shared-draw runs only: when the next finishers of the first-round
    /// race solved, measured from the winner, including those that never
    /// claimed because the round had already ended.
    pub latent_claims: Vec<f64>,
    pub first_interval: f64,
    pub second_interval: f64,
    pub energy: EpochEnergy,
}

impl EpochRecord {
    /// Time from the first to the `k`-th finisher after the winner. `None`
    /// without race data or when fewer than `k` miners could finish.
    pub fn latent_span(&self, k: usize) -> Option<f64> {
        if k == 0 {
            return None;
        }
        let first = *self.latent_claims.first()?;
        self.latent_claims.get(k - 1).map(|t| t - first)
    }

    pub fn timed_out(&self) -> bool {
        self.second_tag == RoundTag::SecondAfterTimeout
    }

    /// Time between the first and the `k`-th claim (or the last one if
    /// fewer were made).
    pub fn runnerup_span(&self, k: usize) -> f64 {
        let mut t = self.announce_times.clone();
        t.sort_by(f64::total_cmp);
        match (t.first(), t.get(k.min(t.len()).saturating_sub(1))) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub algorithm: Algorithm,
    pub replication: u64,
    pub seed: u64,
    pub lambda: f64,
    pub total_power: f64,
    pub profile: Vec<f64>,
    /// Canonical chain, height 0 first.
    pub blocks: Vec<Block>,
    /// All blocks ever produced, orphans included.
    pub blocks_produced: u64,
    pub epochs: Vec<EpochRecord>,
    pub forks: Vec<ForkRecord>,
    pub energy: EnergyLedger,
    pub d2_initial: f64,
    pub difficulty: DifficultyState,
    /// Canonical blocks tagged SECOND_AFTER_TIMEOUT.
    pub timeout_blocks: u64,
    /// Miners that left power-save because of the timeout.
    pub timeout_firings: u64,
    /// Second-round blocks from producers that never claimed a slot.
    pub violations: u64,
    /// Second-round blocks rejected because the claim was lost in a
    /// partition.
    pub missing_claim_rejections: u64,
    pub reorgs: u64,
    pub partitioned_epochs: Vec<u64>,
    pub end_time: f64,
    pub events_processed: u64,
    pub trace: Option<Vec<TransitionRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub blocks: u64,
    pub epochs: u64,
    pub e_pow: f64,
    pub mean_e_first: f64,
    pub mean_e_second: f64,
    pub saving_pct: f64,
    pub energy_per_block: f64,
    pub mean_interval: f64,
    pub mean_first_interval: f64,
    pub mean_second_interval: f64,
    pub forks_first: u64,
    pub forks_second: u64,
    pub fork_rate_first: f64,
    pub fork_rate_second: f64,
    pub timeout_epochs: u64,
    pub timeout_firings: u64,
    pub violations: u64,
    pub mean_runnerups: f64,
    pub mean_runnerup_span: f64,
    pub d1: f64,
    pub d2: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl SimReport {
    pub fn rate(&self) -> MiningRate {
        MiningRate::new(self.lambda).expect("validated at construction")
    }

    pub fn summary(&self) -> Summary {
        let e_pow = closed_form_pow(self.total_power, self.rate());
        let mean_e_first = mean(self.epochs.iter().map(|e| e.energy.first));
        let mean_e_second = mean(self.epochs.iter().map(|e| e.energy.second));
        let n_blocks = self.blocks.len() as u64;
        let first_heights = n_blocks.div_ceil(2);
        let second_heights = n_blocks / 2;
        let forks_first = self.forks.iter().filter(|f| f.height % 2 == 0).count() as u64;
        let forks_second = self.forks.len() as u64 - forks_first;
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Summary {
            algorithm: self.algorithm,
            blocks: n_blocks,
            epochs: self.epochs.len() as u64,
            e_pow,
            mean_e_first,
            mean_e_second,
            saving_pct: saving(e_pow, mean_e_first, mean_e_second).unwrap_or(f64::NAN),
            energy_per_block: self.energy.total() / n_blocks.max(1) as f64,
            mean_interval: self.blocks.last().map_or(0.0, |b| b.found_at) / n_blocks.max(1) as f64,
            mean_first_interval: mean(self.epochs.iter().map(|e| e.first_interval)),
            mean_second_interval: mean(self.epochs.iter().map(|e| e.second_interval)),
            forks_first,
            forks_second,
            fork_rate_first: ratio(forks_first, first_heights),
            fork_rate_second: ratio(forks_second, second_heights),
            timeout_epochs: self.epochs.iter().filter(|e| e.timed_out()).count() as u64,
            timeout_firings: self.timeout_firings,
            violations: self.violations,
            mean_runnerups: mean(self.epochs.iter().map(|e| e.runner_ups.len() as f64)),
            mean_runnerup_span: mean(self.epochs.iter().map(|e| e.runnerup_span(usize::MAX))),
            d1: self.difficulty.d1,
            d2: self.difficulty.d2,
        }
    }
}

/// Runner-up set power over `samples` simulated first rounds, returned as
/// the harmonic mean (the retarget rule averages block times, which scale
/// with `1 / sum(h)`). Propagation delay is ignored.
pub fn pilot_second_round_power(
    profile: &HashPowerProfile,
    rate: MiningRate,
    selection: SelectionMode,
    model: SolveTimeModel,
    samples: usize,
    rng: &mut RandomSource,
) -> f64 {
    let n = profile.len();
    let mut inv_sum = 0.0;
    for _ in 0..samples {
        let order = finishing_order(profile.fractions(), rng);
        let power = match selection {
            SelectionMode::Count { k } => profile.power_of(order[1..=k.min(n - 1)].iter().copied()),
            SelectionMode::TimeWindow { eta } => {
                let mut t = rng.unit_exponential() / rate.lambda();
                let t_w = t;
                let mut stopped = profile.fraction(order[0]);
                let mut first = None;
                let mut power = 0.0;
                for &m in &order[1..] {
                    let remaining = (1.0 - stopped).max(1e-300);
                    t = match model {
                        SolveTimeModel::SharedDraw => t_w / remaining,
                        SolveTimeModel::Memoryless => {
                            t + rng.unit_exponential() / (rate.lambda() * remaining)
                        }
                    };
                    let opened = *first.get_or_insert(t);
                    if t > opened + eta {
                        break;
                    }
                    power += profile.fraction(m);
                    stopped += profile.fraction(m);
                }
                power
            }
        };
        inv_sum += 1.0 / power;
    }
    samples as f64 / inv_sum
}

fn initial_d2(cfg: &SimConfig, profile: &HashPowerProfile, rate: MiningRate, rep: u64) -> f64 {
    match cfg.difficulty.d2_init {
        D2Init::Minimum => profile
            .fractions()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min),
        D2Init::Calibrated => {
            let mut rng = RandomSource::substream(cfg.seed, rep, 0, Purpose::Pilot);
            pilot_second_round_power(
                profile,
                rate,
                cfg.selection,
                cfg.solve_model,
                cfg.difficulty.pilot_samples,
                &mut rng,
            )
        }
    }
}

/// Runs replication 0 of `config`.
pub fn run_simulation(config: &SimConfig) -> Result<SimReport, SimError> {
    run_replication(config, 0)
}

pub fn run_replication(config: &SimConfig, replication: u64) -> Result<SimReport, SimError> {
    engine::Engine::new(config, replication)?.run()
}

/// All replications, run in parallel, returned in replication order.
pub fn run_replications(config: &SimConfig) -> Result<Vec<SimReport>, SimError> {
    (0..config.replications as u64)
        .into_par_iter()
        .map(|r| run_replication(config, r))
        .collect()
}
