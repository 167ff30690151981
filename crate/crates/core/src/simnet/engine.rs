//! The event loop.
//!
//! Each miner owns a protocol state, at most one pending nonce event and a
//! local view: which blocks it has seen and which runner-up claims it has
//! heard. Energy is integrated lazily: whenever a miner's state changes,
//! the interval since its last change is booked at its hash power.

use std::collections::{BTreeMap, HashMap};

use crate::config::{Algorithm, Partition, Scenario, SimConfig, SolveTimeModel};
use crate::difficulty::{DifficultyState, Track};
use crate::energy::{EnergyLedger, Round};
use crate::protocol::{
    baseline_pow_step, Block, BlockDecision, BlockId, Emission, MinerId, MinerState, Phase,
    PowEvent, PowMinerState, ProtocolParams, RejectReason, RoundTag, RunnerUpSet, SelectionMode,
};
use crate::stochastic::{finishing_order, HashPowerProfile, MiningRate, Purpose, RandomSource};

use super::chain::{compare_tips, ChainView};
use super::queue::{Claim, EventKey, EventKind, EventQueue};
use super::topology::TopologyModel;
use super::{Cause, EpochRecord, SimError, SimReport, TransitionRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
struct PuzzleKey {
    parent: Option<BlockId>,
    height: u64,
    track: Track,
}

#[derive(Debug)]
struct Clock {
    key: Option<EventKey>,
    puzzle: PuzzleKey,
    difficulty: f64,
}

#[derive(Debug, Clone, Copy)]
struct Activity {
    since: f64,
    epoch: u64,
    round: Round,
}

#[derive(Debug, Clone, Copy)]
enum Machine {
    Green(MinerState),
    Pow(PowMinerState),
}

impl Machine {
    fn head(&self) -> Option<BlockId> {
        match self {
            Machine::Green(s) => s.chain_head,
            Machine::Pow(s) => s.chain_head,
        }
    }
}

struct MinerRt {
    machine: Machine,
    rng: RandomSource,
    clock: Option<Clock>,
    activity: Option<Activity>,
    known: Vec<u64>,
    local_sets: HashMap<BlockId, RunnerUpSet>,
    pending: Vec<BlockId>,
}

impl MinerRt {
    fn knows(&self, id: BlockId) -> bool {
        let i = id.0 as usize;
        self.known
            .get(i / 64)
            .is_some_and(|w| w & (1 << (i % 64)) != 0)
    }

    fn learn(&mut self, id: BlockId) {
        let i = id.0 as usize;
        if self.known.len() <= i / 64 {
            self.known.resize(i / 64 + 1, 0);
        }
        self.known[i / 64] |= 1 << (i % 64);
    }
}

/// Solve times of every miner for one shared-draw round, as offsets from
/// the moment each miner starts on the puzzle.
struct Race {
    /// Empty for a race that started while the network was split: a shared
    /// draw assumes everybody mines the same puzzle, so each miner then
    /// keeps its own exponential clock instead.
    offsets: Vec<f64>,
    difficulty: f64,
}

fn build_race(
    profile: &HashPowerProfile,
    rate: MiningRate,
    difficulty: f64,
    rng: &mut RandomSource,
) -> Race {
    let t_w = rng.unit_exponential() * difficulty / rate.lambda();
    let order = finishing_order(profile.fractions(), rng);
    let mut offsets = vec![f64::INFINITY; profile.len()];
    let mut stopped = 0.0;
    for &m in &order {
        let remaining = 1.0 - stopped;
        if remaining > 1e-12 {
            offsets[m] = t_w / remaining;
        }
        stopped += profile.fraction(m);
    }
    Race {
        offsets,
        difficulty,
    }
}

/// Offsets of the `len` finishers after the winner, relative to the winner.
fn latent_offsets(offsets: &[f64], len: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = offsets.iter().copied().filter(|t| t.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let first = sorted.first().copied().unwrap_or(0.0);
    sorted.iter().skip(1).take(len).map(|t| t - first).collect()
}

pub(super) struct Engine {
    cfg: SimConfig,
    replication: u64,
    rate: MiningRate,
    params: ProtocolParams,
    profile: HashPowerProfile,
    now: f64,
    queue: EventQueue,
    chain: ChainView,
    topology: TopologyModel,
    miners: Vec<MinerRt>,
    global_sets: BTreeMap<BlockId, RunnerUpSet>,
    difficulty: DifficultyState,
    d2_initial: f64,
    ledger: EnergyLedger,
    races: HashMap<(Option<BlockId>, u64), Race>,
    /// Per first-round race: solve offsets of the next finishers after the
    /// winner, whether or not they got to claim.
    latent_claims: HashMap<(Option<BlockId>, u64), Vec<f64>>,
    race_rng: RandomSource,
    retarget_pending: [bool; 2],
    done: bool,
    events: u64,
    timeout_firings: u64,
    violations: u64,
    missing_claim_rejections: u64,
    reorgs: u64,
    partitioned_epochs: Vec<u64>,
    trace: Option<Vec<TransitionRecord>>,
}

impl Engine {
    pub(super) fn new(cfg: &SimConfig, replication: u64) -> Result<Self, SimError> {
        cfg.validate()?;
        let rate = cfg.rate()?;
        let profile = cfg.profile(replication)?;
        let params = cfg.params();
        let d2 = match cfg.algorithm {
            Algorithm::Pow => 1.0,
            Algorithm::GreenPow => super::initial_d2(cfg, &profile, rate, replication),
        };
        let difficulty = DifficultyState::new(1.0, d2, cfg.difficulty.window, rate)?;
        let miners = (0..cfg.miners)
            .map(|i| MinerRt {
                machine: match cfg.algorithm {
                    Algorithm::GreenPow => Machine::Green(MinerState::new(i)),
                    Algorithm::Pow => Machine::Pow(PowMinerState::new(i)),
                },
                rng: RandomSource::substream(cfg.seed, replication, i as u64, Purpose::MinerClock),
                clock: None,
                activity: None,
                known: Vec::new(),
                local_sets: HashMap::new(),
                pending: Vec::new(),
            })
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            replication,
            rate,
            params,
            now: 0.0,
            queue: EventQueue::new(),
            chain: ChainView::new(),
            topology: TopologyModel::new(&cfg.topology),
            miners,
            global_sets: BTreeMap::new(),
            difficulty,
            d2_initial: d2,
            ledger: EnergyLedger::new(cfg.miners, cfg.total_power),
            races: HashMap::new(),
            latent_claims: HashMap::new(),
            race_rng: RandomSource::substream(cfg.seed, replication, 0, Purpose::Race),
            retarget_pending: [false; 2],
            done: false,
            events: 0,
            timeout_firings: 0,
            violations: 0,
            missing_claim_rejections: 0,
            reorgs: 0,
            partitioned_epochs: Vec::new(),
            trace: cfg.trace.then(Vec::new),
            profile,
        })
    }

    pub(super) fn run(mut self) -> Result<SimReport, SimError> {
        for p in &self.cfg.topology.partitions {
            self.queue.schedule(p.end, EventKind::PartitionHeal);
        }
        for m in 0..self.miners.len() {
            if let Machine::Green(s) = self.miners[m].machine {
                self.record(m, None, &s, Cause::Start);
            }
            self.sync(m)?;
        }
        while !self.done {
            let Some(ev) = self.queue.pop() else {
                return Err(SimError::Deadlock {
                    at: self.now,
                    canonical_blocks: self.chain.canonical_chain().len() as u64,
                    budget: self.cfg.block_budget,
                });
            };
            self.now = ev.at;
            self.events += 1;
            self.handle(ev.kind)?;
        }
        for m in 0..self.miners.len() {
            self.settle(m)?;
        }
        Ok(self.report())
    }

    fn handle(&mut self, kind: EventKind) -> Result<(), SimError> {
        match kind {
            EventKind::NonceFound { miner } => self.on_nonce(miner),
            EventKind::BlockDelivery { block, recipients } => {
                for m in recipients {
                    self.receive_block(m, block)?;
                }
                Ok(())
            }
            EventKind::RunnerupDelivery { claim, recipients } => {
                for m in recipients {
                    self.receive_claim(m, claim)?;
                }
                Ok(())
            }
            EventKind::TimeoutExpiry { miner } => self.on_timeout(miner),
            EventKind::EtaExpiry { miner } => {
                if let Machine::Green(s) = self.miners[miner].machine {
                    if s.eta_deadline == Some(self.now) {
                        self.set_green(miner, s.on_eta_expiry(self.now), Cause::Eta)?;
                    }
                }
                Ok(())
            }
            EventKind::Retarget { track } => {
                self.retarget_pending[track_index(track)] = false;
                if self.difficulty.window_full(track) {
                    self.difficulty.retarget(track, self.now);
                }
                Ok(())
            }
            EventKind::PartitionTrigger { first_block } => {
                self.isolate_runnerups(first_block);
                Ok(())
            }
            EventKind::PartitionHeal => self.resync(),
        }
    }

    // ---- mining ----------------------------------------------------------

    fn derive(&self, m: MinerId) -> (Option<(u64, Round)>, Option<PuzzleKey>) {
        match self.miners[m].machine {
            Machine::Green(s) => {
                let h = s.current_height;
                match s.phase {
                    Phase::MiningR1 => (
                        Some((h / 2, Round::First)),
                        Some(PuzzleKey {
                            parent: s.chain_head,
                            height: h,
                            track: Track::D1,
                        }),
                    ),
                    Phase::ContinueForRunnerUp => {
                        let first = s.chain_head.expect("continuing on a first-round block");
                        (
                            Some((h / 2, Round::First)),
                            Some(PuzzleKey {
                                parent: self.chain.block(first).parent,
                                height: h - 1,
                                track: Track::D1,
                            }),
                        )
                    }
                    Phase::MiningR2 => (
                        Some((h / 2, Round::Second)),
                        Some(PuzzleKey {
                            parent: s.chain_head,
                            height: h,
                            track: if s.timed_out && !s.is_runner_up {
                                Track::D1
                            } else {
                                Track::D2
                            },
                        }),
                    ),
                    Phase::PowerSave => (None, None),
                }
            }
            Machine::Pow(s) => {
                let h = s.current_height;
                let round = if h % 2 == 0 { Round::First } else { Round::Second };
                (
                    Some((h / 2, round)),
                    Some(PuzzleKey {
                        parent: s.chain_head,
                        height: h,
                        track: Track::D1,
                    }),
                )
            }
        }
    }

    fn settle(&mut self, m: MinerId) -> Result<(), SimError> {
        if let Some(a) = self.miners[m].activity.as_mut() {
            let dt = self.now - a.since;
            let (epoch, round) = (a.epoch, a.round);
            a.since = self.now;
            self.ledger
                .integrate(m, self.profile.fraction(m), dt, epoch, round)?;
        }
        Ok(())
    }

    /// Books energy up to now and brings the miner's clock in line with
    /// its state.
    fn sync(&mut self, m: MinerId) -> Result<(), SimError> {
        self.settle(m)?;
        let (slot, puzzle) = self.derive(m);
        self.miners[m].activity = slot.map(|(epoch, round)| Activity {
            since: self.now,
            epoch,
            round,
        });
        let unchanged = match (&self.miners[m].clock, puzzle) {
            (Some(c), Some(p)) => c.puzzle == p,
            (None, None) => true,
            _ => false,
        };
        if !unchanged {
            if let Some(key) = self.miners[m].clock.take().and_then(|c| c.key) {
                self.queue.cancel(key);
            }
            if let Some(p) = puzzle {
                self.start_clock(m, p);
            }
        }
        Ok(())
    }

    fn start_clock(&mut self, m: MinerId, puzzle: PuzzleKey) {
        let shared = self.cfg.solve_model == SolveTimeModel::SharedDraw
            && puzzle.track == Track::D1
            && (self.cfg.algorithm == Algorithm::Pow || puzzle.height % 2 == 0);
        let shared_at = if shared {
            let latent_len = self.latent_len();
            let split = self.topology.is_split(self.now);
            let (profile, rate, d1) = (&self.profile, self.rate, self.difficulty.d1);
            let rng = &mut self.race_rng;
            let key = (puzzle.parent, puzzle.height);
            let race = self.races.entry(key).or_insert_with(|| {
                if split {
                    Race {
                        offsets: Vec::new(),
                        difficulty: d1,
                    }
                } else {
                    build_race(profile, rate, d1, rng)
                }
            });
            let at = race.offsets.get(m).map(|o| (self.now + o, race.difficulty));
            if at.is_some()
                && self.cfg.algorithm == Algorithm::GreenPow
                && !self.latent_claims.contains_key(&key)
            {
                let latent = latent_offsets(&race.offsets, latent_len);
                self.latent_claims.insert(key, latent);
            }
            at.ok_or(race.difficulty)
        } else {
            Err(self.difficulty.difficulty(puzzle.track))
        };
        let (at, difficulty) = shared_at.unwrap_or_else(|d| {
            let h = self.profile.fraction(m);
            let e = self.miners[m].rng.unit_exponential();
            (self.now + e * d / (h * self.rate.lambda()), d)
        });
        let key = at
            .is_finite()
            .then(|| self.queue.schedule(at, EventKind::NonceFound { miner: m }));
        self.miners[m].clock = Some(Clock {
            key,
            puzzle,
            difficulty,
        });
    }

    fn latent_len(&self) -> usize {
        match self.params.selection {
            SelectionMode::Count { k } => k,
            SelectionMode::TimeWindow { .. } => self.miners.len() - 1,
        }
    }

    fn on_nonce(&mut self, m: MinerId) -> Result<(), SimError> {
        let clock = self.miners[m]
            .clock
            .take()
            .expect("nonce events always belong to a live clock");
        let work = clock.difficulty;
        let minted = self.chain.next_id();
        match self.miners[m].machine {
            Machine::Green(s) => {
                let (next, emission) = s.on_nonce_found(&self.params, self.now, minted)?;
                match emission {
                    Some(Emission::NewBlock(d)) => {
                        let block = Block {
                            id: minted,
                            height: d.height,
                            round_tag: d.round_tag,
                            producer: m,
                            parent: d.parent,
                            found_at: self.now,
                            target_used: d.target_used,
                        };
                        self.add_block(block, work)?;
                        self.miners[m].learn(minted);
                        self.set_green(m, next, Cause::Nonce)?;
                        self.broadcast_block(m, minted);
                    }
                    Some(Emission::RunnerUpClaim { first_block, epoch }) => {
                        self.set_green(m, next, Cause::Nonce)?;
                        let now = self.now;
                        self.miners[m]
                            .local_sets
                            .entry(first_block)
                            .or_insert_with(|| RunnerUpSet::new(epoch, first_block))
                            .insert(m, now);
                        let trigger = self.register_claim(first_block, epoch, m);
                        let claim = Claim {
                            first_block,
                            epoch,
                            miner: m,
                            found_at: now,
                        };
                        for (at, recipients) in self.topology.deliver(m, now, self.miners.len()) {
                            self.queue
                                .schedule(at, EventKind::RunnerupDelivery { claim, recipients });
                        }
                        if trigger {
                            self.isolate_runnerups(first_block);
                        }
                    }
                    None => self.set_green(m, next, Cause::Nonce)?,
                }
            }
            Machine::Pow(s) => {
                let step = baseline_pow_step(&s, PowEvent::NonceFound { minted });
                if let Some(Emission::NewBlock(d)) = step.emission {
                    let block = Block {
                        id: minted,
                        height: d.height,
                        round_tag: d.round_tag,
                        producer: m,
                        parent: d.parent,
                        found_at: self.now,
                        target_used: d.target_used,
                    };
                    self.add_block(block, work)?;
                    self.miners[m].learn(minted);
                    self.miners[m].machine = Machine::Pow(step.state);
                    self.sync(m)?;
                    self.broadcast_block(m, minted);
                }
            }
        }
        Ok(())
    }

    fn add_block(&mut self, block: Block, work: f64) -> Result<(), SimError> {
        let old_head = self.chain.canonical_head();
        let moved = self.chain.insert(block, work)?;
        if !moved {
            return Ok(());
        }
        if block.parent == old_head {
            let prev = block.parent.map_or(0.0, |p| self.chain.block(p).found_at);
            self.difficulty
                .record_block_interval(block.round_tag, block.target_used, block.found_at - prev);
            let track = Track::from(block.target_used);
            if self.difficulty.window_full(track) && !self.retarget_pending[track_index(track)] {
                self.retarget_pending[track_index(track)] = true;
                self.queue.schedule(self.now, EventKind::Retarget { track });
            }
        }
        if block.height + 1 >= self.cfg.block_budget {
            self.done = true;
        }
        if block.height % 64 == 0 {
            let h = block.height;
            self.races.retain(|&(_, rh), _| rh + 8 >= h);
        }
        Ok(())
    }

    fn broadcast_block(&mut self, sender: MinerId, id: BlockId) {
        for (at, recipients) in self.topology.deliver(sender, self.now, self.miners.len()) {
            self.queue
                .schedule(at, EventKind::BlockDelivery { block: id, recipients });
        }
    }

    // ---- state changes ---------------------------------------------------

    fn record(&mut self, m: MinerId, old: Option<&MinerState>, new: &MinerState, cause: Cause) {
        let Some(trace) = self.trace.as_mut() else {
            return;
        };
        if old.is_some_and(|o| o.phase == new.phase && o.current_height == new.current_height) {
            return;
        }
        trace.push(TransitionRecord {
            at: self.now,
            miner: m,
            from: old.map(|o| o.phase),
            to: new.phase,
            height: new.current_height,
            cause,
        });
    }

    fn set_green(&mut self, m: MinerId, next: MinerState, cause: Cause) -> Result<(), SimError> {
        let Machine::Green(old) = self.miners[m].machine else {
            unreachable!("green transition on a PoW miner");
        };
        self.record(m, Some(&old), &next, cause);
        self.miners[m].machine = Machine::Green(next);
        if next.timeout_deadline != old.timeout_deadline {
            if let Some(d) = next.timeout_deadline {
                self.queue.schedule(d, EventKind::TimeoutExpiry { miner: m });
            }
        }
        if next.eta_deadline != old.eta_deadline {
            if let Some(d) = next.eta_deadline {
                self.queue.schedule(d, EventKind::EtaExpiry { miner: m });
            }
        }
        if next.current_height > old.current_height {
            let epoch = next.current_height / 2;
            let rt = &mut self.miners[m];
            rt.local_sets.retain(|_, s| s.epoch + 2 >= epoch);
            let chain = &self.chain;
            rt.pending
                .retain(|&b| chain.block(b).height + 1 >= next.current_height);
        }
        self.sync(m)
    }

    fn on_timeout(&mut self, m: MinerId) -> Result<(), SimError> {
        let Machine::Green(s) = self.miners[m].machine else {
            return Ok(());
        };
        if s.timeout_deadline != Some(self.now) {
            return Ok(());
        }
        let next = s.on_timeout(self.now);
        if next == s {
            return Ok(());
        }
        self.timeout_firings += 1;
        self.set_green(m, next, Cause::Timeout)?;
        for b in std::mem::take(&mut self.miners[m].pending) {
            self.consider(m, b)?;
        }
        Ok(())
    }

    // ---- message handling ------------------------------------------------

    fn receive_block(&mut self, m: MinerId, id: BlockId) -> Result<(), SimError> {
        if self.miners[m].knows(id) {
            return Ok(());
        }
        let mut cur = Some(id);
        while let Some(b) = cur {
            if self.miners[m].knows(b) {
                break;
            }
            self.miners[m].learn(b);
            cur = self.chain.block(b).parent;
        }
        self.consider(m, id)
    }

    fn consider(&mut self, m: MinerId, id: BlockId) -> Result<(), SimError> {
        let block = *self.chain.block(id);
        match self.miners[m].machine {
            Machine::Green(s) => {
                if block.parent != s.chain_head {
                    return self.maybe_reorg(m, id);
                }
                let set_key = if block.round_tag == RoundTag::First {
                    Some(id)
                } else {
                    s.chain_head
                };
                let set = set_key.and_then(|k| self.miners[m].local_sets.get(&k));
                let (next, decision) = s.on_block_received(&block, set, &self.params, self.now);
                match decision {
                    BlockDecision::Accepted => self.set_green(m, next, Cause::Block),
                    BlockDecision::Rejected(RejectReason::PrematureTimeoutBlock) => {
                        self.miners[m].pending.push(id);
                        Ok(())
                    }
                    BlockDecision::Rejected(RejectReason::IneligibleProducer) => {
                        let registered = set_key
                            .and_then(|k| self.global_sets.get(&k))
                            .is_some_and(|g| g.contains(block.producer));
                        if registered {
                            self.missing_claim_rejections += 1;
                        } else {
                            self.violations += 1;
                        }
                        Ok(())
                    }
                    _ => self.maybe_reorg(m, id),
                }
            }
            Machine::Pow(s) => {
                let step = baseline_pow_step(&s, PowEvent::BlockReceived(&block));
                if step.decision == Some(BlockDecision::Accepted) {
                    self.miners[m].machine = Machine::Pow(step.state);
                    self.sync(m)
                } else {
                    self.maybe_reorg(m, id)
                }
            }
        }
    }

    /// Longest-chain rule with first-seen tiebreak: switch only to strictly
    /// more work.
    fn maybe_reorg(&mut self, m: MinerId, id: BlockId) -> Result<(), SimError> {
        let head = self.miners[m].machine.head();
        if self.chain.get(id).cum_work <= self.chain.cum_work(head) {
            return Ok(());
        }
        self.reorgs += 1;
        let block = *self.chain.block(id);
        match self.miners[m].machine {
            Machine::Green(s) => {
                let set = self.miners[m].local_sets.get(&id);
                let next = s.reanchor(&block, set, &self.params, self.now);
                self.set_green(m, next, Cause::Reorg)
            }
            Machine::Pow(s) => {
                self.miners[m].machine = Machine::Pow(PowMinerState {
                    current_height: block.height + 1,
                    chain_head: Some(id),
                    ..s
                });
                self.sync(m)
            }
        }
    }

    fn receive_claim(&mut self, m: MinerId, claim: Claim) -> Result<(), SimError> {
        let now = self.now;
        let set = self.miners[m]
            .local_sets
            .entry(claim.first_block)
            .or_insert_with(|| RunnerUpSet::new(claim.epoch, claim.first_block));
        if !set.insert(claim.miner, now) {
            return Ok(());
        }
        if let Machine::Green(s) = self.miners[m].machine {
            if s.phase == Phase::ContinueForRunnerUp && s.chain_head == Some(claim.first_block) {
                let set = &self.miners[m].local_sets[&claim.first_block];
                let next = s.on_runnerup_received(set, &self.params, now);
                if next != s {
                    self.set_green(m, next, Cause::Claim)?;
                }
            }
        }
        Ok(())
    }

    // ---- runner-up registry and scenarios --------------------------------

    /// Adds a claim to the network-wide registry. Returns whether the
    /// partition scenario should fire right after the claim is broadcast.
    fn register_claim(&mut self, first_block: BlockId, epoch: u64, m: MinerId) -> bool {
        let now = self.now;
        let set = self
            .global_sets
            .entry(first_block)
            .or_insert_with(|| RunnerUpSet::new(epoch, first_block));
        set.insert(m, now);
        let size = set.len();
        let Some(Scenario::PartitionRunnerups { every, offset, .. }) = self.cfg.scenario else {
            return false;
        };
        if epoch % every != offset % every || self.partitioned_epochs.contains(&epoch) {
            return false;
        }
        match self.params.selection {
            SelectionMode::Count { k } => size == k,
            SelectionMode::TimeWindow { eta } => {
                if size == 1 {
                    self.queue
                        .schedule(now + eta, EventKind::PartitionTrigger { first_block });
                }
                false
            }
        }
    }

    fn isolate_runnerups(&mut self, first_block: BlockId) {
        let Some(Scenario::PartitionRunnerups { duration, .. }) = self.cfg.scenario else {
            return;
        };
        let Some(set) = self.global_sets.get(&first_block) else {
            return;
        };
        if self.partitioned_epochs.contains(&set.epoch) {
            return;
        }
        let timeout = self.params.timeout.unwrap_or(0.0);
        let duration = duration.unwrap_or(timeout + 5.0 * self.rate.expected_interval());
        self.partitioned_epochs.push(set.epoch);
        let end = self.now + duration;
        self.topology.add_partition(&Partition {
            start: self.now,
            end,
            isolated: set.members.clone(),
        });
        self.queue.schedule(end, EventKind::PartitionHeal);
    }

    /// Offers every chain tip, lightest first, to each miner that can now
    /// reach somebody holding it, as peers would when a link comes back.
    /// Partitions still in force keep their sides apart.
    fn resync(&mut self) -> Result<(), SimError> {
        let mut tips: Vec<BlockId> = self.chain.tips().iter().copied().collect();
        tips.sort_by(|a, b| compare_tips(self.chain.get(*a), self.chain.get(*b)));
        let n = self.miners.len();
        for &tip in &tips {
            let holders: Vec<MinerId> = (0..n).filter(|&x| self.miners[x].knows(tip)).collect();
            for m in 0..n {
                if !self.miners[m].knows(tip)
                    && holders.iter().any(|&x| self.topology.reachable(x, m, self.now))
                {
                    self.receive_block(m, tip)?;
                }
            }
        }
        Ok(())
    }

    // ---- report ----------------------------------------------------------

    fn report(self) -> SimReport {
        let blocks = self.chain.canonical_chain();
        let epochs = blocks
            .chunks_exact(2)
            .enumerate()
            .map(|(i, pair)| {
                let (first, second) = (pair[0], pair[1]);
                let prev = first.parent.map_or(0.0, |p| self.chain.block(p).found_at);
                let set = self.global_sets.get(&first.id);
                EpochRecord {
                    epoch: i as u64,
                    first_block: first.id,
                    second_block: second.id,
                    first_producer: first.producer,
                    second_producer: second.producer,
                    second_tag: second.round_tag,
                    runner_ups: set.map(|s| s.members.clone()).unwrap_or_default(),
                    announce_times: set.map(|s| s.announce_times.clone()).unwrap_or_default(),
                    latent_claims: self
                        .latent_claims
                        .get(&(first.parent, first.height))
                        .cloned()
                        .unwrap_or_default(),
                    first_interval: first.found_at - prev,
                    second_interval: second.found_at - first.found_at,
                    energy: self.ledger.epoch(i as u64),
                }
            })
            .collect();
        let timeout_blocks = blocks
            .iter()
            .filter(|b| b.round_tag == RoundTag::SecondAfterTimeout)
            .count() as u64;
        SimReport {
            algorithm: self.cfg.algorithm,
            replication: self.replication,
            seed: self.cfg.seed,
            lambda: self.rate.lambda(),
            total_power: self.cfg.total_power,
            profile: self.profile.fractions().to_vec(),
            blocks_produced: self.chain.len() as u64,
            forks: self.chain.fork_records(),
            blocks,
            epochs,
            energy: self.ledger,
            d2_initial: self.d2_initial,
            difficulty: self.difficulty,
            timeout_blocks,
            timeout_firings: self.timeout_firings,
            violations: self.violations,
            missing_claim_rejections: self.missing_claim_rejections,
            reorgs: self.reorgs,
            partitioned_epochs: self.partitioned_epochs,
            end_time: self.now,
            events_processed: self.events,
            trace: self.trace,
        }
    }
}

fn track_index(t: Track) -> usize {
    match t {
        Track::D1 => 0,
        Track::D2 => 1,
    }
}
