//! Per-miner consensus state machines.
//!
//! Green-PoW splits time into epochs of two rounds. Blocks at even heights
//! are mined by everybody (first round); the miners that solve the same
//! puzzle after the winner become runners-up and are the only ones allowed
//! to mine the odd-height block (second round) while everybody else idles.
//! A liveness timeout lets the idle miners back in if the second round
//! stalls.
//!
//! Transitions are pure: each handler takes `&self` and returns the next
//! state plus whatever the miner wants to broadcast. Scheduling, delivery
//! and fork handling belong to [`crate::simnet`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stochastic::MiningRate;

pub type MinerId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RoundTag {
    First,
    Second,
    SecondAfterTimeout,
}

impl RoundTag {
    pub fn as_str(self) -> &'static str {
        match self {
            RoundTag::First => "FIRST",
            RoundTag::Second => "SECOND",
            RoundTag::SecondAfterTimeout => "SECOND_AFTER_TIMEOUT",
        }
    }

    /// Whether a block with this tag may sit at `height`.
    pub fn matches_height(self, height: u64) -> bool {
        match self {
            RoundTag::First => height % 2 == 0,
            RoundTag::Second | RoundTag::SecondAfterTimeout => height % 2 == 1,
        }
    }
}

/// Which difficulty a block was mined against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    D1,
    D2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub id: BlockId,
    pub height: u64,
    pub round_tag: RoundTag,
    pub producer: MinerId,
    pub parent: Option<BlockId>,
    pub found_at: f64,
    pub target_used: Target,
}

impl Block {
    pub fn epoch(&self) -> u64 {
        self.height / 2
    }
}

/// Runner-up claims for one first-round block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunnerUpSet {
    pub epoch: u64,
    pub first_block: BlockId,
    pub members: Vec<MinerId>,
    pub announce_times: Vec<f64>,
}

impl RunnerUpSet {
    pub fn new(epoch: u64, first_block: BlockId) -> Self {
        Self {
            epoch,
            first_block,
            members: Vec::new(),
            announce_times: Vec::new(),
        }
    }

    /// Records a claim. Repeated claims by the same miner are no-ops;
    /// returns whether the member is new.
    pub fn insert(&mut self, miner: MinerId, at: f64) -> bool {
        if self.contains(miner) {
            return false;
        }
        self.members.push(miner);
        self.announce_times.push(at);
        true
    }

    pub fn contains(&self, miner: MinerId) -> bool {
        self.members.contains(&miner)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn first_announce(&self) -> Option<f64> {
        self.announce_times.iter().copied().reduce(f64::min)
    }

    /// Time between the first and last claim.
    pub fn span(&self) -> Option<f64> {
        let first = self.first_announce()?;
        let last = self.announce_times.iter().copied().reduce(f64::max)?;
        Some(last - first)
    }
}

/// How the runner-up set is closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Keep mining for `eta` after the first claim is heard.
    TimeWindow { eta: f64 },
    /// Stop as soon as `k` claims are known.
    Count { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub selection: SelectionMode,
    /// Second-round liveness timeout. `None` disables it.
    pub timeout: Option<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("eta must be finite and >= 0, got {0}")]
    InvalidEta(f64),
    #[error("runner-up count must be >= 1")]
    InvalidCount,
    #[error("timeout {timeout} must exceed the mean block interval {interval}")]
    TimeoutTooShort { timeout: f64, interval: f64 },
    #[error("miner {0} found a nonce while in power-save mode")]
    NonceInPowerSave(MinerId),
}

impl ProtocolParams {
    pub fn validate(&self, rate: MiningRate) -> Result<(), ProtocolError> {
        match self.selection {
            SelectionMode::TimeWindow { eta } if !(eta.is_finite() && eta >= 0.0) => {
                return Err(ProtocolError::InvalidEta(eta))
            }
            SelectionMode::Count { k: 0 } => return Err(ProtocolError::InvalidCount),
            _ => {}
        }
        if let Some(timeout) = self.timeout {
            let interval = rate.expected_interval();
            if !(timeout > interval) {
                return Err(ProtocolError::TimeoutTooShort { timeout, interval });
            }
        }
        Ok(())
    }

    fn deadline_from(&self, now: f64) -> Option<f64> {
        self.timeout.map(|t| now + t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    MiningR1,
    ContinueForRunnerUp,
    MiningR2,
    PowerSave,
}

impl Phase {
    pub fn is_mining(self) -> bool {
        !matches!(self, Phase::PowerSave)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinerState {
    pub id: MinerId,
    pub phase: Phase,
    pub is_runner_up: bool,
    /// Height of the block this miner is mining or waiting for.
    pub current_height: u64,
    pub chain_head: Option<BlockId>,
    pub timeout_deadline: Option<f64>,
    pub eta_deadline: Option<f64>,
    /// The second-round timeout fired; eligibility is widened to everybody.
    pub timed_out: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockDraft {
    pub height: u64,
    pub round_tag: RoundTag,
    pub target_used: Target,
    pub parent: Option<BlockId>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Emission {
    NewBlock(BlockDraft),
    RunnerUpClaim { first_block: BlockId, epoch: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    /// Non-timeout second-round block from a miner outside the runner-up set.
    IneligibleProducer,
    /// Timeout block received before the local deadline.
    PrematureTimeoutBlock,
    /// Wrong round for the miner's current height.
    UnexpectedRound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockDecision {
    Accepted,
    Rejected(RejectReason),
    Ignored,
}

impl BlockDecision {
    pub fn is_violation(self) -> bool {
        matches!(self, BlockDecision::Rejected(RejectReason::IneligibleProducer))
    }
}

impl MinerState {
    pub fn new(id: MinerId) -> Self {
        Self {
            id,
            phase: Phase::MiningR1,
            is_runner_up: false,
            current_height: 0,
            chain_head: None,
            timeout_deadline: None,
            eta_deadline: None,
            timed_out: false,
        }
    }

    fn next_epoch(&self, head: BlockId, height: u64) -> Self {
        Self {
            phase: Phase::MiningR1,
            is_runner_up: false,
            current_height: height + 1,
            chain_head: Some(head),
            timeout_deadline: None,
            eta_deadline: None,
            timed_out: false,
            ..*self
        }
    }

    fn power_save(&self) -> Self {
        Self {
            phase: Phase::PowerSave,
            eta_deadline: None,
            ..*self
        }
    }

    /// The miner solved the puzzle it was working on.
    ///
    /// `minted` is the id the caller will give a newly produced block.
    pub fn on_nonce_found(
        &self,
        params: &ProtocolParams,
        now: f64,
        minted: BlockId,
    ) -> Result<(MinerState, Option<Emission>), ProtocolError> {
        match self.phase {
            Phase::MiningR1 => {
                let draft = BlockDraft {
                    height: self.current_height,
                    round_tag: RoundTag::First,
                    target_used: Target::D1,
                    parent: self.chain_head,
                };
                // The winner sits out the second round.
                let next = MinerState {
                    phase: Phase::PowerSave,
                    is_runner_up: false,
                    current_height: self.current_height + 1,
                    chain_head: Some(minted),
                    timeout_deadline: params.deadline_from(now),
                    eta_deadline: None,
                    timed_out: false,
                    ..*self
                };
                Ok((next, Some(Emission::NewBlock(draft))))
            }
            Phase::ContinueForRunnerUp => {
                if self.eta_deadline.is_some_and(|d| now > d) {
                    return Ok((self.power_save(), None));
                }
                let head = self
                    .chain_head
                    .expect("continuing miners always follow a first-round block");
                let next = MinerState {
                    phase: Phase::MiningR2,
                    is_runner_up: true,
                    eta_deadline: None,
                    ..*self
                };
                let claim = Emission::RunnerUpClaim {
                    first_block: head,
                    epoch: self.current_height / 2,
                };
                Ok((next, Some(claim)))
            }
            Phase::MiningR2 => {
                let (round_tag, target_used) = if self.timed_out && !self.is_runner_up {
                    (RoundTag::SecondAfterTimeout, Target::D1)
                } else {
                    (RoundTag::Second, Target::D2)
                };
                let draft = BlockDraft {
                    height: self.current_height,
                    round_tag,
                    target_used,
                    parent: self.chain_head,
                };
                Ok((
                    self.next_epoch(minted, self.current_height),
                    Some(Emission::NewBlock(draft)),
                ))
            }
            Phase::PowerSave => Err(ProtocolError::NonceInPowerSave(self.id)),
        }
    }

    /// A block extending this miner's chain head arrived.
    ///
    /// `set` is the runner-up set this miner knows for the relevant
    /// first-round block: the incoming block itself when it is a first-round
    /// block, otherwise the current head.
    pub fn on_block_received(
        &self,
        block: &Block,
        set: Option<&RunnerUpSet>,
        params: &ProtocolParams,
        now: f64,
    ) -> (MinerState, BlockDecision) {
        if block.height < self.current_height || block.parent != self.chain_head {
            return (*self, BlockDecision::Ignored);
        }
        if block.height != self.current_height || !block.round_tag.matches_height(block.height) {
            return (
                *self,
                BlockDecision::Rejected(RejectReason::UnexpectedRound),
            );
        }
        match (self.phase, block.round_tag) {
            (Phase::MiningR1, RoundTag::First) => {
                let mut next = MinerState {
                    phase: Phase::ContinueForRunnerUp,
                    is_runner_up: false,
                    current_height: block.height + 1,
                    chain_head: Some(block.id),
                    timeout_deadline: params.deadline_from(now),
                    eta_deadline: None,
                    timed_out: false,
                    ..*self
                };
                if let Some(set) = set.filter(|s| !s.is_empty()) {
                    next = next.close_if_due(set, params, now);
                }
                (next, BlockDecision::Accepted)
            }
            (Phase::MiningR1, _) => (
                *self,
                BlockDecision::Rejected(RejectReason::UnexpectedRound),
            ),
            (_, RoundTag::First) => (
                *self,
                BlockDecision::Rejected(RejectReason::UnexpectedRound),
            ),
            (_, RoundTag::Second) => {
                if set.is_some_and(|s| s.contains(block.producer)) {
                    (self.next_epoch(block.id, block.height), BlockDecision::Accepted)
                } else {
                    (
                        *self,
                        BlockDecision::Rejected(RejectReason::IneligibleProducer),
                    )
                }
            }
            (_, RoundTag::SecondAfterTimeout) => {
                let expired =
                    self.timed_out || self.timeout_deadline.is_some_and(|d| now >= d);
                if expired {
                    (self.next_epoch(block.id, block.height), BlockDecision::Accepted)
                } else {
                    (
                        *self,
                        BlockDecision::Rejected(RejectReason::PrematureTimeoutBlock),
                    )
                }
            }
        }
    }

    fn close_if_due(&self, set: &RunnerUpSet, params: &ProtocolParams, now: f64) -> MinerState {
        match params.selection {
            SelectionMode::Count { k } => {
                if set.len() >= k {
                    self.power_save()
                } else {
                    *self
                }
            }
            SelectionMode::TimeWindow { eta } => {
                let opened = set.first_announce().unwrap_or(now);
                let deadline = opened + eta;
                if eta == 0.0 || deadline <= now {
                    self.power_save()
                } else {
                    MinerState {
                        eta_deadline: Some(deadline),
                        ..*self
                    }
                }
            }
        }
    }

    /// A runner-up claim for the current head was heard. `set` already
    /// contains it.
    pub fn on_runnerup_received(
        &self,
        set: &RunnerUpSet,
        params: &ProtocolParams,
        now: f64,
    ) -> MinerState {
        if self.phase != Phase::ContinueForRunnerUp {
            return *self;
        }
        match params.selection {
            SelectionMode::TimeWindow { eta } => match self.eta_deadline {
                Some(_) => *self,
                None if eta == 0.0 => self.power_save(),
                None => MinerState {
                    eta_deadline: Some(now + eta),
                    ..*self
                },
            },
            SelectionMode::Count { .. } => self.close_if_due(set, params, now),
        }
    }

    /// The continuation window closed without a local solution.
    pub fn on_eta_expiry(&self, now: f64) -> MinerState {
        match (self.phase, self.eta_deadline) {
            (Phase::ContinueForRunnerUp, Some(d)) if now >= d => self.power_save(),
            _ => *self,
        }
    }

    /// The second-round timer fired. Stale timers (second-round block
    /// already accepted, or the miner is still active) leave the state
    /// untouched.
    pub fn on_timeout(&self, now: f64) -> MinerState {
        match (self.phase, self.timeout_deadline) {
            (Phase::PowerSave, Some(d)) if now >= d && self.current_height % 2 == 1 => {
                MinerState {
                    phase: Phase::MiningR2,
                    timed_out: true,
                    ..*self
                }
            }
            _ => *self,
        }
    }

    /// Re-anchors onto `head` after the fork-choice rule moved this miner to
    /// another branch.
    ///
    /// On a second-round block the miner starts the next epoch. On a
    /// first-round block it keeps competing for a runner-up slot while the
    /// set is still open, otherwise it idles until the second-round block.
    pub fn reanchor(
        &self,
        head: &Block,
        set: Option<&RunnerUpSet>,
        params: &ProtocolParams,
        now: f64,
    ) -> MinerState {
        if head.round_tag != RoundTag::First {
            return self.next_epoch(head.id, head.height);
        }
        if head.producer == self.id {
            return MinerState {
                phase: Phase::PowerSave,
                is_runner_up: false,
                current_height: head.height + 1,
                chain_head: Some(head.id),
                timeout_deadline: params.deadline_from(now),
                eta_deadline: None,
                timed_out: false,
                ..*self
            };
        }
        let member = set.is_some_and(|s| s.contains(self.id));
        let base = MinerState {
            phase: Phase::ContinueForRunnerUp,
            is_runner_up: member,
            current_height: head.height + 1,
            chain_head: Some(head.id),
            timeout_deadline: params.deadline_from(now),
            eta_deadline: None,
            timed_out: false,
            ..*self
        };
        if member {
            return MinerState {
                phase: Phase::MiningR2,
                ..base
            };
        }
        match set.filter(|s| !s.is_empty()) {
            Some(set) => base.close_if_due(set, params, now),
            None => base,
        }
    }
}

/// Baseline PoW miner: one puzzle at a time, no rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowMinerState {
    pub id: MinerId,
    pub current_height: u64,
    pub chain_head: Option<BlockId>,
}

#[derive(Debug, Clone, Copy)]
pub enum PowEvent<'a> {
    NonceFound { minted: BlockId },
    BlockReceived(&'a Block),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowStep {
    pub state: PowMinerState,
    pub emission: Option<Emission>,
    pub decision: Option<BlockDecision>,
    /// The miner abandons its puzzle and starts on the next height.
    pub restart: bool,
}

impl PowMinerState {
    pub fn new(id: MinerId) -> Self {
        Self {
            id,
            current_height: 0,
            chain_head: None,
        }
    }
}

pub fn baseline_pow_step(state: &PowMinerState, event: PowEvent<'_>) -> PowStep {
    match event {
        PowEvent::NonceFound { minted } => PowStep {
            state: PowMinerState {
                current_height: state.current_height + 1,
                chain_head: Some(minted),
                ..*state
            },
            emission: Some(Emission::NewBlock(BlockDraft {
                height: state.current_height,
                round_tag: RoundTag::First,
                target_used: Target::D1,
                parent: state.chain_head,
            })),
            decision: None,
            restart: true,
        },
        PowEvent::BlockReceived(block)
            if block.parent == state.chain_head && block.height == state.current_height =>
        {
            PowStep {
                state: PowMinerState {
                    current_height: block.height + 1,
                    chain_head: Some(block.id),
                    ..*state
                },
                emission: None,
                decision: Some(BlockDecision::Accepted),
                restart: true,
            }
        }
        PowEvent::BlockReceived(_) => PowStep {
            state: *state,
            emission: None,
            decision: Some(BlockDecision::Ignored),
            restart: false,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const COUNT5: ProtocolParams = ProtocolParams {
        selection: SelectionMode::Count { k: 5 },
        timeout: Some(1380.0),
    };
    const ETA30: ProtocolParams = ProtocolParams {
        selection: SelectionMode::TimeWindow { eta: 30.0 },
        timeout: Some(1380.0),
    };

    fn block(id: u64, height: u64, tag: RoundTag, producer: MinerId, parent: Option<u64>) -> Block {
        Block {
            id: BlockId(id),
            height,
            round_tag: tag,
            producer,
            parent: parent.map(BlockId),
            found_at: 0.0,
            target_used: if tag == RoundTag::Second {
                Target::D2
            } else {
                Target::D1
            },
        }
    }

    fn at_height(phase: Phase, height: u64, head: u64) -> MinerState {
        MinerState {
            phase,
            current_height: height,
            chain_head: Some(BlockId(head)),
            ..MinerState::new(1)
        }
    }

    #[test]
    fn first_round_winner_enters_power_save() {
        let s = at_height(Phase::MiningR1, 4, 3);
        let (next, em) = s.on_nonce_found(&COUNT5, 100.0, BlockId(9)).unwrap();
        assert_eq!(next.phase, Phase::PowerSave);
        assert_eq!(next.current_height, 5);
        assert_eq!(next.chain_head, Some(BlockId(9)));
        assert_eq!(next.timeout_deadline, Some(1480.0));
        match em {
            Some(Emission::NewBlock(d)) => {
                assert_eq!(d.height, 4);
                assert_eq!(d.round_tag, RoundTag::First);
                assert_eq!(d.parent, Some(BlockId(3)));
            }
            other => panic!("unexpected emission {other:?}"),
        }
    }

    #[test]
    fn continuing_miner_claims_runner_up() {
        let s = at_height(Phase::ContinueForRunnerUp, 5, 4);
        let (next, em) = s.on_nonce_found(&COUNT5, 10.0, BlockId(99)).unwrap();
        assert!(next.is_runner_up);
        assert_eq!(next.phase, Phase::MiningR2);
        assert_eq!(
            em,
            Some(Emission::RunnerUpClaim {
                first_block: BlockId(4),
                epoch: 2
            })
        );
    }

    #[test]
    fn late_runner_up_solution_is_discarded() {
        let s = MinerState {
            eta_deadline: Some(5.0),
            ..at_height(Phase::ContinueForRunnerUp, 5, 4)
        };
        let (next, em) = s.on_nonce_found(&ETA30, 6.0, BlockId(99)).unwrap();
        assert_eq!(next.phase, Phase::PowerSave);
        assert!(em.is_none());
    }

    #[test]
    fn second_round_solution_starts_next_epoch() {
        let s = MinerState {
            is_runner_up: true,
            ..at_height(Phase::MiningR2, 5, 4)
        };
        let (next, em) = s.on_nonce_found(&COUNT5, 10.0, BlockId(7)).unwrap();
        assert_eq!(next.phase, Phase::MiningR1);
        assert!(!next.is_runner_up);
        assert_eq!(next.current_height, 6);
        match em {
            Some(Emission::NewBlock(d)) => {
                assert_eq!(d.round_tag, RoundTag::Second);
                assert_eq!(d.target_used, Target::D2);
            }
            other => panic!("unexpected emission {other:?}"),
        }
    }

    #[test]
    fn timed_out_miner_produces_timeout_block_on_d1() {
        let s = MinerState {
            timed_out: true,
            ..at_height(Phase::MiningR2, 5, 4)
        };
        let (_, em) = s.on_nonce_found(&COUNT5, 10.0, BlockId(7)).unwrap();
        match em {
            Some(Emission::NewBlock(d)) => {
                assert_eq!(d.round_tag, RoundTag::SecondAfterTimeout);
                assert_eq!(d.target_used, Target::D1);
            }
            other => panic!("unexpected emission {other:?}"),
        }
    }

    #[test]
    fn nonce_in_power_save_is_an_error() {
        let s = at_height(Phase::PowerSave, 5, 4);
        assert_eq!(
            s.on_nonce_found(&COUNT5, 1.0, BlockId(1)),
            Err(ProtocolError::NonceInPowerSave(1))
        );
    }

    #[test]
    fn first_block_moves_miner_to_continuation() {
        let s = at_height(Phase::MiningR1, 4, 3);
        let b = block(4, 4, RoundTag::First, 2, Some(3));
        let (next, d) = s.on_block_received(&b, None, &COUNT5, 50.0);
        assert_eq!(d, BlockDecision::Accepted);
        assert_eq!(next.phase, Phase::ContinueForRunnerUp);
        assert_eq!(next.current_height, 5);
        assert_eq!(next.timeout_deadline, Some(1430.0));
    }

    #[test]
    fn power_save_accepts_eligible_second_block() {
        let s = at_height(Phase::PowerSave, 5, 4);
        let mut set = RunnerUpSet::new(2, BlockId(4));
        set.insert(7, 1.0);
        let b = block(5, 5, RoundTag::Second, 7, Some(4));
        let (next, d) = s.on_block_received(&b, Some(&set), &COUNT5, 60.0);
        assert_eq!(d, BlockDecision::Accepted);
        assert_eq!(next.phase, Phase::MiningR1);
        assert_eq!(next.current_height, 6);
    }

    #[test]
    fn power_save_rejects_ineligible_second_block() {
        let s = at_height(Phase::PowerSave, 5, 4);
        let mut set = RunnerUpSet::new(2, BlockId(4));
        set.insert(7, 1.0);
        let b = block(5, 5, RoundTag::Second, 8, Some(4));
        let (next, d) = s.on_block_received(&b, Some(&set), &COUNT5, 60.0);
        assert_eq!(d, BlockDecision::Rejected(RejectReason::IneligibleProducer));
        assert!(d.is_violation());
        assert_eq!(next, s);
    }

    #[test]
    fn timeout_block_needs_expired_deadline() {
        let s = MinerState {
            timeout_deadline: Some(100.0),
            ..at_height(Phase::PowerSave, 5, 4)
        };
        let b = block(5, 5, RoundTag::SecondAfterTimeout, 8, Some(4));
        let (_, early) = s.on_block_received(&b, None, &COUNT5, 99.0);
        assert_eq!(
            early,
            BlockDecision::Rejected(RejectReason::PrematureTimeoutBlock)
        );
        assert!(!early.is_violation());
        let (next, late) = s.on_block_received(&b, None, &COUNT5, 100.0);
        assert_eq!(late, BlockDecision::Accepted);
        assert_eq!(next.phase, Phase::MiningR1);
    }

    #[test]
    fn stale_block_is_ignored() {
        let s = at_height(Phase::MiningR1, 6, 5);
        let b = block(3, 3, RoundTag::Second, 8, Some(2));
        assert_eq!(
            s.on_block_received(&b, None, &COUNT5, 0.0).1,
            BlockDecision::Ignored
        );
    }

    #[test]
    fn first_claim_opens_eta_window() {
        let s = at_height(Phase::ContinueForRunnerUp, 5, 4);
        let mut set = RunnerUpSet::new(2, BlockId(4));
        set.insert(3, 100.0);
        let next = s.on_runnerup_received(&set, &ETA30, 100.0);
        assert_eq!(next.phase, Phase::ContinueForRunnerUp);
        assert_eq!(next.eta_deadline, Some(130.0));
        // Later claims do not extend the window.
        set.insert(4, 110.0);
        let again = next.on_runnerup_received(&set, &ETA30, 110.0);
        assert_eq!(again.eta_deadline, Some(130.0));
        assert_eq!(again.on_eta_expiry(129.0).phase, Phase::ContinueForRunnerUp);
        assert_eq!(again.on_eta_expiry(130.0).phase, Phase::PowerSave);
    }

    #[test]
    fn zero_eta_aborts_immediately() {
        let params = ProtocolParams {
            selection: SelectionMode::TimeWindow { eta: 0.0 },
            timeout: None,
        };
        let s = at_height(Phase::ContinueForRunnerUp, 5, 4);
        let mut set = RunnerUpSet::new(2, BlockId(4));
        set.insert(3, 1.0);
        assert_eq!(
            s.on_runnerup_received(&set, &params, 1.0).phase,
            Phase::PowerSave
        );
    }

    #[test]
    fn count_mode_closes_at_k() {
        let s = at_height(Phase::ContinueForRunnerUp, 5, 4);
        let mut set = RunnerUpSet::new(2, BlockId(4));
        for m in 10..14 {
            set.insert(m, 1.0);
        }
        assert_eq!(
            s.on_runnerup_received(&set, &COUNT5, 1.0).phase,
            Phase::ContinueForRunnerUp
        );
        set.insert(14, 2.0);
        assert_eq!(
            s.on_runnerup_received(&set, &COUNT5, 2.0).phase,
            Phase::PowerSave
        );
    }

    #[test]
    fn duplicate_claims_are_idempotent() {
        let mut set = RunnerUpSet::new(0, BlockId(0));
        assert!(set.insert(3, 1.0));
        assert!(!set.insert(3, 2.0));
        assert_eq!(set.len(), 1);
        assert_eq!(set.span(), Some(0.0));
    }

    #[test]
    fn timeout_widens_eligibility() {
        let s = MinerState {
            timeout_deadline: Some(1000.0),
            ..at_height(Phase::PowerSave, 5, 4)
        };
        assert_eq!(s.on_timeout(999.0), s);
        let t = s.on_timeout(1000.0);
        assert_eq!(t.phase, Phase::MiningR2);
        assert!(t.timed_out);
        assert!(!t.is_runner_up);
    }

    #[test]
    fn stale_timeout_is_ignored() {
        // Second-round block already accepted: miner is back in round one.
        let s = MinerState {
            timeout_deadline: None,
            ..at_height(Phase::MiningR1, 6, 5)
        };
        assert_eq!(s.on_timeout(5000.0), s);
    }

    #[test]
    fn params_validation() {
        let rate = MiningRate::new(1.0 / 600.0).unwrap();
        assert!(COUNT5.validate(rate).is_ok());
        let short = ProtocolParams {
            timeout: Some(600.0),
            ..COUNT5
        };
        assert!(short.validate(rate).is_err());
        let bad = ProtocolParams {
            selection: SelectionMode::Count { k: 0 },
            timeout: None,
        };
        assert!(bad.validate(rate).is_err());
        let neg = ProtocolParams {
            selection: SelectionMode::TimeWindow { eta: -1.0 },
            timeout: None,
        };
        assert!(neg.validate(rate).is_err());
    }

    #[test]
    fn pow_loop() {
        let s = PowMinerState::new(0);
        let step = baseline_pow_step(&s, PowEvent::NonceFound { minted: BlockId(0) });
        assert!(matches!(step.emission, Some(Emission::NewBlock(_))));
        assert_eq!(step.state.current_height, 1);

        let b = block(1, 1, RoundTag::First, 3, Some(0));
        let step = baseline_pow_step(&step.state, PowEvent::BlockReceived(&b));
        assert_eq!(step.decision, Some(BlockDecision::Accepted));
        assert!(step.restart);
        assert_eq!(step.state.current_height, 2);

        let stale = block(2, 1, RoundTag::First, 4, Some(0));
        let step = baseline_pow_step(&step.state, PowEvent::BlockReceived(&stale));
        assert_eq!(step.decision, Some(BlockDecision::Ignored));
        assert!(!step.restart);
    }
}
