//! Deterministic event queue.
//!
//! Events pop in `(at, seq)` order, `seq` being assigned at scheduling
//! time. Entries can be cancelled, so a miner that abandons a puzzle does
//! not leave a dead nonce event behind.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::difficulty::Track;
use crate::protocol::{BlockId, MinerId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub first_block: BlockId,
    pub epoch: u64,
    pub miner: MinerId,
    pub found_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    NonceFound { miner: MinerId },
    BlockDelivery { block: BlockId, recipients: Vec<MinerId> },
    RunnerupDelivery { claim: Claim, recipients: Vec<MinerId> },
    TimeoutExpiry { miner: MinerId },
    EtaExpiry { miner: MinerId },
    Retarget { track: Track },
    /// Scenario hook: isolate the runner-up set of `first_block`.
    PartitionTrigger { first_block: BlockId },
    /// A partition ended: peers exchange the blocks they missed.
    PartitionHeal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub at: f64,
    pub seq: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventKey(u64, u64);

#[derive(Debug, Default)]
pub struct EventQueue {
    entries: BTreeMap<EventKey, EventKind>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Schedules `kind` at time `at`, which must be finite and >= 0.
    pub fn schedule(&mut self, at: f64, kind: EventKind) -> EventKey {
        assert!(at.is_finite() && at >= 0.0, "event time {at}");
        // For non-negative floats the IEEE bit pattern orders like the value.
        // `+ 0.0` folds -0.0 into +0.0.
        let key = EventKey((at + 0.0).to_bits(), self.next_seq);
        self.next_seq += 1;
        self.entries.insert(key, kind);
        key
    }

    pub fn cancel(&mut self, key: EventKey) -> Option<EventKind> {
        self.entries.remove(&key)
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        let (key, kind) = self.entries.pop_first()?;
        Some(SimEvent {
            at: f64::from_bits(key.0),
            seq: key.1,
            kind,
        })
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.entries.keys().next().map(|k| f64::from_bits(k.0))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
