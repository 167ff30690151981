//! Global block store and fork choice.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::protocol::{Block, BlockId, RoundTag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoredBlock {
    pub block: Block,
    /// Expected work of the chain ending at this block.
    pub cum_work: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForkRecord {
    pub height: u64,
    pub parent: Option<BlockId>,
    /// Blocks built on `parent`, in creation order.
    pub competing: Vec<BlockId>,
    /// The competing block that ended up canonical, if any did.
    pub resolved_winner: Option<BlockId>,
    pub round_tag: RoundTag,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChainError {
    #[error("parent {0:?} is not in the view")]
    MissingParent(BlockId),
    #[error("block id {got:?} out of sequence, expected {expected:?}")]
    OutOfSequence { got: BlockId, expected: BlockId },
    #[error("block height {height} does not follow its parent")]
    BadHeight { height: u64 },
}

#[derive(Debug, Clone, Default)]
pub struct ChainView {
    blocks: Vec<StoredBlock>,
    tips: BTreeSet<BlockId>,
    by_height: BTreeMap<u64, Vec<BlockId>>,
    canonical_head: Option<BlockId>,
}

/// Fork-choice order: more work first, then earlier `(found_at, producer)`.
pub fn compare_tips(a: &StoredBlock, b: &StoredBlock) -> Ordering {
    a.cum_work
        .total_cmp(&b.cum_work)
        .then_with(|| b.block.found_at.total_cmp(&a.block.found_at))
        .then_with(|| b.block.producer.cmp(&a.block.producer))
}

impl ChainView {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_id(&self) -> BlockId {
        BlockId(self.blocks.len() as u64)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn get(&self, id: BlockId) -> &StoredBlock {
        &self.blocks[id.0 as usize]
    }

    pub fn block(&self, id: BlockId) -> &Block {
        &self.get(id).block
    }

    pub fn cum_work(&self, id: Option<BlockId>) -> f64 {
        id.map_or(0.0, |id| self.get(id).cum_work)
    }

    pub fn blocks(&self) -> impl Iterator<Item = &StoredBlock> {
        self.blocks.iter()
    }

    pub fn tips(&self) -> &BTreeSet<BlockId> {
        &self.tips
    }

    pub fn canonical_head(&self) -> Option<BlockId> {
        self.canonical_head
    }

    /// Stores `block` with expected work `work` and moves the canonical
    /// head if the new tip beats it. Returns whether the head moved.
    pub fn insert(&mut self, block: Block, work: f64) -> Result<bool, ChainError> {
        if block.id != self.next_id() {
            return Err(ChainError::OutOfSequence {
                got: block.id,
                expected: self.next_id(),
            });
        }
        let parent_work = match block.parent {
            Some(p) if (p.0 as usize) >= self.blocks.len() => {
                return Err(ChainError::MissingParent(p))
            }
            Some(p) => {
                if self.get(p).block.height + 1 != block.height {
                    return Err(ChainError::BadHeight {
                        height: block.height,
                    });
                }
                self.tips.remove(&p);
                self.get(p).cum_work
            }
            None => {
                if block.height != 0 {
                    return Err(ChainError::BadHeight {
                        height: block.height,
                    });
                }
                0.0
            }
        };
        let stored = StoredBlock {
            block,
            cum_work: parent_work + work,
        };
        self.blocks.push(stored);
        self.tips.insert(block.id);
        self.by_height.entry(block.height).or_default().push(block.id);
        let moved = match self.canonical_head {
            None => true,
            Some(h) => compare_tips(&stored, self.get(h)) == Ordering::Greater,
        };
        if moved {
            self.canonical_head = Some(block.id);
        }
        Ok(moved)
    }

    /// Best tip by cumulative work with the deterministic tiebreak.
    pub fn resolve_forks(&self) -> Option<BlockId> {
        self.tips
            .iter()
            .copied()
            .max_by(|&a, &b| compare_tips(self.get(a), self.get(b)))
    }

    /// Canonical chain from height 0 to the head.
    pub fn canonical_chain(&self) -> Vec<Block> {
        let mut chain = Vec::new();
        let mut cur = self.canonical_head;
        while let Some(id) = cur {
            let b = self.get(id).block;
            chain.push(b);
            cur = b.parent;
        }
        chain.reverse();
        chain
    }

    pub fn is_ancestor(&self, ancestor: BlockId, of: BlockId) -> bool {
        let target = self.get(ancestor).block.height;
        let mut cur = Some(of);
        while let Some(id) = cur {
            let b = &self.get(id).block;
            if id == ancestor {
                return true;
            }
            if b.height <= target {
                return false;
            }
            cur = b.parent;
        }
        false
    }

    /// Every parent with at least two children, ordered by height. Forks
    /// below an orphaned branch are reported too.
    pub fn fork_records(&self) -> Vec<ForkRecord> {
        let canonical: BTreeSet<BlockId> =
            self.canonical_chain().into_iter().map(|b| b.id).collect();
        let mut children: BTreeMap<(u64, Option<BlockId>), Vec<BlockId>> = BTreeMap::new();
        for ids in self.by_height.values().filter(|ids| ids.len() >= 2) {
            for &id in ids {
                let b = self.block(id);
                children.entry((b.height, b.parent)).or_default().push(id);
            }
        }
        children
            .into_iter()
            .filter(|(_, ids)| ids.len() >= 2)
            .map(|((height, parent), competing)| ForkRecord {
                height,
                parent,
                resolved_winner: competing.iter().copied().find(|id| canonical.contains(id)),
                round_tag: if height % 2 == 0 {
                    RoundTag::First
                } else {
                    self.block(competing[0]).round_tag
                },
                competing,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Target;

    fn blk(id: u64, height: u64, parent: Option<u64>, found_at: f64, producer: usize) -> Block {
        Block {
            id: BlockId(id),
            height,
            round_tag: if height % 2 == 0 {
                RoundTag::First
            } else {
                RoundTag::Second
            },
            producer,
            parent: parent.map(BlockId),
            found_at,
            target_used: Target::D1,
        }
    }

    #[test]
    fn single_tip() {
        let mut c = ChainView::new();
        assert!(c.insert(blk(0, 0, None, 1.0, 0), 1.0).unwrap());
        assert!(c.insert(blk(1, 1, Some(0), 2.0, 1), 1.0).unwrap());
        assert_eq!(c.resolve_forks(), Some(BlockId(1)));
        assert_eq!(c.canonical_head(), Some(BlockId(1)));
        assert!(c.fork_records().is_empty());
    }

    #[test]
    fn more_work_wins() {
        let mut c = ChainView::new();
        c.insert(blk(0, 0, None, 1.0, 0), 1.0).unwrap();
        c.insert(blk(1, 1, Some(0), 2.0, 1), 0.1).unwrap();
        c.insert(blk(2, 1, Some(0), 3.0, 2), 1.0).unwrap();
        assert_eq!(c.resolve_forks(), Some(BlockId(2)));
        assert_eq!(c.canonical_head(), Some(BlockId(2)));
        let forks = c.fork_records();
        assert_eq!(forks.len(), 1);
        assert_eq!(forks[0].resolved_winner, Some(BlockId(2)));
    }

    #[test]
    fn same_height_different_parents_is_not_a_fork() {
        let mut c = ChainView::new();
        c.insert(blk(0, 0, None, 1.0, 0), 1.0).unwrap();
        c.insert(blk(1, 1, Some(0), 2.0, 1), 1.0).unwrap();
        c.insert(blk(2, 1, Some(0), 2.5, 2), 1.0).unwrap();
        c.insert(blk(3, 2, Some(1), 3.0, 1), 1.0).unwrap();
        c.insert(blk(4, 2, Some(2), 3.5, 2), 1.0).unwrap();
        let forks = c.fork_records();
        assert_eq!(forks.len(), 1);
        assert_eq!(forks[0].height, 1);
        assert_eq!(forks[0].competing, vec![BlockId(1), BlockId(2)]);
    }

    #[test]
    fn equal_work_tiebreak_enumeration() {
        // All orderings of (found_at, producer) for two equal-work tips.
        for (fa, pa, fb, pb) in [
            (1.0, 0, 2.0, 1),
            (2.0, 0, 1.0, 1),
            (1.0, 1, 1.0, 0),
            (1.0, 0, 1.0, 1),
        ] {
            let mut c = ChainView::new();
            c.insert(blk(0, 0, None, 0.5, 9), 1.0).unwrap();
            c.insert(blk(1, 1, Some(0), fa, pa), 1.0).unwrap();
            c.insert(blk(2, 1, Some(0), fb, pb), 1.0).unwrap();
            let expected = if (fa, pa) < (fb, pb) { 1 } else { 2 };
            assert_eq!(c.resolve_forks(), Some(BlockId(expected)));
            assert_eq!(c.canonical_head(), Some(BlockId(expected)));
        }
    }

    #[test]
    fn rejects_orphans_and_bad_heights() {
        let mut c = ChainView::new();
        assert!(c.insert(blk(0, 0, Some(5), 1.0, 0), 1.0).is_err());
        assert!(c.insert(blk(0, 3, None, 1.0, 0), 1.0).is_err());
        c.insert(blk(0, 0, None, 1.0, 0), 1.0).unwrap();
        assert!(c.insert(blk(1, 2, Some(0), 1.0, 0), 1.0).is_err());
        assert!(c.insert(blk(7, 1, Some(0), 1.0, 0), 1.0).is_err());
    }

    #[test]
    fn ancestry() {
        let mut c = ChainView::new();
        c.insert(blk(0, 0, None, 1.0, 0), 1.0).unwrap();
        c.insert(blk(1, 1, Some(0), 2.0, 0), 1.0).unwrap();
        c.insert(blk(2, 1, Some(0), 2.0, 1), 1.0).unwrap();
        c.insert(blk(3, 2, Some(1), 3.0, 0), 1.0).unwrap();
        assert!(c.is_ancestor(BlockId(0), BlockId(3)));
        assert!(c.is_ancestor(BlockId(1), BlockId(3)));
        assert!(!c.is_ancestor(BlockId(2), BlockId(3)));
        assert_eq!(c.canonical_chain().len(), 3);
    }
}
