//! Message propagation: per-link delays and partitions.

use std::collections::{BTreeMap, BTreeSet};

use crate::config::{DelayModel, Partition, TopologySpec};
use crate::protocol::MinerId;

#[derive(Debug, Clone)]
struct ActivePartition {
    start: f64,
    end: f64,
    isolated: BTreeSet<MinerId>,
}

#[derive(Debug, Clone)]
pub struct TopologyModel {
    delay: DelayModel,
    partitions: Vec<ActivePartition>,
}

impl TopologyModel {
    pub fn new(spec: &TopologySpec) -> Self {
        let mut t = Self {
            delay: spec.delay.clone(),
            partitions: Vec::new(),
        };
        for p in &spec.partitions {
            t.add_partition(p);
        }
        t
    }

    pub fn add_partition(&mut self, p: &Partition) {
        self.partitions.push(ActivePartition {
            start: p.start,
            end: p.end,
            isolated: p.isolated.iter().copied().collect(),
        });
    }

    pub fn delay(&self, from: MinerId, to: MinerId) -> f64 {
        match &self.delay {
            DelayModel::Zero => 0.0,
            DelayModel::Constant(d) => *d,
            DelayModel::PerPair(m) => m[from][to],
        }
    }

    pub fn reachable(&self, from: MinerId, to: MinerId, now: f64) -> bool {
        !self.partitions.iter().any(|p| {
            p.start <= now
                && now < p.end
                && p.isolated.contains(&from) != p.isolated.contains(&to)
        })
    }

    /// Whether any partition is in force at `now`.
    pub fn is_split(&self, now: f64) -> bool {
        self.partitions
            .iter()
            .any(|p| p.start <= now && now < p.end && !p.isolated.is_empty())
    }

    /// Arrival groups for a broadcast by `sender` at `now` to miners
    /// `0..n`, ascending by arrival time, recipients ascending within a
    /// group. Unreachable peers get nothing; the engine resyncs them when
    /// the partition ends.
    pub fn deliver(&self, sender: MinerId, now: f64, n: usize) -> Vec<(f64, Vec<MinerId>)> {
        let mut groups: BTreeMap<u64, Vec<MinerId>> = BTreeMap::new();
        for peer in (0..n).filter(|&p| p != sender) {
            if self.reachable(sender, peer, now) {
                let at = now + self.delay(sender, peer);
                groups.entry((at + 0.0).to_bits()).or_default().push(peer);
            }
        }
        groups
            .into_iter()
            .map(|(bits, peers)| (f64::from_bits(bits), peers))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(delay: DelayModel, partitions: Vec<Partition>) -> TopologySpec {
        TopologySpec { delay, partitions }
    }

    #[test]
    fn zero_delay_is_one_group() {
        let t = TopologyModel::new(&spec(DelayModel::Zero, vec![]));
        assert_eq!(t.deliver(2, 5.0, 4), vec![(5.0, vec![0, 1, 3])]);
    }

    #[test]
    fn per_pair_groups_by_arrival() {
        let m = vec![
            vec![0.0, 2.0, 1.0],
            vec![2.0, 0.0, 2.0],
            vec![1.0, 2.0, 0.0],
        ];
        let t = TopologyModel::new(&spec(DelayModel::PerPair(m), vec![]));
        assert_eq!(t.deliver(0, 10.0, 3), vec![(11.0, vec![2]), (12.0, vec![1])]);
    }

    #[test]
    fn partitions_block_both_directions_while_active() {
        let p = Partition {
            start: 10.0,
            end: 20.0,
            isolated: vec![1],
        };
        let t = TopologyModel::new(&spec(DelayModel::Constant(2.0), vec![p]));
        assert!(t.reachable(0, 1, 9.9));
        assert!(!t.reachable(0, 1, 10.0));
        assert!(!t.reachable(1, 0, 15.0));
        assert!(t.reachable(0, 2, 15.0));
        assert!(t.reachable(1, 0, 20.0));
        assert_eq!(t.deliver(0, 15.0, 3), vec![(17.0, vec![2])]);
        assert!(t.deliver(1, 15.0, 3).is_empty());
        assert!(t.is_split(15.0));
        assert!(!t.is_split(20.0));
    }
}
