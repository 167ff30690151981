//! How long a single producer can keep the chain to itself.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::config::Algorithm;
use crate::stochastic::MiningRate;

/// Censorship window for `k` consecutive wins.
///
/// Under Green-PoW a first-round winner never produces the following
/// second-round block, so outside timeouts no producer holds more than two
/// consecutive heights (second block of one epoch, first of the next).
pub fn censorship_window(
    k: u64,
    rate: MiningRate,
    algorithm: Algorithm,
) -> Result<f64, AnalysisError> {
    if k == 0 {
        return Err(AnalysisError::InvalidK);
    }
    let blocks = match algorithm {
        Algorithm::Pow => k,
        Algorithm::GreenPow => k.min(2),
    };
    Ok(blocks as f64 / rate.lambda())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats<T: Ord> {
    /// Longest run of consecutive blocks per producer.
    pub longest: BTreeMap<T, usize>,
    /// Number of maximal runs of length >= 2 per producer.
    pub repeated_runs: BTreeMap<T, usize>,
    pub blocks: usize,
}

impl<T: Ord> RunStats<T> {
    pub fn max_run(&self) -> usize {
        self.longest.values().copied().max().unwrap_or(0)
    }

    pub fn longest_of(&self, who: &T) -> usize {
        self.longest.get(who).copied().unwrap_or(0)
    }

    /// Observed censorship window of `who`: its longest run in time units.
    pub fn window_of(&self, who: &T, rate: MiningRate) -> f64 {
        self.longest_of(who) as f64 / rate.lambda()
    }
}

/// Scans a producer sequence in height order.
pub fn consecutive_runs<T: Ord + Clone>(producers: &[T]) -> RunStats<T> {
    let mut stats = RunStats {
        longest: BTreeMap::new(),
        repeated_runs: BTreeMap::new(),
        blocks: producers.len(),
    };
    for run in producers.chunk_by(|a, b| a == b) {
        let who = &run[0];
        let best = stats.longest.entry(who.clone()).or_insert(0);
        *best = (*best).max(run.len());
        if run.len() >= 2 {
            *stats.repeated_runs.entry(who.clone()).or_insert(0) += 1;
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pow_window_is_k_intervals() {
        let r = MiningRate::new(1.0 / 600.0).unwrap();
        let w = censorship_window(3, r, Algorithm::Pow).unwrap();
        assert!((w - 1800.0).abs() < 1e-9);
        assert!((censorship_window(3, r, Algorithm::GreenPow).unwrap() - 1200.0).abs() < 1e-9);
        assert!(censorship_window(0, r, Algorithm::Pow).is_err());
    }

    #[test]
    fn runs() {
        let s = consecutive_runs(&[1, 1, 2, 1, 1, 1, 3, 3]);
        assert_eq!(s.longest_of(&1), 3);
        assert_eq!(s.longest_of(&2), 1);
        assert_eq!(s.repeated_runs[&1], 2);
        assert_eq!(s.repeated_runs[&3], 1);
        assert_eq!(s.max_run(), 3);
        assert_eq!(consecutive_runs::<u8>(&[]).max_run(), 0);
    }
}
