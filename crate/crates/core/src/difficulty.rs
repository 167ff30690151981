//! Difficulty retargeting.
//!
//! Difficulty is expressed as the hash power fraction the target was tuned
//! for: a miner with fraction `h` solves at rate `h * lambda / d`. With
//! `d1 = 1` the full network produces first-round blocks every `T_E`; `d2`
//! is tuned to the power of a typical runner-up set.
//!
//! Each track retargets on its own window with `d <- d * T_E / T_avg`.
//! Timeout blocks are mined against `D1` and are counted on that track.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{RoundTag, Target};
use crate::stochastic::{MiningRate, StochasticError};

pub const BITCOIN_WINDOW: usize = 2016;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DifficultyError {
    #[error("difficulty must be finite and > 0, got {0}")]
    InvalidDifficulty(f64),
    #[error("retarget window must hold at least one interval")]
    EmptyWindow,
    #[error("no active hash power for the {0:?} round")]
    NoActivePower(RoundTag),
    #[error(transparent)]
    Rate(#[from] StochasticError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Track {
    D1,
    D2,
}

impl From<Target> for Track {
    fn from(t: Target) -> Self {
        match t {
            Target::D1 => Track::D1,
            Target::D2 => Track::D2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetargetRecord {
    pub window: u64,
    pub track: Track,
    pub at: f64,
    pub d1: f64,
    pub d2: f64,
    /// Mean interval of the closed window; `None` when it was empty.
    pub t_avg: Option<f64>,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyState {
    pub d1: f64,
    pub d2: f64,
    /// Intervals per track before a retarget. `None` freezes difficulty.
    pub window_blocks: Option<usize>,
    pub t_expected: f64,
    pub window_d1: Vec<f64>,
    pub window_d2: Vec<f64>,
    /// Every round tag that ever fed each track.
    pub fed_d1: BTreeMap<String, u64>,
    pub fed_d2: BTreeMap<String, u64>,
    pub history: Vec<RetargetRecord>,
}

impl DifficultyState {
    pub fn new(
        d1: f64,
        d2: f64,
        window_blocks: Option<usize>,
        rate: MiningRate,
    ) -> Result<Self, DifficultyError> {
        for d in [d1, d2] {
            if !(d.is_finite() && d > 0.0) {
                return Err(DifficultyError::InvalidDifficulty(d));
            }
        }
        if window_blocks == Some(0) {
            return Err(DifficultyError::EmptyWindow);
        }
        Ok(Self {
            d1,
            d2,
            window_blocks,
            t_expected: rate.expected_interval(),
            window_d1: Vec::new(),
            window_d2: Vec::new(),
            fed_d1: BTreeMap::new(),
            fed_d2: BTreeMap::new(),
            history: Vec::new(),
        })
    }

    pub fn difficulty(&self, track: Track) -> f64 {
        match track {
            Track::D1 => self.d1,
            Track::D2 => self.d2,
        }
    }

    fn window(&self, track: Track) -> &[f64] {
        match track {
            Track::D1 => &self.window_d1,
            Track::D2 => &self.window_d2,
        }
    }

    /// Adds a block interval to the track named by `target_used`.
    /// Non-positive intervals are dropped.
    pub fn record_block_interval(&mut self, round_tag: RoundTag, target_used: Target, interval: f64) {
        if !(interval > 0.0) {
            return;
        }
        let (window, fed) = match Track::from(target_used) {
            Track::D1 => (&mut self.window_d1, &mut self.fed_d1),
            Track::D2 => (&mut self.window_d2, &mut self.fed_d2),
        };
        window.push(interval);
        *fed.entry(round_tag.as_str().to_string()).or_default() += 1;
    }

    /// Whether `track` has collected a full window.
    pub fn window_full(&self, track: Track) -> bool {
        self.window_blocks
            .is_some_and(|w| self.window(track).len() >= w)
    }

    /// Applies `d <- d * T_E / T_avg` to `track` and clears its window.
    /// An empty window carries the difficulty forward.
    pub fn retarget(&mut self, track: Track, at: f64) -> &RetargetRecord {
        let window = match track {
            Track::D1 => std::mem::take(&mut self.window_d1),
            Track::D2 => std::mem::take(&mut self.window_d2),
        };
        let t_avg = if window.is_empty() {
            warn!("empty {track:?} window at t={at}, difficulty carried forward");
            None
        } else {
            Some(window.iter().sum::<f64>() / window.len() as f64)
        };
        let factor = t_avg.map_or(1.0, |avg| retarget_factor(self.t_expected, avg));
        match track {
            Track::D1 => self.d1 *= factor,
            Track::D2 => self.d2 *= factor,
        }
        let index = self.history.iter().filter(|r| r.track == track).count() as u64;
        self.history.push(RetargetRecord {
            window: index,
            track,
            at,
            d1: self.d1,
            d2: self.d2,
            t_avg,
            factor,
        });
        self.history.last().expect("just pushed")
    }

    /// Network block rate for a round given the active hash power fraction.
    pub fn effective_rate(
        &self,
        nominal: MiningRate,
        round: RoundTag,
        active_power_fraction: f64,
    ) -> Result<MiningRate, DifficultyError> {
        if !(active_power_fraction > 0.0) {
            return Err(DifficultyError::NoActivePower(round));
        }
        let d = match round {
            RoundTag::First | RoundTag::SecondAfterTimeout => self.d1,
            RoundTag::Second => self.d2,
        };
        Ok(nominal.scaled(active_power_fraction / d)?)
    }
}

/// `F = T_E / T_avg`.
pub fn retarget_factor(t_expected: f64, t_avg: f64) -> f64 {
    t_expected / t_avg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(window: Option<usize>) -> DifficultyState {
        DifficultyState::new(1.0, 0.05, window, MiningRate::new(1.0 / 600.0).unwrap()).unwrap()
    }

    #[test]
    fn classification_follows_target() {
        let mut s = state(Some(10));
        s.record_block_interval(RoundTag::First, Target::D1, 600.0);
        s.record_block_interval(RoundTag::SecondAfterTimeout, Target::D1, 900.0);
        s.record_block_interval(RoundTag::Second, Target::D2, 300.0);
        assert_eq!(s.window_d1, vec![600.0, 900.0]);
        assert_eq!(s.window_d2, vec![300.0]);
        assert!(!s.fed_d2.contains_key("SECOND_AFTER_TIMEOUT"));
    }

    #[test]
    fn retarget_examples() {
        let mut s = state(Some(2));
        s.record_block_interval(RoundTag::First, Target::D1, 600.0);
        s.record_block_interval(RoundTag::First, Target::D1, 600.0);
        assert!(s.window_full(Track::D1));
        assert_eq!(s.retarget(Track::D1, 0.0).factor, 1.0);
        assert_eq!(s.d1, 1.0);

        s.record_block_interval(RoundTag::First, Target::D1, 300.0);
        s.record_block_interval(RoundTag::First, Target::D1, 300.0);
        s.retarget(Track::D1, 0.0);
        assert!((s.d1 - 2.0).abs() < 1e-12);

        s.record_block_interval(RoundTag::Second, Target::D2, 1200.0);
        s.retarget(Track::D2, 0.0);
        assert!((s.d2 - 0.025).abs() < 1e-12);
        assert!(s.window_d2.is_empty());
    }

    #[test]
    fn empty_window_carries_forward() {
        let mut s = state(Some(5));
        let r = s.retarget(Track::D2, 1.0).clone();
        assert_eq!(r.t_avg, None);
        assert_eq!(s.d2, 0.05);
    }

    #[test]
    fn frozen_state_never_fills() {
        let mut s = state(None);
        for _ in 0..5000 {
            s.record_block_interval(RoundTag::First, Target::D1, 1.0);
        }
        assert!(!s.window_full(Track::D1));
    }

    #[test]
    fn effective_rate_is_linear_in_power() {
        let lambda = MiningRate::new(1.0 / 600.0).unwrap();
        let s = state(None);
        let full = s.effective_rate(lambda, RoundTag::First, 1.0).unwrap();
        assert!((full.lambda() - lambda.lambda()).abs() < 1e-18);
        let cal = s.effective_rate(lambda, RoundTag::Second, 0.05).unwrap();
        assert!((cal.lambda() - lambda.lambda()).abs() < 1e-15);
        let half = s.effective_rate(lambda, RoundTag::Second, 0.025).unwrap();
        assert!((half.lambda() - lambda.lambda() / 2.0).abs() < 1e-15);
        assert!(s.effective_rate(lambda, RoundTag::Second, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_construction() {
        let r = MiningRate::new(1.0).unwrap();
        assert!(DifficultyState::new(0.0, 1.0, None, r).is_err());
        assert!(DifficultyState::new(1.0, f64::NAN, None, r).is_err());
        assert!(DifficultyState::new(1.0, 1.0, Some(0), r).is_err());
    }
}
