//! Energy accounting.
//!
//! The simulator integrates `h_i * P * dt` over every interval a miner
//! spends hashing. Work is booked against the epoch and round of the puzzle
//! being solved. The closed forms below are the analytic counterparts used
//! as oracles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::MinerId;
use crate::stochastic::{HashPowerProfile, MiningRate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("interval must be finite and >= 0, got {0}")]
    NegativeInterval(f64),
    #[error("unknown miner {0}")]
    UnknownMiner(MinerId),
    #[error("runner-up times must be sorted ascending and >= 0")]
    UnsortedTimes,
    #[error("{times} runner-up times for {runnerups} runners-up")]
    LengthMismatch { runnerups: usize, times: usize },
    #[error("the first-round winner cannot be a runner-up")]
    WinnerIsRunnerUp,
    #[error("the runner-up set is empty")]
    NoRunnerUps,
    #[error("energies must be >= 0")]
    NegativeEnergy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Round {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochEnergy {
    pub first: f64,
    pub second: f64,
}

impl EpochEnergy {
    pub fn total(&self) -> f64 {
        self.first + self.second
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub total_power: f64,
    pub per_miner: Vec<f64>,
    pub per_epoch: Vec<EpochEnergy>,
}

impl EnergyLedger {
    pub fn new(miners: usize, total_power: f64) -> Self {
        Self {
            total_power,
            per_miner: vec![0.0; miners],
            per_epoch: Vec::new(),
        }
    }

    /// Books `power_fraction * P * interval` to `miner` and to the given
    /// epoch and round.
    pub fn integrate(
        &mut self,
        miner: MinerId,
        power_fraction: f64,
        interval: f64,
        epoch: u64,
        round: Round,
    ) -> Result<(), EnergyError> {
        if !(interval.is_finite() && interval >= 0.0) {
            return Err(EnergyError::NegativeInterval(interval));
        }
        if miner >= self.per_miner.len() {
            return Err(EnergyError::UnknownMiner(miner));
        }
        if interval == 0.0 {
            return Ok(());
        }
        let e = power_fraction * self.total_power * interval;
        self.per_miner[miner] += e;
        let idx = epoch as usize;
        if self.per_epoch.len() <= idx {
            self.per_epoch.resize(idx + 1, EpochEnergy::default());
        }
        match round {
            Round::First => self.per_epoch[idx].first += e,
            Round::Second => self.per_epoch[idx].second += e,
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.per_miner.iter().sum()
    }

    pub fn epoch(&self, epoch: u64) -> EpochEnergy {
        self.per_epoch
            .get(epoch as usize)
            .copied()
            .unwrap_or_default()
    }

    /// Element-wise sum; associative and commutative up to float rounding.
    pub fn merge(&self, other: &EnergyLedger) -> EnergyLedger {
        let miners = self.per_miner.len().max(other.per_miner.len());
        let epochs = self.per_epoch.len().max(other.per_epoch.len());
        let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        let ep = |v: &[EpochEnergy], i: usize| v.get(i).copied().unwrap_or_default();
        EnergyLedger {
            total_power: self.total_power,
            per_miner: (0..miners)
                .map(|i| at(&self.per_miner, i) + at(&other.per_miner, i))
                .collect(),
            per_epoch: (0..epochs)
                .map(|i| {
                    let (a, b) = (ep(&self.per_epoch, i), ep(&other.per_epoch, i));
                    EpochEnergy {
                        first: a.first + b.first,
                        second: a.second + b.second,
                    }
                })
                .collect(),
        }
    }
}

/// Energy per PoW block, `P / lambda`.
pub fn closed_form_pow(total_power: f64, rate: MiningRate) -> f64 {
    total_power / rate.lambda()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstRoundEnergy {
    /// Competing power shrinks as runners-up finish.
    pub event_driven: f64,
    /// The inner sum taken as written, `1 - h_f + sum_{j=i-1}^{k-1} h_j`, `h_0 = 0`.
    pub literal: f64,
}

/// First-round energy for a given winner and runners-up.
///
/// `runnerup_times` are offsets from the winner's solve, in finishing
/// order. The pre-winner phase is charged its expectation `P / lambda`.
pub fn closed_form_first_round(
    profile: &HashPowerProfile,
    rate: MiningRate,
    winner: MinerId,
    runnerups: &[MinerId],
    runnerup_times: &[f64],
) -> Result<FirstRoundEnergy, EnergyError> {
    if runnerups.len() != runnerup_times.len() {
        return Err(EnergyError::LengthMismatch {
            runnerups: runnerups.len(),
            times: runnerup_times.len(),
        });
    }
    if runnerups.contains(&winner) {
        return Err(EnergyError::WinnerIsRunnerUp);
    }
    if runnerup_times.iter().any(|t| !(*t >= 0.0))
        || runnerup_times.windows(2).any(|w| w[1] < w[0])
    {
        return Err(EnergyError::UnsortedTimes);
    }
    let p = profile.total_power();
    let h_f = profile.fraction(winner);
    let h: Vec<f64> = runnerups.iter().map(|&m| profile.fraction(m)).collect();
    let k = h.len();
    let base = p / rate.lambda();

    let mut event_driven = base;
    let mut literal = base;
    let mut prev = 0.0;
    let mut finished = 0.0;
    for i in 0..k {
        let gap = runnerup_times[i] - prev;
        event_driven += p * gap * (1.0 - h_f - finished);
        // With 1-based i the written sum runs over h_{i-1}..h_{k-1}, h_0 = 0.
        let inner: f64 = (i.saturating_sub(1)..k - 1).map(|j| h[j]).sum();
        literal += p * gap * (1.0 - h_f + inner);
        finished += h[i];
        prev = runnerup_times[i];
    }
    Ok(FirstRoundEnergy {
        event_driven,
        literal,
    })
}

/// Second-round energy `P / lambda * sum(h_i)` over the runner-up set.
pub fn closed_form_second_round(
    profile: &HashPowerProfile,
    rate: MiningRate,
    runnerups: &[MinerId],
) -> Result<f64, EnergyError> {
    if runnerups.is_empty() {
        return Err(EnergyError::NoRunnerUps);
    }
    Ok(profile.total_power() / rate.lambda() * profile.power_of(runnerups.iter().copied()))
}

/// Saving in percent of two PoW blocks: `(2E - E1 - E2) / 2E * 100`.
pub fn saving(e_pow: f64, e_first: f64, e_second: f64) -> Result<f64, EnergyError> {
    if !(e_pow >= 0.0 && e_first >= 0.0 && e_second >= 0.0) {
        return Err(EnergyError::NegativeEnergy);
    }
    Ok((2.0 * e_pow - e_first - e_second) / (2.0 * e_pow) * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize) -> HashPowerProfile {
        HashPowerProfile::uniform(n, 1.0).unwrap()
    }

    fn per_10() -> MiningRate {
        MiningRate::new(0.1).unwrap()
    }

    #[test]
    fn integrate_examples() {
        let mut l = EnergyLedger::new(2, 1.0);
        l.integrate(0, 0.01, 600.0, 0, Round::First).unwrap();
        assert!((l.per_miner[0] - 6.0).abs() < 1e-12);
        l.integrate(1, 0.5, 0.0, 3, Round::Second).unwrap();
        assert_eq!(l.per_miner[1], 0.0);
        assert_eq!(l.per_epoch.len(), 1);
        assert!(l.integrate(0, 0.5, -1.0, 0, Round::First).is_err());
        assert!(l.integrate(5, 0.5, 1.0, 0, Round::First).is_err());
    }

    #[test]
    fn pow_closed_form() {
        assert_eq!(closed_form_pow(1.0, per_10()), 10.0);
        let doubled = MiningRate::new(0.2).unwrap();
        assert_eq!(closed_form_pow(1.0, doubled), 5.0);
    }

    #[test]
    fn first_round_without_runnerups_is_pow() {
        let e = closed_form_first_round(&uniform(100), per_10(), 0, &[], &[]).unwrap();
        assert_eq!(e.event_driven, 10.0);
        assert_eq!(e.literal, 10.0);
    }

    #[test]
    fn first_round_single_runnerup() {
        // Runner-up 0.1/lambda after the winner; 99 % of the power still hashing.
        let e = closed_form_first_round(&uniform(100), per_10(), 0, &[1], &[1.0]).unwrap();
        assert!((e.event_driven - 10.0 * (1.0 + 0.1 * 0.99)).abs() < 1e-12);
    }

    #[test]
    fn first_round_two_runnerups_by_hand() {
        let prof = HashPowerProfile::new(vec![0.5, 0.3, 0.2], 2.0).unwrap();
        let rate = MiningRate::new(1.0).unwrap();
        let e = closed_form_first_round(&prof, rate, 0, &[1, 2], &[1.0, 3.0]).unwrap();
        // 2 * (1 + 1 * 0.5 + 2 * 0.2)
        assert!((e.event_driven - 3.8).abs() < 1e-12);
        // Literal: both gaps get 1 - 0.5 + 0.3.
        assert!((e.literal - 2.0 * (1.0 + 1.0 * 0.8 + 2.0 * 0.8)).abs() < 1e-12);
    }

    #[test]
    fn first_round_rejects_bad_input() {
        let p = uniform(10);
        assert_eq!(
            closed_form_first_round(&p, per_10(), 0, &[1, 2], &[2.0, 1.0]),
            Err(EnergyError::UnsortedTimes)
        );
        assert_eq!(
            closed_form_first_round(&p, per_10(), 1, &[1], &[1.0]),
            Err(EnergyError::WinnerIsRunnerUp)
        );
        assert!(closed_form_first_round(&p, per_10(), 0, &[1], &[]).is_err());
    }

    #[test]
    fn second_round_examples() {
        let p = uniform(100);
        assert!((closed_form_second_round(&p, per_10(), &[3]).unwrap() - 0.1).abs() < 1e-12);
        let all: Vec<usize> = (0..100).collect();
        assert!((closed_form_second_round(&p, per_10(), &all).unwrap() - 10.0).abs() < 1e-9);
        assert!(closed_form_second_round(&p, per_10(), &[]).is_err());
    }

    #[test]
    fn saving_examples() {
        assert_eq!(saving(10.0, 10.0, 0.0).unwrap(), 50.0);
        assert_eq!(saving(10.0, 10.0, 10.0).unwrap(), 0.0);
        assert!(saving(10.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn merge_is_elementwise() {
        let mut a = EnergyLedger::new(2, 1.0);
        a.integrate(0, 1.0, 1.0, 0, Round::First).unwrap();
        let mut b = EnergyLedger::new(2, 1.0);
        b.integrate(1, 1.0, 2.0, 2, Round::Second).unwrap();
        let ab = a.merge(&b);
        assert_eq!(ab, b.merge(&a));
        assert_eq!(ab.total(), 3.0);
        assert_eq!(ab.epoch(2).second, 2.0);
        assert_eq!(ab.epoch(7), EpochEnergy::default());
    }
}
