//! Mining as a Poisson process.
//!
//! Every random quantity in the simulator is drawn through this module:
//! inter-block times via the inverse exponential CDF, the solve times of
//! runners-up, the winner of a race and the per-miner hash power split.
//!
//! All uniform draws come from `[0, 1)`, so `ln(1 - p)` is always finite.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on `sum(h_i) == 1`.
pub const PROFILE_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StochasticError {
    #[error("mining rate must be finite and > 0, got {0}")]
    InvalidRate(f64),
    #[error("probability must lie in [0, 1), got {0}")]
    InvalidProbability(f64),
    #[error("cumulative stopped hash power must lie in [0, 1), got {0}")]
    NoRemainingPower(f64),
    #[error("invalid hash power profile: {0}")]
    InvalidProfile(String),
    #[error("concentration leaves an empty miner group (n={n}, top={top_share_holders})")]
    EmptyGroup { n: usize, top_share_holders: f64 },
}

/// Block generation rate `lambda`, in blocks per time unit.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MiningRate(f64);

impl MiningRate {
    pub fn new(lambda: f64) -> Result<Self, StochasticError> {
        if lambda.is_finite() && lambda > 0.0 {
            Ok(Self(lambda))
        } else {
            Err(StochasticError::InvalidRate(lambda))
        }
    }

    /// Rate whose mean inter-arrival time is `interval`.
    pub fn from_interval(interval: f64) -> Result<Self, StochasticError> {
        Self::new(1.0 / interval)
    }

    pub fn lambda(self) -> f64 {
        self.0
    }

    /// `T_E = 1 / lambda`.
    pub fn expected_interval(self) -> f64 {
        1.0 / self.0
    }

    pub fn scaled(self, factor: f64) -> Result<Self, StochasticError> {
        Self::new(self.0 * factor)
    }
}

impl TryFrom<f64> for MiningRate {
    type Error = StochasticError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<MiningRate> for f64 {
    fn from(r: MiningRate) -> f64 {
        r.0
    }
}

/// What a random substream is used for. Part of the stream key, so two
/// purposes never share draws even for the same miner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Race,
    MinerClock,
    Profile,
    Pilot,
    Shares,
    Scenario,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Race => 1,
            Purpose::MinerClock => 2,
            Purpose::Profile => 3,
            Purpose::Pilot => 4,
            Purpose::Shares => 5,
            Purpose::Scenario => 6,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded ChaCha8 stream. Identical `(seed, stream_id)` pairs always replay
/// the same sequence.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    /// Substream keyed by `(replication, miner, purpose)` under one root seed.
    pub fn substream(seed: u64, replication: u64, miner: u64, purpose: Purpose) -> Self {
        let key = splitmix64(splitmix64(splitmix64(replication) ^ miner) ^ purpose.tag());
        Self::new(seed, key)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw from `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Standard exponential variate (mean 1).
    pub fn unit_exponential(&mut self) -> f64 {
        -(1.0 - self.uniform()).ln()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.rng);
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// `Pr[T <= t] = 1 - exp(-lambda t)`.
pub fn exponential_cdf(rate: MiningRate, t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        -(-rate.lambda() * t).exp_m1()
    }
}

/// Inverse CDF: `t = -(1/lambda) ln(1 - p)`.
pub fn inverse_cdf(rate: MiningRate, p: f64) -> Result<f64, StochasticError> {
    if !(0.0..1.0).contains(&p) {
        return Err(StochasticError::InvalidProbability(p));
    }
    Ok(-(-p).ln_1p() / rate.lambda())
}

pub fn sample_block_time(rate: MiningRate, rng: &mut RandomSource) -> f64 {
    let p = rng.uniform();
    -(-p).ln_1p() / rate.lambda()
}

/// Solve time of the next runner-up once miners holding `h_prev` of the
/// power (the winner plus earlier runners-up) have stopped competing:
/// `t = -ln(1 - p) / (lambda (1 - h_prev))`.
pub fn runnerup_time(rate: MiningRate, h_prev: f64, p: f64) -> Result<f64, StochasticError> {
    if !(0.0..1.0).contains(&h_prev) || h_prev.is_nan() {
        return Err(StochasticError::NoRemainingPower(h_prev));
    }
    let remaining = rate.scaled(1.0 - h_prev)?;
    inverse_cdf(remaining, p)
}

pub fn sample_runnerup_time(
    rate: MiningRate,
    h_prev: f64,
    rng: &mut RandomSource,
) -> Result<f64, StochasticError> {
    if !(0.0..1.0).contains(&h_prev) || h_prev.is_nan() {
        return Err(StochasticError::NoRemainingPower(h_prev));
    }
    runnerup_time(rate, h_prev, rng.uniform())
}

/// Per-miner hash fractions `h_i` (summing to one) and total network power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile", into = "RawProfile")]
pub struct HashPowerProfile {
    fractions: Vec<f64>,
    total_power: f64,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawProfile {
    fractions: Vec<f64>,
    total_power: f64,
}

impl TryFrom<RawProfile> for HashPowerProfile {
    type Error = StochasticError;
    fn try_from(raw: RawProfile) -> Result<Self, Self::Error> {
        HashPowerProfile::new(raw.fractions, raw.total_power)
    }
}

impl From<HashPowerProfile> for RawProfile {
    fn from(p: HashPowerProfile) -> Self {
        RawProfile {
            fractions: p.fractions,
            total_power: p.total_power,
        }
    }
}

impl HashPowerProfile {
    pub fn new(fractions: Vec<f64>, total_power: f64) -> Result<Self, StochasticError> {
        if fractions.is_empty() {
            return Err(StochasticError::InvalidProfile("no miners".into()));
        }
        if !(total_power.is_finite() && total_power > 0.0) {
            return Err(StochasticError::InvalidProfile(format!(
                "total power must be > 0, got {total_power}"
            )));
        }
        if let Some((i, h)) = fractions
            .iter()
            .enumerate()
            .find(|(_, h)| !(h.is_finite() && **h > 0.0))
        {
            return Err(StochasticError::InvalidProfile(format!(
                "miner {i} has non-positive fraction {h}"
            )));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > PROFILE_SUM_TOLERANCE {
            return Err(StochasticError::InvalidProfile(format!(
                "fractions sum to {sum}, expected 1"
            )));
        }
        let mut acc = 0.0;
        let cumulative = fractions
            .iter()
            .map(|h| {
                acc += h;
                acc
            })
            .collect();
        Ok(Self {
            fractions,
            total_power,
            cumulative,
        })
    }

    pub fn uniform(n: usize, total_power: f64) -> Result<Self, StochasticError> {
        if n == 0 {
            return Err(StochasticError::InvalidProfile("no miners".into()));
        }
        Self::new(vec![1.0 / n as f64; n], total_power)
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn fraction(&self, miner: usize) -> f64 {
        self.fractions[miner]
    }

    pub fn total_power(&self) -> f64 {
        self.total_power
    }

    /// Sum of `h_i` over `miners`.
    pub fn power_of<I: IntoIterator<Item = usize>>(&self, miners: I) -> f64 {
        miners.into_iter().map(|m| self.fractions[m]).sum()
    }

    /// Categorical draw with weights `h_i`.
    pub fn categorical(&self, rng: &mut RandomSource) -> usize {
        let total = *self.cumulative.last().expect("non-empty profile");
        let target = rng.uniform() * total;
        let idx = self.cumulative.partition_point(|&c| c <= target);
        idx.min(self.fractions.len() - 1)
    }
}

/// Two-group hash power split: the top `top_share_holders` fraction of
/// miners share `held_share` of the power equally, the rest share the
/// remainder equally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    pub top_share_holders: f64,
    #[serde(default = "Concentration::default_held_share")]
    pub held_share: f64,
}

impl Concentration {
    pub const fn new(top_share_holders: f64) -> Self {
        Self {
            top_share_holders,
            held_share: 0.5,
        }
    }

    fn default_held_share() -> f64 {
        0.5
    }

    /// Size of the top group, `ceil(n * top)`.
    pub fn top_group_size(&self, n: usize) -> usize {
        // 200 * 0.02 is 4.000000000000001 in binary floating point.
        ((n as f64) * self.top_share_holders - 1e-9).ceil().max(0.0) as usize
    }
}

pub fn build_power_profile(
    n: usize,
    concentration: Concentration,
    total_power: f64,
    rng: &mut RandomSource,
) -> Result<HashPowerProfile, StochasticError> {
    let Concentration {
        top_share_holders,
        held_share,
    } = concentration;
    if n < 2 {
        return Err(StochasticError::InvalidProfile(format!(
            "need at least 2 miners, got {n}"
        )));
    }
    if !(top_share_holders > 0.0 && top_share_holders <= 0.5) {
        return Err(StochasticError::InvalidProfile(format!(
            "top share holders must lie in (0, 0.5], got {top_share_holders}"
        )));
    }
    if !(held_share > 0.0 && held_share < 1.0) {
        return Err(StochasticError::InvalidProfile(format!(
            "held share must lie in (0, 1), got {held_share}"
        )));
    }
    let top = concentration.top_group_size(n);
    if top == 0 || top >= n {
        return Err(StochasticError::EmptyGroup {
            n,
            top_share_holders,
        });
    }
    let top_h = held_share / top as f64;
    let rest_h = (1.0 - held_share) / (n - top) as f64;
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut fractions = vec![rest_h; n];
    for &m in &order[..top] {
        fractions[m] = top_h;
    }
    HashPowerProfile::new(fractions, total_power)
}

/// Winner of a race among all miners and its solve time.
///
/// Uses the superposition form: a categorical draw with weights `h_i` for
/// the winner and one exponential with rate `lambda` for the time. This is
/// distributed identically to the minimum of independent exponentials with
/// rates `h_i lambda`.
pub fn winner_draw(
    profile: &HashPowerProfile,
    rate: MiningRate,
    rng: &mut RandomSource,
) -> (usize, f64) {
    let winner = profile.categorical(rng);
    let t = sample_block_time(rate, rng);
    (winner, t)
}

/// Weighted random permutation of `0..weights.len()` (sampling without
/// replacement, probability proportional to weight at every step).
///
/// Exponential-race keys: miner `i` gets `E_i / w_i` with `E_i ~ Exp(1)`
/// and miners are sorted by key. This is exactly the order in which
/// independent exponential clocks with rates `w_i` ring.
pub fn finishing_order(weights: &[f64], rng: &mut RandomSource) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| (rng.unit_exponential() / w, i))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, i)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn per_600() -> MiningRate {
        MiningRate::new(1.0 / 600.0).unwrap()
    }

    #[test]
    fn inverse_cdf_reference_points() {
        // 600 ln 2
        assert!((inverse_cdf(per_600(), 0.5).unwrap() - 415.888_308_335_967_2).abs() < 1e-9);
        assert_eq!(inverse_cdf(per_600(), 0.0).unwrap(), 0.0);
        let per_10 = MiningRate::new(0.1).unwrap();
        assert!((inverse_cdf(per_10, 0.9).unwrap() - 23.025_850_929_940_457).abs() < 1e-9);
        assert!(inverse_cdf(per_600(), 1.0).is_err());
        assert!(inverse_cdf(per_600(), -0.1).is_err());
    }

    #[test]
    fn runnerup_time_scales_with_remaining_power() {
        let r = per_600();
        let base = inverse_cdf(r, 0.5).unwrap();
        assert_eq!(runnerup_time(r, 0.0, 0.5).unwrap(), base);
        assert!((runnerup_time(r, 0.5, 0.5).unwrap() - 831.776_616_671_934_4).abs() < 1e-9);
        assert!((runnerup_time(r, 0.99, 0.5).unwrap() - 41_588.830_833_596_72).abs() < 1e-6);
        assert!(runnerup_time(r, 1.0, 0.5).is_err());
        assert!(runnerup_time(r, 1.5, 0.5).is_err());
    }

    #[test]
    fn rate_rejects_non_positive() {
        assert!(MiningRate::new(0.0).is_err());
        assert!(MiningRate::new(-1.0).is_err());
        assert!(MiningRate::new(f64::NAN).is_err());
        assert!(MiningRate::new(f64::INFINITY).is_err());
    }

    #[test]
    fn uniform_concentration_gives_equal_shares() {
        let mut rng = RandomSource::new(1, 0);
        let p = build_power_profile(100, Concentration::new(0.5), 1.0, &mut rng).unwrap();
        assert!(p.fractions().iter().all(|&h| (h - 0.01).abs() < 1e-15));
    }

    #[test]
    fn two_group_profiles() {
        let mut rng = RandomSource::new(1, 0);
        let p = build_power_profile(200, Concentration::new(0.02), 1.0, &mut rng).unwrap();
        let big: Vec<_> = p.fractions().iter().filter(|&&h| h > 0.1).collect();
        assert_eq!(big.len(), 4);
        assert!(big.iter().all(|&&h| (h - 0.125).abs() < 1e-15));
        let small = p.fractions().iter().find(|&&h| h < 0.1).unwrap();
        assert!((small - 0.5 / 196.0).abs() < 1e-15);
        assert!((small - 0.00255).abs() < 1e-5);

        let p = build_power_profile(100, Concentration::new(0.05), 1.0, &mut rng).unwrap();
        assert_eq!(p.fractions().iter().filter(|&&h| (h - 0.1).abs() < 1e-12).count(), 5);
        assert_eq!(
            p.fractions()
                .iter()
                .filter(|&&h| (h - 0.5 / 95.0).abs() < 1e-12)
                .count(),
            95
        );
    }

    #[test]
    fn profile_rejects_degenerate_inputs() {
        let mut rng = RandomSource::new(1, 0);
        assert!(build_power_profile(1, Concentration::new(0.5), 1.0, &mut rng).is_err());
        assert!(build_power_profile(10, Concentration::new(0.0), 1.0, &mut rng).is_err());
        assert!(build_power_profile(10, Concentration::new(0.6), 1.0, &mut rng).is_err());
        // ceil(2 * 0.01) = 1 and the rest group keeps one miner: fine.
        assert!(build_power_profile(2, Concentration::new(0.01), 1.0, &mut rng).is_ok());
        assert!(HashPowerProfile::new(vec![0.5, 0.4], 1.0).is_err());
        assert!(HashPowerProfile::new(vec![1.0, 0.0], 1.0).is_err());
        assert!(HashPowerProfile::new(vec![], 1.0).is_err());
    }

    #[test]
    fn substreams_replay_and_differ() {
        let mut a = RandomSource::substream(7, 0, 3, Purpose::MinerClock);
        let mut b = RandomSource::substream(7, 0, 3, Purpose::MinerClock);
        let mut c = RandomSource::substream(7, 0, 3, Purpose::Race);
        let xa: Vec<f64> = (0..16).map(|_| a.uniform()).collect();
        let xb: Vec<f64> = (0..16).map(|_| b.uniform()).collect();
        let xc: Vec<f64> = (0..16).map(|_| c.uniform()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn finishing_order_is_a_permutation() {
        let mut rng = RandomSource::new(3, 0);
        let order = finishing_order(&[0.1, 0.2, 0.3, 0.4], &mut rng);
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn dominant_miner_wins_almost_always() {
        let eps = 1e-3;
        let mut fr = vec![eps / 9.0; 10];
        fr[4] = 1.0 - eps;
        let p = HashPowerProfile::new(fr, 1.0).unwrap();
        let mut rng = RandomSource::new(11, 0);
        let n = 20_000;
        let wins = (0..n)
            .filter(|_| winner_draw(&p, per_600(), &mut rng).0 == 4)
            .count();
        assert!(wins as f64 / n as f64 >= 1.0 - 2.0 * eps);
    }
}
