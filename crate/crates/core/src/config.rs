//! Simulation configuration.
//!
//! A run is described by one JSON document. Every field has a default, so
//! `{}` is a valid config: Green-PoW, 100 miners with uniform power,
//! Bitcoin's 600 s target interval and a 2016-interval retarget window.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::difficulty::BITCOIN_WINDOW;
use crate::protocol::{MinerId, ProtocolParams, SelectionMode};
use crate::stochastic::{
    build_power_profile, Concentration, HashPowerProfile, MiningRate, Purpose, RandomSource,
    StochasticError,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("power profile: {0}")]
    Profile(#[from] StochasticError),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Pow,
    GreenPow,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Pow => "pow",
            Algorithm::GreenPow => "green_pow",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerSpec {
    /// Two-group split; `top_share_holders = 0.5` is uniform power.
    Concentration(Concentration),
    Explicit(Vec<f64>),
}

/// How first-round solve times are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveTimeModel {
    /// One uniform draw per round. The winner solves at `t_w`, the j-th
    /// finisher at `t_w / (1 - h_prev)`, finishing order drawn by weight.
    SharedDraw,
    /// Independent exponential clock per miner.
    Memoryless,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum D2Init {
    /// Pilot estimate of the runner-up set power, so the second round
    /// starts on target.
    Calibrated,
    /// The weakest single miner's fraction.
    Minimum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DifficultyConfig {
    /// Intervals per retarget window; `None` freezes both difficulties.
    pub window: Option<usize>,
    pub d2_init: D2Init,
    pub pilot_samples: usize,
}

impl Default for DifficultyConfig {
    fn default() -> Self {
        Self {
            window: Some(BITCOIN_WINDOW),
            d2_init: D2Init::Calibrated,
            pilot_samples: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayModel {
    Zero,
    Constant(f64),
    /// `matrix[from][to]`.
    PerPair(Vec<Vec<f64>>),
}

/// Miners in `isolated` can talk neither to nor from the rest during
/// `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub start: f64,
    pub end: f64,
    pub isolated: Vec<MinerId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologySpec {
    pub delay: DelayModel,
    pub partitions: Vec<Partition>,
}

impl Default for TopologySpec {
    fn default() -> Self {
        Self {
            delay: DelayModel::Zero,
            partitions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Scenario {
    /// Cut the whole runner-up set off from the network as soon as it
    /// closes, in every epoch with `epoch % every == offset`.
    PartitionRunnerups {
        /// Defaults to the timeout plus five target intervals.
        #[serde(default)]
        duration: Option<f64>,
        #[serde(default = "default_every")]
        every: u64,
        #[serde(default = "default_offset")]
        offset: u64,
    },
}

fn default_every() -> u64 {
    10
}

fn default_offset() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub algorithm: Algorithm,
    pub miners: usize,
    pub block_budget: u64,
    pub lambda: f64,
    pub total_power: f64,
    pub power: PowerSpec,
    pub selection: SelectionMode,
    /// Second-round timeout; `None` disables it.
    pub timeout: Option<f64>,
    pub topology: TopologySpec,
    pub scenario: Option<Scenario>,
    pub seed: u64,
    pub replications: u32,
    pub solve_model: SolveTimeModel,
    pub difficulty: DifficultyConfig,
    /// Record every phase transition.
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::GreenPow,
            miners: 100,
            block_budget: 100_000,
            lambda: 1.0 / 600.0,
            total_power: 1.0,
            power: PowerSpec::Concentration(Concentration::new(0.5)),
            selection: SelectionMode::Count { k: 5 },
            timeout: None,
            topology: TopologySpec::default(),
            scenario: None,
            seed: 0,
            replications: 1,
            solve_model: SolveTimeModel::SharedDraw,
            difficulty: DifficultyConfig::default(),
            trace: false,
        }
    }
}

impl SimConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn rate(&self) -> Result<MiningRate, ConfigError> {
        MiningRate::new(self.lambda).map_err(|e| invalid("lambda", e.to_string()))
    }

    pub fn params(&self) -> ProtocolParams {
        ProtocolParams {
            selection: self.selection,
            timeout: self.timeout,
        }
    }

    /// Hash power profile for one replication. Which miners form the top
    /// group is drawn from the replication's profile stream.
    pub fn profile(&self, replication: u64) -> Result<HashPowerProfile, ConfigError> {
        match &self.power {
            PowerSpec::Concentration(c) if c.top_share_holders == 0.5 && c.held_share == 0.5 => {
                Ok(HashPowerProfile::uniform(self.miners, self.total_power)?)
            }
            PowerSpec::Concentration(c) => {
                let mut rng = RandomSource::substream(self.seed, replication, 0, Purpose::Profile);
                Ok(build_power_profile(self.miners, *c, self.total_power, &mut rng)?)
            }
            PowerSpec::Explicit(f) => {
                if f.len() != self.miners {
                    return Err(invalid(
                        "power",
                        format!("{} fractions for {} miners", f.len(), self.miners),
                    ));
                }
                Ok(HashPowerProfile::new(f.clone(), self.total_power)?)
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.miners < 2 {
            return Err(invalid("miners", "need at least 2 miners"));
        }
        if self.block_budget < 2 {
            return Err(invalid("block_budget", "must be >= 2"));
        }
        if self.replications < 1 {
            return Err(invalid("replications", "must be >= 1"));
        }
        if !(self.total_power.is_finite() && self.total_power > 0.0) {
            return Err(invalid("total_power", "must be finite and > 0"));
        }
        let rate = self.rate()?;
        self.profile(0)?;
        if self.algorithm == Algorithm::GreenPow {
            self.params()
                .validate(rate)
                .map_err(|e| invalid("selection/timeout", e.to_string()))?;
        }
        match &self.topology.delay {
            DelayModel::Zero => {}
            DelayModel::Constant(d) => {
                if !(d.is_finite() && *d >= 0.0) {
                    return Err(invalid("topology.delay", "delay must be finite and >= 0"));
                }
            }
            DelayModel::PerPair(m) => {
                if m.len() != self.miners || m.iter().any(|row| row.len() != self.miners) {
                    return Err(invalid("topology.delay", "matrix must be miners x miners"));
                }
                if m.iter().flatten().any(|d| !(d.is_finite() && *d >= 0.0)) {
                    return Err(invalid("topology.delay", "delays must be finite and >= 0"));
                }
            }
        }
        for p in &self.topology.partitions {
            if !(p.start >= 0.0 && p.end > p.start) {
                return Err(invalid("topology.partitions", "need 0 <= start < end"));
            }
            if p.isolated.iter().any(|&m| m >= self.miners) {
                return Err(invalid("topology.partitions", "miner index out of range"));
            }
        }
        if let Some(Scenario::PartitionRunnerups {
            duration, every, ..
        }) = &self.scenario
        {
            if self.algorithm != Algorithm::GreenPow {
                return Err(invalid("scenario", "partition_runnerups needs green_pow"));
            }
            let Some(timeout) = self.timeout else {
                return Err(invalid("scenario", "partition_runnerups needs a timeout"));
            };
            if *every == 0 {
                return Err(invalid("scenario.every", "must be >= 1"));
            }
            if duration.is_some_and(|d| !(d > timeout)) {
                return Err(invalid("scenario.duration", "must exceed the timeout"));
            }
        }
        if let Some(w) = self.difficulty.window {
            if w == 0 {
                return Err(invalid("difficulty.window", "must be >= 1"));
            }
        }
        if self.difficulty.d2_init == D2Init::Calibrated
            && self.algorithm == Algorithm::GreenPow
            && self.difficulty.pilot_samples == 0
        {
            return Err(invalid("difficulty.pilot_samples", "must be >= 1"));
        }
        Ok(())
    }
}

/// Parses a duration: a bare number is taken in simulation time units,
/// suffixes `s`, `m`/`min` and `h` are converted to seconds.
pub fn parse_duration(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let (num, scale) = if let Some(v) = t.strip_suffix("min") {
        (v, 60.0)
    } else if let Some(v) = t.strip_suffix('h') {
        (v, 3600.0)
    } else if let Some(v) = t.strip_suffix('m') {
        (v, 60.0)
    } else if let Some(v) = t.strip_suffix('s') {
        (v, 1.0)
    } else {
        (t, 1.0)
    };
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("invalid duration '{text}'"))?;
    if !(value.is_finite() && value >= 0.0) {
        return Err(format!("invalid duration '{text}'"));
    }
    Ok(value * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        let c = SimConfig::from_json_str("{}").unwrap();
        assert_eq!(c, SimConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn round_trips_through_json() {
        let c = SimConfig {
            selection: SelectionMode::TimeWindow { eta: 30.0 },
            timeout: Some(1380.0),
            topology: TopologySpec {
                delay: DelayModel::Constant(2.0),
                partitions: vec![Partition {
                    start: 1.0,
                    end: 2.0,
                    isolated: vec![3],
                }],
            },
            scenario: Some(Scenario::PartitionRunnerups {
                duration: None,
                every: 3,
                offset: 0,
            }),
            ..SimConfig::default()
        };
        let back = SimConfig::from_json_str(&c.to_json_pretty()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = SimConfig::from_json_str("{\n  \"miners\": \"many\"\n}").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(SimConfig::from_json_str("{\"minerz\": 3}").is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let bad = [
            SimConfig {
                miners: 1,
                ..SimConfig::default()
            },
            SimConfig {
                block_budget: 1,
                ..SimConfig::default()
            },
            SimConfig {
                lambda: 0.0,
                ..SimConfig::default()
            },
            SimConfig {
                timeout: Some(10.0),
                ..SimConfig::default()
            },
            SimConfig {
                power: PowerSpec::Explicit(vec![0.5, 0.5]),
                ..SimConfig::default()
            },
            SimConfig {
                scenario: Some(Scenario::PartitionRunnerups {
                    duration: None,
                    every: 1,
                    offset: 0,
                }),
                ..SimConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn concentrated_profile_is_reproducible() {
        let c = SimConfig {
            miners: 200,
            power: PowerSpec::Concentration(Concentration::new(0.02)),
            ..SimConfig::default()
        };
        let a = c.profile(0).unwrap();
        assert_eq!(a, c.profile(0).unwrap());
        assert_eq!(a.fractions().iter().filter(|&&h| h == 0.125).count(), 4);
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("1380s").unwrap(), 1380.0);
        assert_eq!(parse_duration("23min").unwrap(), 1380.0);
        assert_eq!(parse_duration("23m").unwrap(), 1380.0);
        assert_eq!(parse_duration("2.5").unwrap(), 2.5);
        assert_eq!(parse_duration("1h").unwrap(), 3600.0);
        assert!(parse_duration("-3s").is_err());
        assert!(parse_duration("soon").is_err());
    }
}
