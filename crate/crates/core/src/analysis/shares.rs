//! Mining shares of a real block trace, before and after the winner
//! exclusion rule is applied.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::stochastic::RandomSource;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub height: u64,
    pub miner_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BlockTrace {
    records: Vec<TraceRecord>,
    pub network: Option<String>,
}

impl BlockTrace {
    pub fn new(records: Vec<TraceRecord>) -> Result<Self, AnalysisError> {
        for (i, r) in records.iter().enumerate() {
            if r.miner_id.trim().is_empty() {
                return Err(AnalysisError::InvalidTrace(format!(
                    "empty miner_id at height {}",
                    r.height
                )));
            }
            if i > 0 && r.height != records[i - 1].height + 1 {
                return Err(AnalysisError::InvalidTrace(format!(
                    "height {} follows {}",
                    r.height,
                    records[i - 1].height
                )));
            }
        }
        Ok(Self {
            records,
            network: None,
        })
    }

    /// Builds a trace numbered from height 0.
    pub fn from_producers<S: Into<String>>(
        producers: impl IntoIterator<Item = S>,
    ) -> Result<Self, AnalysisError> {
        Self::new(
            producers
                .into_iter()
                .enumerate()
                .map(|(h, m)| TraceRecord {
                    height: h as u64,
                    miner_id: m.into(),
                })
                .collect(),
        )
    }

    /// Reads CSV with header `height,miner_id`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, AnalysisError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["height", "miner_id"] {
            return Err(AnalysisError::InvalidTrace(format!(
                "expected header height,miner_id, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let records = rdr
            .deserialize::<TraceRecord>()
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(records)
    }

    pub fn from_path(path: &Path) -> Result<Self, AnalysisError> {
        let mut trace = Self::from_csv(std::fs::File::open(path)?)?;
        trace.network = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        Ok(trace)
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn block_range(&self) -> Option<(u64, u64)> {
        Some((self.records.first()?.height, self.records.last()?.height))
    }
}

/// Who receives the blocks taken away from repeat producers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RedistributionTarget {
    /// In proportion to each recipient's own block count.
    #[default]
    Proportional,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareRow {
    pub miner_id: String,
    pub pow_share_pct: f64,
    pub greenpow_share_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Redistribution {
    /// Ascending by PoW share.
    pub rows: Vec<ShareRow>,
    /// Blocks removed from runs longer than two.
    pub capped: u64,
    /// Blocks removed by the coin flip on a final pair.
    pub flipped: u64,
}

impl Redistribution {
    pub fn removed(&self) -> u64 {
        self.capped + self.flipped
    }

    pub fn row(&self, miner_id: &str) -> Option<&ShareRow> {
        self.rows.iter().find(|r| r.miner_id == miner_id)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), AnalysisError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn share_redistribution(
    trace: &BlockTrace,
    rng: &mut RandomSource,
) -> Result<Redistribution, AnalysisError> {
    share_redistribution_with(trace, rng, RedistributionTarget::Proportional)
}

/// Every run of consecutive blocks by one miner is cut to two, and the
/// remaining pair loses one block with probability one half. Removed blocks
/// go to the miners that never produced two in a row.
pub fn share_redistribution_with(
    trace: &BlockTrace,
    rng: &mut RandomSource,
    target: RedistributionTarget,
) -> Result<Redistribution, AnalysisError> {
    if trace.is_empty() {
        return Err(AnalysisError::EmptyTrace);
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for r in trace.records() {
        *counts.entry(r.miner_id.as_str()).or_insert(0) += 1;
    }
    if counts.len() < 2 {
        return Err(AnalysisError::NoRedistributionTarget);
    }

    let mut removed: BTreeMap<&str, u64> = BTreeMap::new();
    let mut repeaters: BTreeSet<&str> = BTreeSet::new();
    let (mut capped, mut flipped) = (0, 0);
    for run in trace.records().chunk_by(|a, b| a.miner_id == b.miner_id) {
        if run.len() < 2 {
            continue;
        }
        let who = run[0].miner_id.as_str();
        repeaters.insert(who);
        let mut cut = run.len() as u64 - 2;
        capped += cut;
        if rng.uniform() < 0.5 {
            cut += 1;
            flipped += 1;
        }
        *removed.entry(who).or_insert(0) += cut;
    }

    let recipients: Vec<&str> = counts
        .keys()
        .copied()
        .filter(|m| !repeaters.contains(m))
        .collect();
    let pool = (capped + flipped) as f64;
    if recipients.is_empty() && pool > 0.0 {
        return Err(AnalysisError::NoRedistributionTarget);
    }
    let weight = |m: &str| match target {
        RedistributionTarget::Proportional => counts[m] as f64,
        RedistributionTarget::Uniform => 1.0,
    };
    let total_weight: f64 = recipients.iter().map(|m| weight(m)).sum();

    let total = trace.len() as f64;
    let mut rows: Vec<ShareRow> = counts
        .iter()
        .map(|(&m, &c)| {
            let mut adjusted = (c - removed.get(m).copied().unwrap_or(0)) as f64;
            if pool > 0.0 && !repeaters.contains(m) {
                adjusted += pool * weight(m) / total_weight;
            }
            ShareRow {
                miner_id: m.to_string(),
                pow_share_pct: 100.0 * c as f64 / total,
                greenpow_share_pct: 100.0 * adjusted / total,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.pow_share_pct
            .total_cmp(&b.pow_share_pct)
            .then_with(|| a.miner_id.cmp(&b.miner_id))
    });
    Ok(Redistribution {
        rows,
        capped,
        flipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> RandomSource {
        RandomSource::new(1, 0)
    }

    #[test]
    fn no_runs_no_change() {
        let t = BlockTrace::from_producers(["a", "b", "a", "c", "b"]).unwrap();
        let r = share_redistribution(&t, &mut rng()).unwrap();
        assert_eq!(r.removed(), 0);
        for row in &r.rows {
            assert_eq!(row.pow_share_pct, row.greenpow_share_pct);
        }
    }

    #[test]
    fn long_runs_are_capped() {
        let t = BlockTrace::from_producers(["a", "a", "a", "a", "b", "c"]).unwrap();
        let r = share_redistribution(&t, &mut rng()).unwrap();
        assert_eq!(r.capped, 2);
        let a = r.row("a").unwrap();
        assert!(a.greenpow_share_pct <= 100.0 * 2.0 / 6.0 + 1e-12);
        let sum: f64 = r.rows.iter().map(|x| x.greenpow_share_pct).sum();
        assert!((sum - 100.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_traces() {
        let empty = BlockTrace::default();
        assert!(matches!(
            share_redistribution(&empty, &mut rng()),
            Err(AnalysisError::EmptyTrace)
        ));
        let solo = BlockTrace::from_producers(["a", "a"]).unwrap();
        assert!(matches!(
            share_redistribution(&solo, &mut rng()),
            Err(AnalysisError::NoRedistributionTarget)
        ));
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let t = BlockTrace::from_csv("height,miner_id\n5,x\n6,y\n".as_bytes()).unwrap();
        assert_eq!(t.block_range(), Some((5, 6)));
        assert!(BlockTrace::from_csv("height,miner_id\n5,x\n7,y\n".as_bytes()).is_err());
        assert!(BlockTrace::from_csv("height,miner\n5,x\n".as_bytes()).is_err());
        assert!(BlockTrace::from_csv("height,miner_id\n5,\n".as_bytes()).is_err());
    }

    #[test]
    fn sorted_ascending() {
        let t = BlockTrace::from_producers(["a", "b", "b", "c", "b", "a", "b"]).unwrap();
        let r = share_redistribution(&t, &mut rng()).unwrap();
        let pow: Vec<f64> = r.rows.iter().map(|x| x.pow_share_pct).collect();
        assert!(pow.windows(2).all(|w| w[0] <= w[1]));
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("miner_id,pow_share_pct,greenpow_share_pct\n"));
    }
}
