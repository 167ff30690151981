//! How long to wait for a second-round block.

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::stochastic::{inverse_cdf, MiningRate};

/// The band of completion probabilities recommended for a safe timeout.
pub const SAFE_BAND: (f64, f64) = (0.7, 0.9);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeoutPoint {
    pub p: f64,
    pub wait: f64,
    pub in_safe_band: bool,
}

/// Wait `t = -ln(1 - p) / lambda` for a block to be found with probability `p`.
pub fn timeout_curve(rate: MiningRate, probabilities: &[f64]) -> Result<Vec<TimeoutPoint>, AnalysisError> {
    probabilities
        .iter()
        .map(|&p| {
            let wait = inverse_cdf(rate, p).map_err(|_| AnalysisError::InvalidProbability(p))?;
            Ok(TimeoutPoint {
                p,
                wait,
                in_safe_band: (SAFE_BAND.0..=SAFE_BAND.1).contains(&p),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::exponential_cdf;

    #[test]
    fn reference_waits() {
        let r = MiningRate::new(0.1).unwrap();
        let c = timeout_curve(r, &[0.0, 0.7, 0.9, 0.95]).unwrap();
        assert_eq!(c[0].wait, 0.0);
        // 10 ln(10/3) and 10 ln 10
        assert!((c[1].wait - 12.039_728_043_259_36).abs() < 1e-9);
        assert!((c[2].wait - 23.025_850_929_940_457).abs() < 1e-9);
        assert!(c[1].in_safe_band && c[2].in_safe_band);
        assert!(!c[0].in_safe_band && !c[3].in_safe_band);
        assert!(timeout_curve(r, &[1.0]).is_err());
    }

    #[test]
    fn inverts_the_cdf() {
        let r = MiningRate::new(1.0 / 600.0).unwrap();
        for i in 0..100 {
            let p = i as f64 / 100.0;
            let t = timeout_curve(r, &[p]).unwrap()[0].wait;
            assert!((exponential_cdf(r, t) - p).abs() < 1e-12);
        }
    }
}
