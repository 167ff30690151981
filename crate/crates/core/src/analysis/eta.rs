//! Spread of the runner-up set: time from the first to the `k`-th
//! runner-up.
//!
//! Two measures are reported. The latent spread uses the solve times of
//! the first-round race and counts every epoch. The observed spread uses
//! the claims that were actually announced, and only epochs that collected
//! `k` of them: a runner-up starts the second round as soon as it claims,
//! so the round can end before the `k`-th claim exists.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::config::{Algorithm, PowerSpec, SimConfig};
use crate::protocol::SelectionMode;
use crate::simnet::run_simulation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaPoint {
    pub k: usize,
    pub distribution: String,
    pub miners: usize,
    /// Latent spread when race data exists, else the observed one.
    pub mean_eta: f64,
    pub latent_epochs: usize,
    pub mean_eta_observed: f64,
    pub observed_epochs: usize,
}

pub fn distribution_label(power: &PowerSpec) -> String {
    match power {
        PowerSpec::Concentration(c) if c.top_share_holders >= 0.5 => "uniform".to_string(),
        PowerSpec::Concentration(c) => format!("top{}pct", c.top_share_holders * 100.0),
        PowerSpec::Explicit(_) => "explicit".to_string(),
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Runs `base` once per `(power, k)` pair in COUNT(k) mode.
pub fn eta_study(
    base: &SimConfig,
    ks: &[usize],
    powers: &[PowerSpec],
) -> Result<Vec<EtaPoint>, AnalysisError> {
    if ks.contains(&0) {
        return Err(AnalysisError::InvalidK);
    }
    let points: Vec<(PowerSpec, usize)> = powers
        .iter()
        .flat_map(|p| ks.iter().map(move |&k| (p.clone(), k)))
        .collect();
    points
        .into_par_iter()
        .map(|(power, k)| {
            let mut cfg = base.clone();
            cfg.algorithm = Algorithm::GreenPow;
            cfg.selection = SelectionMode::Count { k };
            cfg.power = power.clone();
            let report = run_simulation(&cfg)?;
            let latent: Vec<f64> = report.epochs.iter().filter_map(|e| e.latent_span(k)).collect();
            let observed: Vec<f64> = report
                .epochs
                .iter()
                .filter(|e| e.announce_times.len() >= k)
                .map(|e| e.runnerup_span(k))
                .collect();
            let mean_eta_observed = mean(&observed);
            Ok(EtaPoint {
                k,
                distribution: distribution_label(&power),
                miners: cfg.miners,
                mean_eta: if latent.is_empty() {
                    mean_eta_observed
                } else {
                    mean(&latent)
                },
                latent_epochs: latent.len(),
                mean_eta_observed,
                observed_epochs: observed.len(),
            })
        })
        .collect()
}
