//! Fork probability from the fraction of miners still unaware of a block.
//!
//! `Pr[F > 0] = 1 - (1 - P_b)^I` with `I` the integral of `u(t)` over
//! `[0, inf)`.

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::stochastic::MiningRate;

/// Shape of `u(t)`, the fraction of miners that have not yet heard of a
/// block `t` after it was found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnawareModel {
    /// `exp(-t / tau)`.
    Exponential { tau: f64 },
    /// Falls linearly from 1 to 0 over `t`.
    Linear { t: f64 },
    /// 1 until `t`, then 0. A constant propagation delay.
    Step { t: f64 },
}

impl UnawareModel {
    fn parameter(&self) -> f64 {
        match *self {
            UnawareModel::Exponential { tau } => tau,
            UnawareModel::Linear { t } | UnawareModel::Step { t } => t,
        }
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        let p = self.parameter();
        if p.is_finite() && p >= 0.0 {
            Ok(())
        } else {
            Err(AnalysisError::InvalidModel(format!("{self:?}")))
        }
    }

    pub fn unaware(&self, t: f64) -> f64 {
        match *self {
            UnawareModel::Exponential { tau: 0.0 } => 0.0,
            UnawareModel::Exponential { tau } => (-t / tau).exp(),
            UnawareModel::Linear { t: span } => (1.0 - t / span).clamp(0.0, 1.0),
            UnawareModel::Step { t: span } => {
                if t < span {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `int_0^inf u(t) dt`.
    pub fn integral(&self) -> f64 {
        match *self {
            UnawareModel::Exponential { tau } => tau,
            UnawareModel::Linear { t } => t / 2.0,
            UnawareModel::Step { t } => t,
        }
    }
}

/// Probability a block is found in one unit of time, `1 - exp(-lambda)`.
pub fn block_probability_per_unit(rate: MiningRate) -> f64 {
    -(-rate.lambda()).exp_m1()
}

fn from_integral(p_b: f64, integral: f64) -> Result<f64, AnalysisError> {
    if !(0.0..1.0).contains(&p_b) {
        return Err(AnalysisError::InvalidProbability(p_b));
    }
    // 1 - (1 - p)^I without cancellation for small p.
    Ok(-(integral * (-p_b).ln_1p()).exp_m1())
}

pub fn fork_probability(model: UnawareModel, p_b: f64) -> Result<f64, AnalysisError> {
    model.validate()?;
    from_integral(p_b, model.integral())
}

/// Same, for an arbitrary `u(t)`, integrated numerically to a relative
/// error of `1e-8`.
pub fn fork_probability_with(u: &dyn Fn(f64) -> f64, p_b: f64) -> Result<f64, AnalysisError> {
    from_integral(p_b, integrate_half_line(u, 1e-8)?)
}

/// `int_0^inf f(t) dt` by adaptive Simpson after `t = x / (1 - x)`.
pub fn integrate_half_line(f: &dyn Fn(f64) -> f64, rel_tol: f64) -> Result<f64, AnalysisError> {
    let g = |x: f64| {
        if x >= 1.0 {
            0.0
        } else {
            let t = x / (1.0 - x);
            f(t) / ((1.0 - x) * (1.0 - x))
        }
    };
    // Split so narrow features near t = 0 are not missed.
    let cuts = [0.0, 1e-6, 1e-4, 1e-2, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.9999, 1.0];
    let mut total = 0.0;
    let mut ok = true;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fm, fb) = (g(a), g((a + b) / 2.0), g(b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        let (v, good) = simpson(&g, a, b, fa, fm, fb, whole, rel_tol, 50);
        total += v;
        ok &= good;
    }
    if ok && total.is_finite() {
        Ok(total)
    } else {
        Err(AnalysisError::Quadrature)
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson(
    g: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> (f64, bool) {
    let m = (a + b) / 2.0;
    let (lm, rm) = ((a + m) / 2.0, (m + b) / 2.0);
    let (flm, frm) = (g(lm), g(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    let scale = (left + right).abs().max(1e-300);
    if depth == 0 {
        return (left + right, false);
    }
    if delta.abs() <= 15.0 * tol * scale || (b - a) < 1e-15 {
        return (left + right + delta / 15.0, true);
    }
    let (l, lok) = simpson(g, a, m, fa, flm, fm, left, tol, depth - 1);
    let (r, rok) = simpson(g, m, b, fm, frm, fb, right, tol, depth - 1);
    (l + r, lok && rok)
}
