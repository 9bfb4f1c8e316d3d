use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided 95% standard normal quantile.
pub const WILSON_Z: f64 = 1.959963984540054;

/// Wilson score interval for `count` successes out of `total`.
pub fn wilson_interval(count: usize, total: usize, z: f64) -> (f64, f64) {
    if total == 0 {
        return (0.0, 1.0);
    }
    let n = total as f64;
    let p = count as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // rounding can push the bounds a hair past the point estimate at 0 and 1
    ((center - half).clamp(0.0, p), (center + half).clamp(p, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub delta: f64,
    pub count: usize,
    pub total: usize,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl TailRow {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_hi - self.ci_lo)
    }
}

/// `P(stat > delta)` with a Wilson 95% interval for every `delta`.
pub fn empirical_tail(samples: &[f64], deltas: &[f64]) -> Result<Vec<TailRow>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let total = samples.len();
    Ok(deltas
        .iter()
        .map(|&delta| {
            let count = samples.iter().filter(|&&s| s > delta).count();
            let (ci_lo, ci_hi) = wilson_interval(count, total, WILSON_Z);
            TailRow { delta, count, total, p_hat: count as f64 / total as f64, ci_lo, ci_hi }
        })
        .collect())
}
