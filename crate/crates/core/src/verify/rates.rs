//! Empirical moderate-deviation rate curves.

use serde::{Deserialize, Serialize};

use super::ScaleSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub x: f64,
    pub b_n: f64,
    pub count: usize,
    pub p_hat: f64,
    /// `-(1/b^2) log P_hat`, or the lower bound `-(1/b^2) log(1/R)` when censored.
    pub r_hat: f64,
    pub censored: bool,
    pub i_theory: f64,
}

/// `R_hat(x) = -(1/b_N^2) log P(sqrt(N)/b_N |stat| > x)` for each `x`, next
/// to the theoretical rate `rate(x)`.
pub fn mdp_rate_curve<F: Fn(f64) -> f64>(
    samples: &[f64],
    n_size: f64,
    scale: &ScaleSpec,
    xs: &[f64],
    rate: F,
) -> Result<Vec<RatePoint>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let b = scale.b(n_size);
    let factor = n_size.sqrt() / b;
    let scaled: Vec<f64> = samples.iter().map(|s| factor * s.abs()).collect();
    let total = samples.len() as f64;
    Ok(xs
        .iter()
        .map(|&x| {
            let count = scaled.iter().filter(|&&s| s > x).count();
            let p_hat = count as f64 / total;
            let censored = count == 0;
            let r_hat = if censored { total.ln() / (b * b) } else { -p_hat.ln() / (b * b) };
            RatePoint { x, b_n: b, count, p_hat, r_hat, censored, i_theory: rate(x) }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    /// Least-squares `c` in `R_hat(x) ~ c x^2` over uncensored points.
    pub c: f64,
    pub points: usize,
    /// Largest of `R_hat / (c x^2)` and its inverse.
    pub max_ratio: f64,
    pub nondecreasing: bool,
}

pub fn fit_quadratic(curve: &[RatePoint]) -> Option<QuadraticFit> {
    let pts: Vec<&RatePoint> = curve.iter().filter(|p| !p.censored && p.x != 0.0).collect();
    if pts.is_empty() {
        return None;
    }
    let num: f64 = pts.iter().map(|p| p.r_hat * p.x * p.x).sum();
    let den: f64 = pts.iter().map(|p| p.x.powi(4)).sum();
    let c = num / den;
    let max_ratio = pts
        .iter()
        .map(|p| {
            let r = p.r_hat / (c * p.x * p.x);
            r.max(1.0 / r)
        })
        .fold(1.0, f64::max);
    let mut sorted = pts.clone();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x));
    let nondecreasing = sorted.windows(2).all(|w| w[1].r_hat >= w[0].r_hat);
    Some(QuadraticFit { c, points: pts.len(), max_ratio, nondecreasing })
}
