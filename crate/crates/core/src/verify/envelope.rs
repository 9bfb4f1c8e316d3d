//! Deviation envelopes for `P(||theta_hat_n - theta|| > delta)` and the
//! regression of observed tails on the predicted decay scale.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{regime_for, Case, Regime, TailRow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub case: Case,
    pub regime: Regime,
    pub beta: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Case 2 only.
    pub c4: Option<f64>,
    pub b: f64,
}

impl EnvelopeParams {
    fn validate(&self) -> Result<()> {
        let expected = regime_for(self.case, self.beta);
        if expected != self.regime {
            return Err(Error::InvalidArgument(format!(
                "regime {:?} does not match beta = {} in case {} (expected {:?})",
                self.regime,
                self.beta,
                self.case.label(),
                expected
            )));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0 && self.c3 >= 0.0 && self.b > 0.0) {
            return Err(Error::InvalidArgument("need c1, c2, b > 0 and c3 >= 0".into()));
        }
        match (self.case, self.c4) {
            (Case::One, Some(_)) => Err(Error::InvalidArgument("c4 only enters the case 2 envelope".into())),
            (Case::Two, None) => Err(Error::InvalidArgument("case 2 envelope needs c4".into())),
            (Case::Two, Some(c4)) if c4 < 0.0 || (c4 == 0.0 && self.c3 == 0.0) => {
                Err(Error::InvalidArgument("case 2 needs c4 >= 0 and (c3, c4) != (0, 0)".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Decay scale multiplying the exponent for `(case, regime)` at generation `n`.
pub fn regime_scaling(case: Case, regime: Regime, beta: f64, n: u32) -> f64 {
    let m = f64::from(n) - 1.0;
    let two_n = 2f64.powi(n as i32);
    match (case, regime) {
        (Case::One, Regime::Sub | Regime::Critical) | (Case::Two, Regime::Sub) => two_n / (m * m),
        (Case::One, Regime::Super) => 1.0 / (m * beta.powi(n as i32)),
        (Case::Two, Regime::Critical) => two_n / (m * m * m),
        (Case::Two, Regime::Super) => 1.0 / (m * m * beta.powi(2 * n as i32)),
    }
}

/// Polynomial factor in front of the exponential.
pub fn regime_prefactor(case: Case, regime: Regime, n: u32) -> f64 {
    match (case, regime) {
        (Case::One, Regime::Critical | Regime::Super) => f64::from(n) - 1.0,
        _ => 1.0,
    }
}

/// Upper bound on `P(||theta_hat_n - theta|| > delta)` for the branch
/// selected by `params`.
pub fn envelope(params: &EnvelopeParams, n: u32, delta: f64) -> Result<f64> {
    params.validate()?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("envelope needs n >= 2, got {n}")));
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be nonnegative, got {delta}")));
    }
    let x = delta * params.b;
    let denom = params.c3 + params.c4.unwrap_or(1.0) * x;
    let q = if x == 0.0 { 0.0 } else { params.c2 * x * x / denom };
    let s = regime_scaling(params.case, params.regime, params.beta, n);
    Ok(params.c1 * regime_prefactor(params.case, params.regime, n) * (-q * s).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeStatus {
    /// 95% lower confidence bound on the slope is positive.
    Confirmed,
    RegimeViolation,
    /// Fewer than three generations with a nonzero tail.
    Vacuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub std_err: Option<f64>,
    pub lower95: Option<f64>,
    pub generations_used: Vec<u32>,
    pub status: SlopeStatus,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let se = if xs.len() > 2 && sxx > 0.0 { (sse / (m - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    (slope, intercept, se)
}

/// Least-squares slope of `-log(P_hat(n) / prefactor(n))` against the decay
/// scale of `(case, regime)`. Generations with a zero tail are skipped.
pub fn fit_decay_slope(points: &[(u32, f64)], case: Case, beta: f64) -> SlopeFit {
    let regime = regime_for(case, beta);
    let used: Vec<(u32, f64)> = points.iter().copied().filter(|&(_, p)| p > 0.0).collect();
    let generations_used: Vec<u32> = used.iter().map(|&(n, _)| n).collect();
    if used.len() < 3 {
        return SlopeFit {
            slope: None,
            intercept: None,
            std_err: None,
            lower95: None,
            generations_used,
            status: SlopeStatus::Vacuous,
        };
    }
    let xs: Vec<f64> = used.iter().map(|&(n, _)| regime_scaling(case, regime, beta, n)).collect();
    let ys: Vec<f64> = used.iter().map(|&(n, p)| -p.ln() + regime_prefactor(case, regime, n).ln()).collect();
    let (slope, intercept, se) = least_squares(&xs, &ys);
    let df = (xs.len() - 2) as f64;
    let t = StudentsT::new(0.0, 1.0, df).map(|d| d.inverse_cdf(0.95)).unwrap_or(f64::INFINITY);
    let lower = slope - t * se;
    let status = if lower > 0.0 { SlopeStatus::Confirmed } else { SlopeStatus::RegimeViolation };
    SlopeFit {
        slope: Some(slope),
        intercept: Some(intercept),
        std_err: Some(se),
        lower95: Some(lower),
        generations_used,
        status,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub params: EnvelopeParams,
    /// Fitted product `c2 * b`.
    pub rate: f64,
    /// `min(envelope - (P_hat - half_width))` over every tabulated cell.
    pub worst_margin: f64,
    pub dominates: bool,
}

/// Fits `c1, c2` with `c3 = 0` (and `c4 = 1` in case 2) to a tail table,
/// taking `b = ||Sigma|| / (2 (1 + delta_max))`. The exponent then reduces
/// to `c2 b delta s(n)`; its slope comes from least squares on the nonzero
/// cells, and `c1` is the smallest value at or above the regression
/// intercept that puts the envelope above every lower confidence bound.
pub fn fit_envelope(table: &[(u32, Vec<TailRow>)], case: Case, beta: f64, sigma_norm: f64) -> Result<EnvelopeFit> {
    let regime = regime_for(case, beta);
    let delta_max = table.iter().flat_map(|(_, rows)| rows.iter().map(|r| r.delta)).fold(0.0f64, f64::max);
    let b = sigma_norm / (2.0 * (1.0 + delta_max));
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (n, rows) in table {
        for r in rows.iter().filter(|r| r.count > 0 && r.delta > 0.0) {
            xs.push(r.delta * regime_scaling(case, regime, beta, *n));
            ys.push(-r.p_hat.ln() + regime_prefactor(case, regime, *n).ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("tail table has fewer than two nonzero cells".into()));
    }
    let (slope, intercept, _) = least_squares(&xs, &ys);
    let rate = slope.max(1e-12);
    let mut log_c1 = -intercept;
    for (n, rows) in table {
        for r in rows {
            let need = r.p_hat - r.half_width();
            if need > 0.0 {
                let s = regime_scaling(case, regime, beta, *n);
                let pref = regime_prefactor(case, regime, *n);
                log_c1 = log_c1.max(need.ln() + rate * r.delta * s - pref.ln());
            }
        }
    }
    let params = EnvelopeParams {
        case,
        regime,
        beta,
        c1: log_c1.exp(),
        c2: rate / b,
        c3: 0.0,
        c4: match case {
            Case::One => None,
            Case::Two => Some(1.0),
        },
        b,
    };
    let mut worst = f64::INFINITY;
    for (n, rows) in table {
        for r in rows {
            let env = envelope(&params, *n, r.delta)?;
            worst = worst.min(env - (r.p_hat - r.half_width()));
        }
    }
    Ok(EnvelopeFit { params, rate, worst_margin: worst, dominates: worst >= -1e-12 })
}
