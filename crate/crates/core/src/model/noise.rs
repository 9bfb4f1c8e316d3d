//! Centered noise pairs `(eps_2k, eps_2k+1)` with covariance
//! `Gamma = [[s2, rho], [rho, s2]]`.
//!
//! Three families are provided:
//!
//! * `GaussianPair`: correlated bivariate normal, i.i.d. over mothers.
//! * `BoundedPair`: a correlated normal pair conditioned on the box
//!   `[-M, M]^2` (in standard units), rescaled so the variance is exact.
//! * `SkewSwitchingPair`: two-component Gaussian-mixture marginals joined by a
//!   Gaussian copula. The sign of the skewness follows the sign of the
//!   mother's value while all moments up to order four stay fixed, so the
//!   pairs are not identically distributed but have constant conditional
//!   moments.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::quadrature::{bisect_increasing, bivariate_normal_moment, simpson_nodes, std_normal_cdf, std_normal_pdf};
use crate::error::{Error, Result};

/// Default truncation bound for `BoundedPair`, in standard deviations.
pub const DEFAULT_BOUND: f64 = 6.0;
/// Default standardized skewness magnitude for `SkewSwitchingPair`.
pub const DEFAULT_SKEW: f64 = 0.5;

const CAL_INTERVALS: usize = 320;
const COPULA_BOX: f64 = 8.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseFamily {
    GaussianPair,
    BoundedPair { bound: f64 },
    SkewSwitchingPair { skew: f64 },
}

impl NoiseFamily {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseFamily::GaussianPair => "gaussian_pair",
            NoiseFamily::BoundedPair { .. } => "bounded_pair",
            NoiseFamily::SkewSwitchingPair { .. } => "skew_switching_pair",
        }
    }

    /// Whether pairs are i.i.d. across mothers.
    pub fn is_iid(&self) -> bool {
        !matches!(self, NoiseFamily::SkewSwitchingPair { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Sampler {
    Gaussian { sd: f64, r: f64, r_perp: f64 },
    Bounded { scale: f64, r: f64, r_perp: f64, bound: f64 },
    Skew { sd: f64, r: f64, r_perp: f64, mix: Mixture },
}

/// Noise family plus its moments `(sigma2, rho, tau4, nu2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    family: NoiseFamily,
    sigma2: f64,
    rho: f64,
    tau4: f64,
    nu2: f64,
    sampler: Sampler,
}

fn check_second_moments(sigma2: f64, rho: f64) -> Result<()> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidNoise(format!("sigma2 must be positive, got {sigma2}")));
    }
    if !rho.is_finite() || rho.abs() >= sigma2 {
        return Err(Error::InvalidNoise(format!("need |rho| < sigma2, got rho = {rho}, sigma2 = {sigma2}")));
    }
    Ok(())
}

impl NoiseModel {
    pub fn gaussian(sigma2: f64, rho: f64) -> Result<Self> {
        check_second_moments(sigma2, rho)?;
        let r = rho / sigma2;
        let model = NoiseModel {
            family: NoiseFamily::GaussianPair,
            sigma2,
            rho,
            tau4: 3.0 * sigma2 * sigma2,
            nu2: sigma2 * sigma2 + 2.0 * rho * rho,
            sampler: Sampler::Gaussian { sd: sigma2.sqrt(), r, r_perp: (1.0 - r * r).sqrt() },
        };
        model.validate()?;
        Ok(model)
    }

    /// Correlated normal pair conditioned on `max(|z1|, |z2|) <= bound`.
    pub fn bounded(sigma2: f64, rho: f64, bound: f64) -> Result<Self> {
        check_second_moments(sigma2, rho)?;
        if !(bound > 0.5) || !bound.is_finite() {
            return Err(Error::InvalidNoise(format!("truncation bound must exceed 0.5, got {bound}")));
        }
        let (z, w) = simpson_nodes(-bound, bound, CAL_INTERVALS);
        let moments = |r: f64| {
            let (m2, d) = bivariate_normal_moment(&z, &w, r, |i, _| z[i] * z[i]);
            let (c, _) = bivariate_normal_moment(&z, &w, r, |i, j| z[i] * z[j]);
            (m2 / d, c / d)
        };
        let target = rho / sigma2;
        let r = bisect_increasing(
            |r| {
                let (m2, c) = moments(r);
                c / m2
            },
            target,
            -0.999,
            0.999,
            48,
        );
        let (m2, c) = moments(r);
        if ((c / m2) - target).abs() > 1e-6 {
            return Err(Error::Calibration(format!("bound {bound} cannot reach correlation {target}")));
        }
        let (m4, d) = bivariate_normal_moment(&z, &w, r, |i, _| z[i].powi(4));
        let (n22, _) = bivariate_normal_moment(&z, &w, r, |i, j| z[i] * z[i] * z[j] * z[j]);
        let scale2 = sigma2 / m2;
        let model = NoiseModel {
            family: NoiseFamily::BoundedPair { bound },
            sigma2,
            rho,
            tau4: scale2 * scale2 * m4 / d,
            nu2: scale2 * scale2 * n22 / d,
            sampler: Sampler::Bounded { scale: scale2.sqrt(), r, r_perp: (1.0 - r * r).sqrt(), bound },
        };
        model.validate()?;
        Ok(model)
    }

    /// Mixture marginals with kurtosis `tau4 / sigma2^2` and skewness `±skew`,
    /// coupled by a Gaussian copula calibrated to `rho`.
    pub fn skew_switching(sigma2: f64, rho: f64, tau4: f64, skew: f64) -> Result<Self> {
        check_second_moments(sigma2, rho)?;
        if !(skew > 0.0) || !skew.is_finite() {
            return Err(Error::InvalidNoise(format!("skewness magnitude must be positive, got {skew}")));
        }
        let kurtosis = tau4 / (sigma2 * sigma2);
        let mix = Mixture::calibrate(skew, kurtosis)?;

        let (z, w) = simpson_nodes(-COPULA_BOX, COPULA_BOX, CAL_INTERVALS);
        let q: Vec<f64> = z.iter().map(|&zi| mix.quantile_from_normal(zi)).collect();
        let corr = |r: f64| {
            let (c, d) = bivariate_normal_moment(&z, &w, r, |i, j| q[i] * q[j]);
            c / d
        };
        let target = rho / sigma2;
        let r = bisect_increasing(corr, target, -0.9999, 0.9999, 50);
        if (corr(r) - target).abs() > 1e-6 {
            return Err(Error::Calibration(format!("copula cannot reach correlation {target}")));
        }
        let (n22, d) = bivariate_normal_moment(&z, &w, r, |i, j| q[i] * q[i] * q[j] * q[j]);
        let model = NoiseModel {
            family: NoiseFamily::SkewSwitchingPair { skew },
            sigma2,
            rho,
            tau4,
            nu2: sigma2 * sigma2 * n22 / d,
            sampler: Sampler::Skew { sd: sigma2.sqrt(), r, r_perp: (1.0 - r * r).sqrt(), mix },
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let s4 = self.sigma2 * self.sigma2;
        if !(self.tau4 > 0.0) || self.tau4 < s4 * (1.0 - 1e-9) {
            return Err(Error::InvalidNoise(format!("tau4 = {} must be at least sigma2^2 = {s4}", self.tau4)));
        }
        if !(self.nu2 < self.tau4) {
            return Err(Error::InvalidNoise(format!("need nu2 < tau4, got nu2 = {}, tau4 = {}", self.nu2, self.tau4)));
        }
        if !(self.nu2 > self.rho * self.rho) {
            return Err(Error::InvalidNoise(format!("need nu2 > rho^2, got nu2 = {}", self.nu2)));
        }
        Ok(())
    }

    pub fn family(&self) -> &NoiseFamily {
        &self.family
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn tau4(&self) -> f64 {
        self.tau4
    }

    pub fn nu2(&self) -> f64 {
        self.nu2
    }

    /// `Gamma` as a 2x2 matrix.
    pub fn gamma(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(2, 2, &[self.sigma2, self.rho, self.rho, self.sigma2])
    }

    /// Draws `(eps_even, eps_odd)` for the daughters of a mother whose value is
    /// `parent_state`.
    pub fn sample_pair<R: Rng + ?Sized>(&self, parent_state: f64, rng: &mut R) -> (f64, f64) {
        match &self.sampler {
            Sampler::Gaussian { sd, r, r_perp } => {
                let (z1, z2) = correlated(rng, *r, *r_perp);
                (sd * z1, sd * z2)
            }
            Sampler::Bounded { scale, r, r_perp, bound } => loop {
                let (z1, z2) = correlated(rng, *r, *r_perp);
                if z1.abs() <= *bound && z2.abs() <= *bound {
                    break (scale * z1, scale * z2);
                }
            },
            Sampler::Skew { sd, r, r_perp, mix } => {
                let (z1, z2) = correlated(rng, *r, *r_perp);
                let e1 = sd * mix.quantile_from_normal(z1);
                let e2 = sd * mix.quantile_from_normal(z2);
                if parent_state < 0.0 {
                    (-e1, -e2)
                } else {
                    (e1, e2)
                }
            }
        }
    }
}

#[inline]
fn correlated<R: Rng + ?Sized>(rng: &mut R, r: f64, r_perp: f64) -> (f64, f64) {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    (z1, r * z1 + r_perp * z2)
}

/// Standardized two-component mixture `w N(mu1, v) + (1-w) N(mu2, v)` with
/// mean 0 and variance 1.
#[derive(Debug, Clone, PartialEq)]
struct Mixture {
    w: f64,
    mu1: f64,
    mu2: f64,
    sd: f64,
}

impl Mixture {
    /// Parameters for weight `w < 1/2` and skewness `s > 0`; `None` when the
    /// component variance would be nonpositive.
    fn for_weight(w: f64, s: f64) -> Option<Mixture> {
        let q = w * (1.0 - w);
        let d = (s / (q * (1.0 - 2.0 * w))).cbrt();
        let v = 1.0 - d * d * q;
        if !(v > 1e-6) {
            return None;
        }
        Some(Mixture { w, mu1: d * (1.0 - w), mu2: -d * w, sd: v.sqrt() })
    }

    fn kurtosis(&self) -> f64 {
        let v = self.sd * self.sd;
        let m = |mu: f64| mu.powi(4) + 6.0 * mu * mu * v + 3.0 * v * v;
        self.w * m(self.mu1) + (1.0 - self.w) * m(self.mu2)
    }

    fn calibrate(skew: f64, kurtosis: f64) -> Result<Mixture> {
        // kurtosis decreases along the feasible weights; bracket then bisect
        let grid: Vec<f64> = (1..2000).map(|i| i as f64 * 0.5 / 2000.0).collect();
        let mut prev: Option<(f64, f64)> = None;
        for &w in &grid {
            let Some(m) = Mixture::for_weight(w, skew) else { break };
            let k = m.kurtosis() - kurtosis;
            if let Some((pw, pk)) = prev {
                if pk >= 0.0 && k <= 0.0 {
                    let w = bisect_increasing(
                        |w| -(Mixture::for_weight(w, skew).map_or(f64::NEG_INFINITY, |m| m.kurtosis())),
                        -kurtosis,
                        pw,
                        w,
                        80,
                    );
                    return Mixture::for_weight(w, skew)
                        .ok_or_else(|| Error::Calibration("mixture weight left the feasible range".into()));
                }
            }
            prev = Some((w, k));
        }
        Err(Error::Calibration(format!("no two-component mixture has skewness {skew} and kurtosis {kurtosis}")))
    }

    fn cdf(&self, x: f64) -> f64 {
        self.w * std_normal_cdf((x - self.mu1) / self.sd) + (1.0 - self.w) * std_normal_cdf((x - self.mu2) / self.sd)
    }

    fn sf(&self, x: f64) -> f64 {
        self.w * std_normal_cdf((self.mu1 - x) / self.sd) + (1.0 - self.w) * std_normal_cdf((self.mu2 - x) / self.sd)
    }

    fn pdf(&self, x: f64) -> f64 {
        (self.w * std_normal_pdf((x - self.mu1) / self.sd) + (1.0 - self.w) * std_normal_pdf((x - self.mu2) / self.sd))
            / self.sd
    }

    /// `F^{-1}(Phi(z))`, solved on whichever tail keeps precision.
    fn quantile_from_normal(&self, z: f64) -> f64 {
        let lower = z <= 0.0;
        let target = if lower { std_normal_cdf(z) } else { std_normal_cdf(-z) };
        let g = |x: f64| if lower { self.cdf(x) - target } else { target - self.sf(x) };
        let (mut lo, mut hi) = (-60.0, 60.0);
        let mut x = z;
        for _ in 0..100 {
            let gx = g(x);
            if gx == 0.0 {
                return x;
            }
            if gx < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = self.pdf(x);
            let mut next = if d > 0.0 { x - gx / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-14 * (1.0 + x.abs()) {
                return next;
            }
            x = next;
        }
        x
    }
}
