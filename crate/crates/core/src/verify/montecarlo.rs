//! Replicated simulation and estimation with deterministic reduction.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::envelope::{fit_decay_slope, fit_envelope, EnvelopeFit, SlopeFit, SlopeStatus};
use super::rates::{fit_quadratic, mdp_rate_curve, QuadraticFit, RatePoint};
use super::tails::{empirical_tail, TailRow};
use super::{scale_admissible, Case, ScaleSpec, ScaleVerdict};
use crate::error::{Error, Result};
use crate::estimate::{martingale, residuals, rho_bar, rho_hat, s_matrix, sigma2_bar, sigma2_hat, theta_hat};
use crate::limits::{LimitSet, LimitSummary};
use crate::linalg::CompensatedSum;
use crate::model::{simulate_with, BarModel, InitSpec, NoiseModel, SimulateOptions};
use crate::seed::replicate_seed;
use crate::tree::subtree_size;

/// Everything that shapes a Monte-Carlo campaign except the worker count,
/// which never changes the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub n_min: u32,
    pub n_max: u32,
    pub replicates: usize,
    pub master_seed: u64,
    pub record_noise: bool,
    /// Tail thresholds for `||theta_hat_n - theta||`.
    pub deltas: Vec<f64>,
    /// Rate-curve abscissae; `None` picks a grid from the limit variance.
    pub xs: Option<Vec<f64>>,
    pub alpha: f64,
    pub case: Case,
    /// Generation at which the slope threshold is selected.
    pub slope_generation: u32,
    /// Window that the selected threshold's tail must fall into.
    pub slope_window: (f64, f64),
    pub cov_tol: f64,
    pub isometry_tol: f64,
    pub rate_ratio_tol: f64,
}

impl Plan {
    pub fn new(n_min: u32, n_max: u32, replicates: usize, master_seed: u64) -> Self {
        Plan {
            n_min,
            n_max,
            replicates,
            master_seed,
            record_noise: true,
            deltas: log_grid(0.05, 1.0, 14),
            xs: None,
            alpha: 0.25,
            case: Case::One,
            slope_generation: 7,
            slope_window: (1e-3, 0.3),
            cov_tol: 0.2,
            isometry_tol: 0.1,
            rate_ratio_tol: 2.0,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        let lowest = (p as u32).max(2);
        if self.n_min < lowest || self.n_min > self.n_max {
            return Err(Error::InvalidArgument(format!(
                "need max(p, 2) = {lowest} <= n_min <= n_max, got n_min = {}, n_max = {}",
                self.n_min, self.n_max
            )));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("need at least one replicate".into()));
        }
        if self.deltas.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::InvalidArgument("deltas must be nonnegative".into()));
        }
        ScaleSpec::new(self.alpha, self.case, 0.5)?;
        Ok(())
    }
}

fn log_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..k).map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenStats {
    pub n: u32,
    pub theta_err: f64,
    /// `||S_n / |T_n| - L||_F`
    pub bracket_dev: f64,
    pub sigma2_hat: f64,
    pub rho_hat: f64,
    pub sigma2_bar: Option<f64>,
    pub rho_bar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub seed: u64,
    pub theta_hat: Vec<f64>,
    pub sigma2_hat: f64,
    pub rho_hat: f64,
    pub sigma2_bar: Option<f64>,
    pub rho_bar: Option<f64>,
    pub bracket_dev: f64,
    #[serde(skip)]
    pub gens: Vec<GenStats>,
    /// `M_n M_n^t` and `Gamma ⊗ S_{n-1}` at `n_max`, column-major.
    #[serde(skip)]
    pub martingale: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedReplicate {
    pub index: usize,
    pub seed: u64,
    pub error: String,
}

fn run_one(
    model: &BarModel,
    noise: &NoiseModel,
    init: &InitSpec,
    plan: &Plan,
    l: &DMatrix<f64>,
    index: usize,
) -> Result<ReplicateRecord> {
    let seed = replicate_seed(plan.master_seed, index as u64);
    let opts = SimulateOptions { record_noise: plan.record_noise };
    let tree = simulate_with(model, Some(noise), init, plan.n_max, seed, opts)?;
    let theta = model.theta();
    let mut gens = Vec::with_capacity((plan.n_max - plan.n_min + 1) as usize);
    let mut last_theta = DVector::zeros(0);
    for n in plan.n_min..=plan.n_max {
        let fit = theta_hat(&tree, n)?;
        let res = residuals(&tree, n, &fit.theta)?;
        let s = s_matrix(&tree, n)? / subtree_size(n) as f64;
        let (s2b, rb) =
            if tree.has_noise() { (Some(sigma2_bar(&tree, n)?), Some(rho_bar(&tree, n)?)) } else { (None, None) };
        gens.push(GenStats {
            n,
            theta_err: (&fit.theta - &theta).norm(),
            bracket_dev: (s - l).norm(),
            sigma2_hat: sigma2_hat(&res),
            rho_hat: rho_hat(&res),
            sigma2_bar: s2b,
            rho_bar: rb,
        });
        last_theta = fit.theta;
    }
    let mart = if tree.has_noise() {
        let mg = martingale(&tree, plan.n_max, &noise.gamma())?;
        let mm = &mg.m * mg.m.transpose();
        Some((mm.as_slice().to_vec(), mg.bracket.as_slice().to_vec()))
    } else {
        None
    };
    let top = gens.last().expect("at least one generation").clone();
    Ok(ReplicateRecord {
        index,
        seed,
        theta_hat: last_theta.iter().copied().collect(),
        sigma2_hat: top.sigma2_hat,
        rho_hat: top.rho_hat,
        sigma2_bar: top.sigma2_bar,
        rho_bar: top.rho_bar,
        bracket_dev: top.bracket_dev,
        gens,
        martingale: mart,
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketRow {
    pub n: u32,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    /// Median divided by `||L||_F`.
    pub median_rel: f64,
}

/// Per-generation summary of `||S_n / |T_n| - L||_F` across replicates.
pub fn bracket_convergence(per_n: &[(u32, Vec<f64>)], l: &DMatrix<f64>) -> Vec<BracketRow> {
    let l_norm = l.norm();
    per_n
        .iter()
        .map(|(n, devs)| {
            let s = sorted(devs.clone());
            let median = quantile(&s, 0.5);
            BracketRow { n: *n, median, q10: quantile(&s, 0.1), q90: quantile(&s, 0.9), median_rel: median / l_norm }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCheck {
    pub replicates: usize,
    /// `||C_hat - C||_F / ||C||_F`
    pub rel_err: f64,
    pub low_power: bool,
    pub degenerate: bool,
    pub empirical: Vec<Vec<f64>>,
    pub theory: Vec<Vec<f64>>,
}

/// Sample covariance of `sqrt(N) (theta_hat - theta)` against `limit`.
pub fn covariance_check(errors: &[DVector<f64>], n_size: f64, limit: &DMatrix<f64>) -> Result<CovarianceCheck> {
    let r = errors.len();
    if r < 2 {
        return Err(Error::InvalidArgument(format!("covariance needs at least 2 replicates, got {r}")));
    }
    let d = limit.nrows();
    if errors.iter().any(|e| e.len() != d) {
        return Err(Error::DimensionMismatch("error vectors do not match the limit covariance".into()));
    }
    let mean: DVector<f64> = DVector::from_fn(d, |i, _| {
        let mut s = CompensatedSum::default();
        errors.iter().for_each(|e| s.add(e[i]));
        s.value() / r as f64
    });
    let emp = DMatrix::from_fn(d, d, |i, j| {
        let mut s = CompensatedSum::default();
        errors.iter().for_each(|e| s.add((e[i] - mean[i]) * (e[j] - mean[j])));
        n_size * s.value() / (r - 1) as f64
    });
    let degenerate = emp.iter().all(|v| *v == 0.0);
    Ok(CovarianceCheck {
        replicates: r,
        rel_err: (&emp - limit).norm() / limit.norm(),
        low_power: r < 50,
        degenerate,
        empirical: crate::limits::rows(&emp),
        theory: crate::limits::rows(limit),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometryCheck {
    pub replicates: usize,
    /// Largest `|mean(M M^t) - mean(Gamma ⊗ S)|_ij / sqrt(B_ii B_jj)`.
    pub max_rel: f64,
    pub mean_mm: Vec<Vec<f64>>,
    pub mean_bracket: Vec<Vec<f64>>,
}

/// Compares the replicate means of `M_n M_n^t` and of its increasing process.
pub fn isometry_check(pairs: &[(DMatrix<f64>, DMatrix<f64>)]) -> Result<IsometryCheck> {
    let first = pairs.first().ok_or(Error::EmptySamples)?;
    let d = first.0.nrows();
    let r = pairs.len() as f64;
    let mean = |pick: &dyn Fn(&(DMatrix<f64>, DMatrix<f64>)) -> f64| {
        let mut s = CompensatedSum::default();
        pairs.iter().for_each(|p| s.add(pick(p)));
        s.value() / r
    };
    let mm = DMatrix::from_fn(d, d, |i, j| mean(&|p| p.0[(i, j)]));
    let br = DMatrix::from_fn(d, d, |i, j| mean(&|p| p.1[(i, j)]));
    let mut max_rel = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let scale = (br[(i, i)] * br[(j, j)]).sqrt();
            max_rel = max_rel.max((mm[(i, j)] - br[(i, j)]).abs() / scale);
        }
    }
    Ok(IsometryCheck {
        replicates: pairs.len(),
        max_rel,
        mean_mm: crate::limits::rows(&mm),
        mean_bracket: crate::limits::rows(&br),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailTable {
    pub n: u32,
    pub rows: Vec<TailRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub n: u32,
    /// Median `|sigma2_hat_n - sigma2_n|`.
    pub sigma2_median: f64,
    /// Median `|rho_hat_n - rho_n|`.
    pub rho_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub statistic: String,
    /// `|T_{n-1}|` at `n_max`.
    pub n_size: f64,
    pub points: Vec<RatePoint>,
    pub fit: Option<QuadraticFit>,
    /// `1 / denominator` of the implemented rate.
    pub c_theory: f64,
    /// Competing constant, half of `c_theory`, for the variance statistic.
    pub c_alternative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub plan: Plan,
    pub beta: f64,
    pub limits: LimitSummary,
    pub records: Vec<ReplicateRecord>,
    pub failed: Vec<FailedReplicate>,
    pub tails: Vec<TailTable>,
    pub slope_delta: Option<f64>,
    pub slope: Option<SlopeFit>,
    pub envelope: Option<EnvelopeFit>,
    pub rates_sigma2: Option<RateCurve>,
    pub rates_rho: Option<RateCurve>,
    pub covariance: Option<CovarianceCheck>,
    pub bracket: Vec<BracketRow>,
    pub gaps: Vec<GapRow>,
    pub isometry: Option<IsometryCheck>,
    pub scale: ScaleVerdict,
    pub checks: Vec<ReportCheck>,
}

impl MonteCarloReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn auto_grid(sd: f64, b: f64) -> Vec<f64> {
    // standardized thresholds 1.5..3.5 keep the grid observable at R ~ 1e4
    (0..9).map(|i| (1.5 + 0.25 * i as f64) * sd / b).collect()
}

/// Simulates `plan.replicates` trees to `plan.n_max` and reduces them into a
/// report. Replicate `r` uses `replicate_seed(master_seed, r)`; results are
/// gathered in replicate order, so `workers` only affects wall time.
pub fn run_replicates(
    model: &BarModel,
    noise: &NoiseModel,
    init: &InitSpec,
    plan: &Plan,
    workers: usize,
) -> Result<MonteCarloReport> {
    plan.validate(model.p())?;
    let limits = LimitSet::compute(model, noise)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<ReplicateRecord>> = pool.install(|| {
        (0..plan.replicates).into_par_iter().map(|r| run_one(model, noise, init, plan, &limits.l, r)).collect()
    });

    let mut records = Vec::with_capacity(outcomes.len());
    let mut failed = Vec::new();
    for (index, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(rec) => records.push(rec),
            Err(e @ Error::SingularDesign { .. }) => failed.push(FailedReplicate {
                index,
                seed: replicate_seed(plan.master_seed, index as u64),
                error: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    if records.is_empty() {
        return Err(Error::InvalidArgument("every replicate failed".into()));
    }

    let generations: Vec<u32> = (plan.n_min..=plan.n_max).collect();
    let gen_index = |n: u32| (n - plan.n_min) as usize;
    let column = |n: u32, f: &dyn Fn(&GenStats) -> f64| -> Vec<f64> {
        records.iter().map(|r| f(&r.gens[gen_index(n)])).collect()
    };

    let mut tails = Vec::new();
    for &n in &generations {
        tails.push(TailTable { n, rows: empirical_tail(&column(n, &|g| g.theta_err), &plan.deltas)? });
    }

    let beta = model.beta();
    let ref_n = plan.slope_generation.clamp(plan.n_min, plan.n_max);
    let (lo, hi) = plan.slope_window;
    let slope_delta = tails[gen_index(ref_n)]
        .rows
        .iter()
        .filter(|r| r.p_hat > lo && r.p_hat < hi)
        .map(|r| r.delta)
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))));
    let slope = slope_delta.map(|delta| {
        let pts: Vec<(u32, f64)> =
            tails.iter().map(|t| (t.n, t.rows.iter().find(|r| r.delta == delta).map_or(0.0, |r| r.p_hat))).collect();
        fit_decay_slope(&pts, plan.case, beta)
    });
    let table: Vec<(u32, Vec<TailRow>)> = tails.iter().map(|t| (t.n, t.rows.clone())).collect();
    let envelope = fit_envelope(&table, plan.case, beta, limits.sigma_norm).ok();

    let per_n: Vec<(u32, Vec<f64>)> = generations.iter().map(|&n| (n, column(n, &|g| g.bracket_dev))).collect();
    let bracket = bracket_convergence(&per_n, &limits.l);

    let has_noise = records[0].sigma2_bar.is_some();
    let gaps: Vec<GapRow> = if has_noise {
        generations
            .iter()
            .map(|&n| GapRow {
                n,
                sigma2_median: quantile(
                    &sorted(column(n, &|g| (g.sigma2_hat - g.sigma2_bar.unwrap_or(f64::NAN)).abs())),
                    0.5,
                ),
                rho_median: quantile(&sorted(column(n, &|g| (g.rho_hat - g.rho_bar.unwrap_or(f64::NAN)).abs())), 0.5),
            })
            .collect()
    } else {
        Vec::new()
    };

    let n_size = subtree_size(plan.n_max - 1) as f64;
    let theta = model.theta();
    let errors: Vec<DVector<f64>> = records.iter().map(|r| DVector::from_column_slice(&r.theta_hat) - &theta).collect();
    let covariance = covariance_check(&errors, n_size, &limits.asymp_cov).ok();

    let scale_spec = ScaleSpec::new(plan.alpha, plan.case, beta)?;
    let (rates_sigma2, rates_rho) = if has_noise {
        let b = scale_spec.b(n_size);
        let sd_s2 = (0.5 * limits.rates.sigma2_denom).sqrt();
        let sd_rho = (0.5 * limits.rates.rho_denom).sqrt();
        let s2: Vec<f64> = records.iter().map(|r| r.sigma2_bar.unwrap_or(f64::NAN) - noise.sigma2()).collect();
        let rh: Vec<f64> = records.iter().map(|r| r.rho_bar.unwrap_or(f64::NAN) - noise.rho()).collect();
        let xs_s2 = plan.xs.clone().unwrap_or_else(|| auto_grid(sd_s2, b));
        let xs_rho = plan.xs.clone().unwrap_or_else(|| auto_grid(sd_rho, b));
        let rates = &limits.rates;
        let curve_s2 = mdp_rate_curve(&s2, n_size, &scale_spec, &xs_s2, |x| rates.rate_sigma2(x))?;
        let curve_rho = mdp_rate_curve(&rh, n_size, &scale_spec, &xs_rho, |x| rates.rate_rho(x))?;
        (
            Some(RateCurve {
                statistic: "sigma2_n".into(),
                n_size,
                fit: fit_quadratic(&curve_s2),
                points: curve_s2,
                c_theory: 1.0 / rates.sigma2_denom,
                c_alternative: Some(0.5 / rates.sigma2_denom),
            }),
            Some(RateCurve {
                statistic: "rho_n".into(),
                n_size,
                fit: fit_quadratic(&curve_rho),
                points: curve_rho,
                c_theory: 1.0 / rates.rho_denom,
                c_alternative: None,
            }),
        )
    } else {
        (None, None)
    };

    let isometry = if has_noise {
        let d = 2 * (model.p() + 1);
        let pairs: Vec<(DMatrix<f64>, DMatrix<f64>)> = records
            .iter()
            .filter_map(|r| r.martingale.as_ref())
            .map(|(mm, br)| (DMatrix::from_column_slice(d, d, mm), DMatrix::from_column_slice(d, d, br)))
            .collect();
        isometry_check(&pairs).ok()
    } else {
        None
    };

    let scale = scale_admissible(&scale_spec);
    let mut checks = Vec::new();
    let mut check =
        |name: &str, passed: bool, detail: String| checks.push(ReportCheck { name: name.into(), passed, detail });
    let monotone = tails.iter().all(|t| t.rows.windows(2).all(|w| w[0].delta > w[1].delta || w[1].p_hat <= w[0].p_hat));
    check("tail_monotone", monotone, "P_hat nonincreasing in delta".into());
    match &slope {
        Some(fit) => check(
            "decay_slope",
            fit.status == SlopeStatus::Confirmed,
            format!("delta = {:?}, status {:?}, lower95 = {:?}", slope_delta, fit.status, fit.lower95),
        ),
        None => check("decay_slope", false, format!("no delta with P_hat in ({lo}, {hi}) at n = {ref_n}")),
    }
    match &envelope {
        Some(env) => check("envelope_dominates", env.dominates, format!("worst margin {:e}", env.worst_margin)),
        None => check("envelope_dominates", false, "tail table too sparse to fit".into()),
    }
    if let Some(cov) = &covariance {
        check(
            "covariance",
            cov.rel_err < plan.cov_tol,
            format!("relative Frobenius error {:.4} (tolerance {})", cov.rel_err, plan.cov_tol),
        );
    }
    let decreasing = bracket.windows(2).all(|w| w[1].median < w[0].median);
    check("bracket_decreasing", decreasing, format!("{} generations", bracket.len()));
    if let Some(iso) = &isometry {
        check(
            "isometry",
            iso.max_rel < plan.isometry_tol,
            format!("max relative gap {:.4} (tolerance {})", iso.max_rel, plan.isometry_tol),
        );
    }
    if let Some(curve) = &rates_sigma2 {
        let ok = curve.fit.as_ref().is_some_and(|f| f.nondecreasing && f.max_ratio <= plan.rate_ratio_tol);
        check("rate_sigma2_shape", ok, format!("{:?}", curve.fit));
    }
    check(
        "scale_admissible",
        scale.pass,
        format!("alpha {} vs max {:.6} ({})", scale.alpha, scale.alpha_max, scale.regime),
    );

    Ok(MonteCarloReport {
        plan: plan.clone(),
        beta,
        limits: limits.summary(),
        records,
        failed,
        tails,
        slope_delta,
        slope,
        envelope,
        rates_sigma2,
        rates_rho,
        covariance,
        bracket,
        gaps,
        isometry,
        scale,
        checks,
    })
}
