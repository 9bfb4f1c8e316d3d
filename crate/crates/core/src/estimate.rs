//! Least-squares estimation of the autoregressive parameters and the noise
//! moments from one observed tree.
//!
//! For a mother `k` the design pair is `Y_k = (1, X_k, ..., X_{k/2^{p-1}})`
//! and `Z_k = (X_2k, X_2k+1)`, so `Z_k = theta^t Y_k + V_k`. With
//! `S_n = sum_{k in T_{n,p-1}} Y_k Y_k^t` the estimator built from `T_n` is
//!
//! ```text
//! theta_hat_n = S_{n-1}^{-1} sum_{k in T_{n-1,p-1}} Y_k Z_k^t
//! ```
//!
//! Since `I_2 ⊗ S` is block diagonal the `2(p+1)` system splits into one
//! `(p+1)` solve per daughter column; the Kronecker form only appears in the
//! increasing process `<M>_n = Gamma ⊗ S_{n-1}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spd_condition, spd_solve_refined, CompensatedVec};
use crate::model::{BarModel, NoiseModel, SimulatedTree};
use crate::tree::{subtree_size, NodeIndex};

/// Condition estimates of `S_{n-1}` above this raise [`Error::SingularDesign`].
pub const COND_LIMIT: f64 = 1e12;

/// One mother's regression data.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub k: NodeIndex,
    /// `(1, X_k, X_{k/2}, ...)`
    pub y: Vec<f64>,
    /// `(X_2k, X_2k+1)`
    pub z: [f64; 2],
    /// `(eps_2k, eps_2k+1)` when noise was recorded
    pub v: Option<[f64; 2]>,
}

pub fn design_row(tree: &SimulatedTree, k: NodeIndex) -> Result<DesignRow> {
    let p = tree.p();
    let kk = k.get();
    if kk < 1 << (p - 1) || 2 * kk + 1 > tree.shape().len() {
        return Err(Error::InvalidArgument(format!("cell {kk} has no complete design row")));
    }
    let mut y = vec![1.0; p + 1];
    tree.fill_regression(kk, &mut y[1..]);
    let e = 2 * kk;
    let v = tree.noise().map(|eps| [eps[e as usize], eps[e as usize + 1]]);
    Ok(DesignRow { k, y, z: [tree.x(e), tree.x(e + 1)], v })
}

fn check_generation(tree: &SimulatedTree, n: u32, min: u32) -> Result<()> {
    if n > tree.n() {
        return Err(Error::InvalidArgument(format!("generation {n} exceeds the tree depth {}", tree.n())));
    }
    if n < min {
        return Err(Error::InvalidArgument(format!("generation {n} is below the minimum {min}")));
    }
    Ok(())
}

/// Labels `k` in `T_{n,p-1}` as a half-open range.
#[inline]
fn mothers(n: u32, p: usize) -> std::ops::Range<u64> {
    (1u64 << (p - 1))..(1u64 << (n + 1))
}

/// Symmetric matrix from packed upper-triangular compensated sums.
fn unpack_sym(d: usize, packed: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut idx = 0;
    for i in 0..d {
        for j in i..d {
            m[(i, j)] = packed[idx];
            m[(j, i)] = packed[idx];
            idx += 1;
        }
    }
    m
}

/// Gram and cross sums over mothers in `T_{n,p-1}`, accumulated in label
/// order with compensated summation.
fn gram_and_cross(tree: &SimulatedTree, n: u32, with_cross: bool) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = tree.p();
    let d = p + 1;
    let mut gram = CompensatedVec::zeros(d * (d + 1) / 2);
    let mut cross = CompensatedVec::zeros(if with_cross { 2 * d } else { 0 });
    let mut y = vec![1.0; d];
    for k in mothers(n, p) {
        tree.fill_regression(k, &mut y[1..]);
        let mut idx = 0;
        for i in 0..d {
            for j in i..d {
                gram.add(idx, y[i] * y[j]);
                idx += 1;
            }
        }
        if with_cross {
            let ze = tree.x(2 * k);
            let zo = tree.x(2 * k + 1);
            for i in 0..d {
                cross.add(i, y[i] * ze);
                cross.add(d + i, y[i] * zo);
            }
        }
    }
    let s = unpack_sym(d, &gram.values());
    let c = if with_cross { DMatrix::from_vec(d, 2, cross.values()) } else { DMatrix::zeros(d, 2) };
    (s, c)
}

/// `S_n = sum_{k in T_{n,p-1}} Y_k Y_k^t`.
pub fn s_matrix(tree: &SimulatedTree, n: u32) -> Result<DMatrix<f64>> {
    let p = tree.p() as u32;
    check_generation(tree, n, p.saturating_sub(1))?;
    // mothers of generation n need daughters inside the tree only for the
    // cross sums; S itself uses cells up to generation n
    Ok(gram_and_cross(tree, n, false).0)
}

/// Output of [`theta_hat`].
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaFit {
    /// `vec(theta_hat) = (a_0, ..., a_p, b_0, ..., b_p)`
    pub theta: DVector<f64>,
    /// `S_{n-1}`
    pub s: DMatrix<f64>,
    /// `sum Y_k Z_k^t`, `(p+1) x 2`
    pub cross: DMatrix<f64>,
    /// 2-norm condition number of `S_{n-1}`
    pub cond: f64,
}

impl ThetaFit {
    /// `theta_hat` as a `(p+1) x 2` matrix.
    pub fn theta_matrix(&self) -> DMatrix<f64> {
        let d = self.s.nrows();
        DMatrix::from_column_slice(d, 2, self.theta.as_slice())
    }
}

/// Least-squares estimate from the cells of `T_n`.
pub fn theta_hat(tree: &SimulatedTree, n: u32) -> Result<ThetaFit> {
    let p = tree.p();
    check_generation(tree, n, p as u32)?;
    let (s, cross) = gram_and_cross(tree, n - 1, true);
    let cond = spd_condition(&s);
    if !(cond <= COND_LIMIT) {
        return Err(Error::SingularDesign { cond, limit: COND_LIMIT });
    }
    let d = p + 1;
    let mut theta = DVector::zeros(2 * d);
    for col in 0..2 {
        let rhs = cross.column(col).into_owned();
        let sol = spd_solve_refined(&s, &rhs).map_err(|_| Error::SingularDesign { cond, limit: COND_LIMIT })?;
        theta.rows_mut(col * d, d).copy_from(&sol);
    }
    Ok(ThetaFit { theta, s, cross, cond })
}

/// Residual pairs `(eps_hat_2k, eps_hat_2k+1)` for mothers in `T_{n-1,p-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    n: u32,
    p: usize,
    pub pairs: Vec<[f64; 2]>,
}

impl Residuals {
    /// Wraps externally computed residual pairs for generation `n`.
    pub fn from_pairs(n: u32, p: usize, pairs: Vec<[f64; 2]>) -> Self {
        Residuals { n, p, pairs }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }
}

pub fn residuals(tree: &SimulatedTree, n: u32, theta: &DVector<f64>) -> Result<Residuals> {
    let p = tree.p();
    check_generation(tree, n, p as u32)?;
    let d = p + 1;
    if theta.len() != 2 * d {
        return Err(Error::DimensionMismatch(format!("theta has {} entries, expected {}", theta.len(), 2 * d)));
    }
    let mut y = vec![1.0; d];
    let pairs = mothers(n - 1, p)
        .map(|k| {
            tree.fill_regression(k, &mut y[1..]);
            let mut pe = 0.0;
            let mut po = 0.0;
            for i in 0..d {
                pe += theta[i] * y[i];
                po += theta[d + i] * y[i];
            }
            [tree.x(2 * k) - pe, tree.x(2 * k + 1) - po]
        })
        .collect();
    Ok(Residuals { n, p, pairs })
}

/// Denominator used by the noise-moment estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `|T_{n-1}|`, regardless of how many terms the sum has.
    #[default]
    Literal,
    /// The number of summed pairs.
    SummandCount,
}

fn denominator(norm: Normalization, n: u32, terms: usize) -> f64 {
    match norm {
        Normalization::Literal => subtree_size(n - 1) as f64,
        Normalization::SummandCount => terms as f64,
    }
}

/// `sigma2_hat_n = (1 / (2 |T_{n-1}|)) sum (eps_hat_2k^2 + eps_hat_2k+1^2)`.
pub fn sigma2_hat(res: &Residuals) -> f64 {
    sigma2_hat_with(res, Normalization::Literal)
}

pub fn sigma2_hat_with(res: &Residuals, norm: Normalization) -> f64 {
    let mut acc = CompensatedVec::zeros(1);
    for [e, o] in &res.pairs {
        acc.add(0, e * e + o * o);
    }
    acc.values()[0] / (2.0 * denominator(norm, res.n, res.pairs.len()))
}

/// `rho_hat_n = (1 / |T_{n-1}|) sum eps_hat_2k eps_hat_2k+1`.
pub fn rho_hat(res: &Residuals) -> f64 {
    rho_hat_with(res, Normalization::Literal)
}

pub fn rho_hat_with(res: &Residuals, norm: Normalization) -> f64 {
    let mut acc = CompensatedVec::zeros(1);
    for [e, o] in &res.pairs {
        acc.add(0, e * o);
    }
    acc.values()[0] / denominator(norm, res.n, res.pairs.len())
}

/// True-noise sums over `T_{n-1,p}` for `(sigma2_n, rho_n)`.
fn noise_sums(tree: &SimulatedTree, n: u32) -> Result<(f64, f64)> {
    let eps = tree.noise().ok_or(Error::NoiseNotRecorded)?;
    let p = tree.p();
    check_generation(tree, n, p as u32)?;
    let mut acc = CompensatedVec::zeros(2);
    for k in (1u64 << p)..(1u64 << n) {
        let e = eps[2 * k as usize];
        let o = eps[2 * k as usize + 1];
        acc.add(0, e * e + o * o);
        acc.add(1, e * o);
    }
    let v = acc.values();
    Ok((v[0], v[1]))
}

/// `sigma2_n = (1 / (2 |T_{n-1}|)) sum_{k in T_{n-1,p}} (eps_2k^2 + eps_2k+1^2)`.
pub fn sigma2_bar(tree: &SimulatedTree, n: u32) -> Result<f64> {
    let (sq, _) = noise_sums(tree, n)?;
    Ok(sq / (2.0 * subtree_size(n - 1) as f64))
}

/// `rho_n = (1 / |T_{n-1}|) sum_{k in T_{n-1,p}} eps_2k eps_2k+1`.
pub fn rho_bar(tree: &SimulatedTree, n: u32) -> Result<f64> {
    let (_, cr) = noise_sums(tree, n)?;
    Ok(cr / subtree_size(n - 1) as f64)
}

/// `M_n` and `<M>_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Martingale {
    /// `sum_{k in T_{n-1,p-1}} (eps_2k Y_k, eps_2k+1 Y_k)`
    pub m: DVector<f64>,
    /// `Gamma ⊗ S_{n-1}`
    pub bracket: DMatrix<f64>,
}

pub fn martingale(tree: &SimulatedTree, n: u32, gamma: &DMatrix<f64>) -> Result<Martingale> {
    let eps = tree.noise().ok_or(Error::NoiseNotRecorded)?;
    let p = tree.p();
    check_generation(tree, n, p as u32)?;
    if gamma.shape() != (2, 2) {
        return Err(Error::DimensionMismatch("Gamma must be 2x2".into()));
    }
    let d = p + 1;
    let mut acc = CompensatedVec::zeros(2 * d);
    let mut y = vec![1.0; d];
    for k in mothers(n - 1, p) {
        tree.fill_regression(k, &mut y[1..]);
        let e = eps[2 * k as usize];
        let o = eps[2 * k as usize + 1];
        for i in 0..d {
            acc.add(i, e * y[i]);
            acc.add(d + i, o * y[i]);
        }
    }
    let s = gram_and_cross(tree, n - 1, false).0;
    Ok(Martingale { m: DVector::from_vec(acc.values()), bracket: gamma.kronecker(&s) })
}

/// `||(I_2 ⊗ S_{n-1})(theta_hat - theta) - M_n|| / ||M_n||`; the raw norm when `M_n = 0`.
pub fn thest_residual(fit: &ThetaFit, m: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    let d = fit.s.nrows();
    let diff = &fit.theta - theta;
    let mut lhs = DVector::zeros(2 * d);
    for col in 0..2 {
        let part = &fit.s * diff.rows(col * d, d);
        lhs.rows_mut(col * d, d).copy_from(&part);
    }
    let r = (lhs - m).norm();
    let scale = m.norm();
    if scale > 0.0 {
        r / scale
    } else {
        r
    }
}

/// Everything estimated from `T_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub n: u32,
    pub p: usize,
    /// `S_{n-1}`
    pub s: DMatrix<f64>,
    pub theta_hat: DVector<f64>,
    pub sigma2_hat: f64,
    pub rho_hat: f64,
    pub sigma2_bar: Option<f64>,
    pub rho_bar: Option<f64>,
    pub martingale: Option<Martingale>,
    pub cond_s: f64,
    /// Relative residual of `Sigma_{n-1}(theta_hat - theta) = M_n` when the
    /// true model is known.
    pub thest_residual: Option<f64>,
}

/// Runs every estimator on `T_n`. `noise` supplies `Gamma` for the
/// increasing process and `model` the true `theta` for the identity check;
/// both need recorded noise in the tree.
pub fn estimate(
    tree: &SimulatedTree,
    n: u32,
    noise: Option<&NoiseModel>,
    model: Option<&BarModel>,
) -> Result<EstimationResult> {
    let fit = theta_hat(tree, n)?;
    let res = residuals(tree, n, &fit.theta)?;
    let (sigma2_bar, rho_bar) =
        if tree.has_noise() { (Some(sigma2_bar(tree, n)?), Some(rho_bar(tree, n)?)) } else { (None, None) };
    let martingale = match (noise, tree.has_noise()) {
        (Some(noise), true) => Some(martingale(tree, n, &noise.gamma())?),
        _ => None,
    };
    let thest_residual = match (&martingale, model) {
        (Some(mg), Some(model)) => Some(thest_residual(&fit, &mg.m, &model.theta())),
        _ => None,
    };
    Ok(EstimationResult {
        n,
        p: tree.p(),
        sigma2_hat: sigma2_hat(&res),
        rho_hat: rho_hat(&res),
        theta_hat: fit.theta,
        s: fit.s,
        sigma2_bar,
        rho_bar,
        martingale,
        cond_s: fit.cond,
        thest_residual,
    })
}

/// Flat, serializable view of an [`EstimationResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationSummary {
    pub n: u32,
    pub p: usize,
    pub seed: u64,
    pub theta_hat: Vec<f64>,
    pub sigma2_hat: f64,
    pub rho_hat: f64,
    pub sigma2_bar: Option<f64>,
    pub rho_bar: Option<f64>,
    pub condition: f64,
    pub thest_residual: Option<f64>,
}

impl EstimationResult {
    pub fn summary(&self, seed: u64) -> EstimationSummary {
        EstimationSummary {
            n: self.n,
            p: self.p,
            seed,
            theta_hat: self.theta_hat.iter().cloned().collect(),
            sigma2_hat: self.sigma2_hat,
            rho_hat: self.rho_hat,
            sigma2_bar: self.sigma2_bar,
            rho_bar: self.rho_bar,
            condition: self.cond_s,
            thest_residual: self.thest_residual,
        }
    }
}
