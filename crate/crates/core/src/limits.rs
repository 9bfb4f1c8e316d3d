//! Deterministic limit objects of the normalized design matrix and the
//! quadratic rate functions that govern moderate deviations.
//!
//! With `a_bar = (a_0 + b_0)/2`, `a2_bar = (a_0^2 + b_0^2)/2` and
//! `A_bar = (A + B)/2`:
//!
//! ```text
//! Xi     = a_bar (I_p - A_bar)^{-1} e_1
//! T      = (sigma2 + a2_bar) e_1 e_1^t
//!          + (a_0 (A Xi e_1^t + e_1 Xi^t A^t) + b_0 (B Xi e_1^t + e_1 Xi^t B^t)) / 2
//! Lambda = T + (A Lambda A^t + B Lambda B^t) / 2
//! L      = [[1, Xi^t], [Xi, Lambda]]
//! ```
//!
//! `S_n / |T_n|` converges to `L`, and `sqrt(|T_{n-1}|) (theta_hat - theta)`
//! is asymptotically normal with covariance `Gamma ⊗ L^{-1}`.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::model::{BarModel, NoiseModel};

pub const FIXED_POINT_TOL: f64 = 1e-14;
pub const FIXED_POINT_MAX_ITER: usize = 10_000;

fn e1(p: usize) -> DVector<f64> {
    let mut v = DVector::zeros(p);
    v[0] = 1.0;
    v
}

/// `Xi = a_bar (I - A_bar)^{-1} e_1`.
pub fn xi_vector(model: &BarModel) -> Result<DVector<f64>> {
    let p = model.p();
    let m = DMatrix::identity(p, p) - model.abar_matrix();
    let sol = m
        .lu()
        .solve(&(e1(p) * model.abar()))
        .ok_or_else(|| Error::NotPositiveDefinite("I - A_bar is singular".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite("I - A_bar is singular".into()));
    }
    Ok(sol)
}

pub fn t_matrix(model: &BarModel, sigma2: f64, xi: &DVector<f64>) -> DMatrix<f64> {
    let p = model.p();
    let e = e1(p);
    let (a0, b0) = (model.a()[0], model.b()[0]);
    let ax = model.companion_a() * xi;
    let bx = model.companion_b() * xi;
    let mut t = &e * e.transpose() * (sigma2 + model.a2bar());
    let sym = |v: &DVector<f64>| v * e.transpose() + &e * v.transpose();
    t += (sym(&ax) * a0 + sym(&bx) * b0) * 0.5;
    t
}

/// `X -> T + (A X A^t + B X B^t) / 2`.
pub fn lambda_map(model: &BarModel, t: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let a = model.companion_a();
    let b = model.companion_b();
    t + (a * x * a.transpose() + b * x * b.transpose()) * 0.5
}

/// Solution of the fixed-point equation plus convergence diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub iterations: usize,
    /// `||Lambda - T - (A Lambda A^t + B Lambda B^t)/2||_F`
    pub residual: f64,
    /// Frobenius distances between successive iterates.
    pub steps: Vec<f64>,
}

impl FixedPointReport {
    /// Largest ratio of successive step lengths from the second step on.
    pub fn max_step_ratio(&self) -> Option<f64> {
        self.steps
            .windows(2)
            .filter(|w| w[0] > 1e-280)
            .map(|w| w[1] / w[0])
            .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
    }
}

/// Iterates `Lambda_{m+1} = T + (A Lambda_m A^t + B Lambda_m B^t)/2` from
/// `Lambda_0 = T` until `||Lambda_{m+1} - Lambda_m|| <= 1e-14 (1 + ||Lambda_m||)`.
pub fn lambda_fixed_point(model: &BarModel, t: &DMatrix<f64>) -> Result<(DMatrix<f64>, FixedPointReport)> {
    let mut cur = t.clone();
    let mut steps = Vec::new();
    for it in 1..=FIXED_POINT_MAX_ITER {
        let next = lambda_map(model, t, &cur);
        let step = (&next - &cur).norm();
        steps.push(step);
        let scale = 1.0 + cur.norm();
        cur = next;
        if !step.is_finite() {
            break;
        }
        if step <= FIXED_POINT_TOL * scale {
            let residual = (lambda_map(model, t, &cur) - &cur).norm();
            return Ok((cur, FixedPointReport { iterations: it, residual, steps }));
        }
    }
    Err(Error::NonConvergence { iterations: steps.len(), last_step: steps.last().copied().unwrap_or(f64::NAN) })
}

/// `[[1, Xi^t], [Xi, Lambda]]` without a definiteness check.
pub fn assemble_l(xi: &DVector<f64>, lambda: &DMatrix<f64>) -> DMatrix<f64> {
    let p = xi.len();
    let mut l = DMatrix::zeros(p + 1, p + 1);
    l[(0, 0)] = 1.0;
    for i in 0..p {
        l[(0, i + 1)] = xi[i];
        l[(i + 1, 0)] = xi[i];
    }
    l.view_mut((1, 1), (p, p)).copy_from(lambda);
    l
}

/// `L`, rejected unless positive definite.
pub fn l_matrix(xi: &DVector<f64>, lambda: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let l = assemble_l(xi, lambda);
    if Cholesky::new(l.clone()).is_none() {
        return Err(Error::NotPositiveDefinite("L (degenerate model)".into()));
    }
    Ok(l)
}

/// `Gamma ⊗ L^{-1}`.
pub fn asymp_cov(noise: &NoiseModel, l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv =
        Cholesky::new(l.clone()).ok_or_else(|| Error::NotPositiveDefinite("L (degenerate model)".into()))?.inverse();
    Ok(noise.gamma().kronecker(&inv))
}

/// Closed forms for `p = 1`:
/// `Xi = a_bar / (1 - b_bar)`,
/// `Lambda = (a2_bar + sigma2 + 2 Xi ab_bar) / (1 - b2_bar)` with
/// `b_bar = (a_1 + b_1)/2`, `b2_bar = (a_1^2 + b_1^2)/2`, `ab_bar = (a_0 a_1 + b_0 b_1)/2`.
pub fn order_one_closed_form(model: &BarModel, sigma2: f64) -> Result<(f64, f64)> {
    if model.p() != 1 {
        return Err(Error::DimensionMismatch("closed forms need p = 1".into()));
    }
    let (a, b) = (model.a(), model.b());
    let bbar = 0.5 * (a[1] + b[1]);
    let b2bar = 0.5 * (a[1] * a[1] + b[1] * b[1]);
    let abbar = 0.5 * (a[0] * a[1] + b[0] * b[1]);
    let xi = model.abar() / (1.0 - bbar);
    let lambda = (model.a2bar() + sigma2 + 2.0 * xi * abbar) / (1.0 - b2bar);
    Ok((xi, lambda))
}

/// Coefficients of the four quadratic rate functions.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCoeffs {
    /// `(Gamma ⊗ L^{-1})^{-1} = Gamma^{-1} ⊗ L`
    pub theta_quadratic: DMatrix<f64>,
    /// `tau4 - 2 sigma2^2 + nu2`
    pub sigma2_denom: f64,
    /// `2 (nu2 - rho^2)`
    pub rho_denom: f64,
    /// `(Gamma ⊗ L)^{-1}`
    pub m_quadratic: DMatrix<f64>,
}

impl RateCoeffs {
    pub fn new(noise: &NoiseModel, l: &DMatrix<f64>) -> Result<Self> {
        let s2 = noise.sigma2();
        let sigma2_denom = noise.tau4() - 2.0 * s2 * s2 + noise.nu2();
        let rho_denom = 2.0 * (noise.nu2() - noise.rho() * noise.rho());
        if !(sigma2_denom > 0.0) {
            return Err(Error::InvalidNoise(format!("tau4 - 2 sigma2^2 + nu2 = {sigma2_denom} must be positive")));
        }
        if !(rho_denom > 0.0) {
            return Err(Error::InvalidNoise(format!("2 (nu2 - rho^2) = {rho_denom} must be positive")));
        }
        let gamma = noise.gamma();
        let gamma_inv = gamma.clone().try_inverse().ok_or_else(|| Error::NotPositiveDefinite("Gamma".into()))?;
        let l_inv = Cholesky::new(l.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("L (degenerate model)".into()))?
            .inverse();
        Ok(RateCoeffs {
            theta_quadratic: gamma_inv.kronecker(l),
            sigma2_denom,
            rho_denom,
            m_quadratic: gamma_inv.kronecker(&l_inv),
        })
    }

    /// `I_theta(x) = x^t (Gamma ⊗ L^{-1})^{-1} x / 2`
    pub fn rate_theta(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.theta_quadratic * x))
    }

    /// `I_M(x) = x^t (Gamma ⊗ L)^{-1} x / 2`
    pub fn rate_m(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.m_quadratic * x))
    }

    /// `I_sigma2(x) = x^2 / (tau4 - 2 sigma2^2 + nu2)`
    pub fn rate_sigma2(&self, x: f64) -> f64 {
        x * x / self.sigma2_denom
    }

    /// `I_rho(x) = x^2 / (2 (nu2 - rho^2))`
    pub fn rate_rho(&self, x: f64) -> f64 {
        x * x / self.rho_denom
    }
}

/// All limit quantities for a stable model.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSet {
    pub xi: DVector<f64>,
    pub t: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    pub l: DMatrix<f64>,
    /// `||I_2 ⊗ L||_2 = ||L||_2`
    pub sigma_norm: f64,
    pub asymp_cov: DMatrix<f64>,
    pub abar: f64,
    pub a2bar: f64,
    pub abar_matrix: DMatrix<f64>,
    pub fixed_point: FixedPointReport,
    pub rates: RateCoeffs,
}

impl LimitSet {
    pub fn compute(model: &BarModel, noise: &NoiseModel) -> Result<Self> {
        if !model.is_contracting() {
            return Err(Error::Unstable { beta: model.beta(), norm: model.norm().name() });
        }
        let xi = xi_vector(model)?;
        let t = t_matrix(model, noise.sigma2(), &xi);
        let (lambda, fixed_point) = lambda_fixed_point(model, &t)?;
        let l = l_matrix(&xi, &lambda)?;
        let asymp_cov = asymp_cov(noise, &l)?;
        let rates = RateCoeffs::new(noise, &l)?;
        Ok(LimitSet {
            sigma_norm: spectral_norm(&l),
            abar: model.abar(),
            a2bar: model.a2bar(),
            abar_matrix: model.abar_matrix(),
            xi,
            t,
            lambda,
            l,
            asymp_cov,
            fixed_point,
            rates,
        })
    }
}

/// Serializable snapshot of a [`LimitSet`]; matrices are row-major nested vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSummary {
    pub xi: Vec<f64>,
    pub t: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub l: Vec<Vec<f64>>,
    pub sigma_norm: f64,
    pub asymp_cov: Vec<Vec<f64>>,
    pub abar: f64,
    pub a2bar: f64,
    pub abar_matrix: Vec<Vec<f64>>,
    pub theta_quadratic: Vec<Vec<f64>>,
    pub m_quadratic: Vec<Vec<f64>>,
    pub sigma2_denom: f64,
    pub rho_denom: f64,
    pub fixed_point_iterations: usize,
    pub fixed_point_residual: f64,
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

impl LimitSet {
    pub fn summary(&self) -> LimitSummary {
        LimitSummary {
            xi: self.xi.iter().cloned().collect(),
            t: rows(&self.t),
            lambda: rows(&self.lambda),
            l: rows(&self.l),
            sigma_norm: self.sigma_norm,
            asymp_cov: rows(&self.asymp_cov),
            abar: self.abar,
            a2bar: self.a2bar,
            abar_matrix: rows(&self.abar_matrix),
            theta_quadratic: rows(&self.rates.theta_quadratic),
            m_quadratic: rows(&self.rates.m_quadratic),
            sigma2_denom: self.rates.sigma2_denom,
            rho_denom: self.rates.rho_denom,
            fixed_point_iterations: self.fixed_point.iterations,
            fixed_point_residual: self.fixed_point.residual,
        }
    }
}
