//! BAR(p) parameterization, noise families and forward simulation.

mod noise;
mod quadrature;
mod simulate;
pub mod tree_io;

pub use noise::{NoiseFamily, NoiseModel, DEFAULT_BOUND, DEFAULT_SKEW};
pub use simulate::{simulate, simulate_with, InitSpec, SimulateOptions, SimulatedTree};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// How the contraction constant `beta = max(||A||, ||B||)` is measured.
///
/// `MeanSquare` is not a matrix norm: it is the square root of the spectral
/// radius of `X -> (A X A^t + B X B^t) / 2`, the map driving the second-moment
/// limit. Companion matrices of order `p >= 2` always have induced 2-norm (and
/// Frobenius norm) at least 1, so only this reading can certify contraction
/// for higher-order models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractionNorm {
    #[default]
    Spectral,
    Frobenius,
    MeanSquare,
}

impl ContractionNorm {
    pub fn name(self) -> &'static str {
        match self {
            ContractionNorm::Spectral => "spectral",
            ContractionNorm::Frobenius => "frobenius",
            ContractionNorm::MeanSquare => "mean_square",
        }
    }
}

/// Order `p`, coefficient vectors and derived companion matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct BarModel {
    p: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    comp_a: DMatrix<f64>,
    comp_b: DMatrix<f64>,
    beta: f64,
    norm: ContractionNorm,
}

/// `p x p` companion matrix with first row `coeffs[1..=p]` and ones on the subdiagonal.
pub fn companion(coeffs: &[f64]) -> DMatrix<f64> {
    let p = coeffs.len() - 1;
    let mut m = DMatrix::zeros(p, p);
    for j in 0..p {
        m[(0, j)] = coeffs[j + 1];
    }
    for i in 1..p {
        m[(i, i - 1)] = 1.0;
    }
    m
}

impl BarModel {
    /// Spectral-norm model; rejects `beta >= 1`.
    pub fn new(p: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        Self::build(p, a, b, ContractionNorm::Spectral, false)
    }

    pub fn build(p: usize, a: Vec<f64>, b: Vec<f64>, norm: ContractionNorm, allow_nonstable: bool) -> Result<Self> {
        if p == 0 {
            return Err(Error::DimensionMismatch("model order p must be at least 1".into()));
        }
        if a.len() != p + 1 || b.len() != p + 1 {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coefficients per offspring, got a: {}, b: {}",
                p + 1,
                a.len(),
                b.len()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("coefficients must be finite".into()));
        }
        let comp_a = companion(&a);
        let comp_b = companion(&b);
        let beta = contraction_constant(&comp_a, &comp_b, norm);
        if !(beta < 1.0) && !allow_nonstable {
            return Err(Error::Unstable { beta, norm: norm.name() });
        }
        Ok(BarModel { p, a, b, comp_a, comp_b, beta, norm })
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    /// `(a_0, ..., a_p)`
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// `(b_0, ..., b_p)`
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn companion_a(&self) -> &DMatrix<f64> {
        &self.comp_a
    }

    pub fn companion_b(&self) -> &DMatrix<f64> {
        &self.comp_b
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn norm(&self) -> ContractionNorm {
        self.norm
    }

    pub fn is_contracting(&self) -> bool {
        self.beta < 1.0
    }

    /// `beta` re-measured under another reading.
    pub fn beta_under(&self, norm: ContractionNorm) -> f64 {
        contraction_constant(&self.comp_a, &self.comp_b, norm)
    }

    /// `vec(theta) = (a_0, ..., a_p, b_0, ..., b_p)`.
    pub fn theta(&self) -> DVector<f64> {
        DVector::from_iterator(2 * (self.p + 1), self.a.iter().chain(self.b.iter()).cloned())
    }

    /// `(p+1) x 2` parameter matrix, columns `a` and `b`.
    pub fn theta_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.p + 1, 2);
        for i in 0..=self.p {
            m[(i, 0)] = self.a[i];
            m[(i, 1)] = self.b[i];
        }
        m
    }

    /// `(a_0 + b_0) / 2`
    pub fn abar(&self) -> f64 {
        0.5 * (self.a[0] + self.b[0])
    }

    /// `(a_0^2 + b_0^2) / 2`
    pub fn a2bar(&self) -> f64 {
        0.5 * (self.a[0] * self.a[0] + self.b[0] * self.b[0])
    }

    /// `(A + B) / 2`
    pub fn abar_matrix(&self) -> DMatrix<f64> {
        (&self.comp_a + &self.comp_b) * 0.5
    }
}

fn contraction_constant(a: &DMatrix<f64>, b: &DMatrix<f64>, norm: ContractionNorm) -> f64 {
    match norm {
        ContractionNorm::Spectral => linalg::spectral_norm(a).max(linalg::spectral_norm(b)),
        ContractionNorm::Frobenius => linalg::frobenius_norm(a).max(linalg::frobenius_norm(b)),
        ContractionNorm::MeanSquare => {
            let op = (a.kronecker(a) + b.kronecker(b)) * 0.5;
            linalg::spectral_radius(&op).sqrt()
        }
    }
}
