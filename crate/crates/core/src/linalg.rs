//! Small dense helpers on top of `nalgebra`: norms, a compensated
//! accumulator, and an SPD solve with one refinement step.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = m.transpose() * m;
    let eig = gram.symmetric_eigenvalues();
    eig.iter().cloned().fold(0.0, f64::max).max(0.0).sqrt()
}

pub fn frobenius_norm(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// 2-norm condition number of a symmetric positive semi-definite matrix.
/// Returns `inf` when the smallest eigenvalue is not positive.
pub fn spd_condition(m: &DMatrix<f64>) -> f64 {
    let eig = m.symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Cholesky solve of `S x = rhs` followed by one step of iterative refinement.
pub fn spd_solve_refined(s: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let chol =
        Cholesky::new(s.clone()).ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    let mut x = chol.solve(rhs);
    let r = rhs - s * &x;
    x += chol.solve(&r);
    Ok(x)
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// A vector of independent compensated accumulators.
#[derive(Debug, Clone)]
pub struct CompensatedVec(Vec<CompensatedSum>);

impl CompensatedVec {
    pub fn zeros(n: usize) -> Self {
        CompensatedVec(vec![CompensatedSum::default(); n])
    }

    #[inline]
    pub fn add(&mut self, i: usize, v: f64) {
        self.0[i].add(v);
    }

    pub fn values(&self) -> Vec<f64> {
        self.0.iter().map(CompensatedSum::value).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spectral_norm_diag() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -4.0]);
        assert_relative_eq!(spectral_norm(&m), 4.0, epsilon = 1e-12);
        assert_relative_eq!(frobenius_norm(&m), 5.0, epsilon = 1e-12);
        assert_relative_eq!(spectral_radius(&m), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut acc = CompensatedSum::default();
        acc.add(1.0);
        for _ in 0..10 {
            acc.add(1e-16);
        }
        acc.add(-1.0);
        assert_relative_eq!(acc.value(), 1e-15, max_relative = 1e-10);
    }

    #[test]
    fn refined_solve() {
        let s = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let rhs = DVector::from_vec(vec![1.0, 2.0]);
        let x = spd_solve_refined(&s, &rhs).unwrap();
        assert!((&s * &x - &rhs).norm() < 1e-14);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(spd_solve_refined(&bad, &rhs).is_err());
        assert!(spd_condition(&bad).is_infinite());
    }
}
