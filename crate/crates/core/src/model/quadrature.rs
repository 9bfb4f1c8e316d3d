//! Composite Simpson rules used to calibrate the non-Gaussian noise pairs.

use statrs::function::erf::erfc;

pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub(crate) fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Nodes and weights of the composite Simpson rule on `[lo, hi]` with an even
/// number of intervals.
pub(crate) fn simpson_nodes(lo: f64, hi: f64, intervals: usize) -> (Vec<f64>, Vec<f64>) {
    let m = intervals + intervals % 2;
    let h = (hi - lo) / m as f64;
    let mut nodes = Vec::with_capacity(m + 1);
    let mut weights = Vec::with_capacity(m + 1);
    for i in 0..=m {
        nodes.push(lo + h * i as f64);
        let w = if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        weights.push(w * h / 3.0);
    }
    (nodes, weights)
}

/// Integrates `g(z1, z2)` against the standard bivariate normal density with
/// correlation `r`, restricted to the grid box. Returns `(∫ g φ, ∫ φ)`.
pub(crate) fn bivariate_normal_moment<G>(nodes: &[f64], weights: &[f64], r: f64, mut g: G) -> (f64, f64)
where
    G: FnMut(usize, usize) -> f64,
{
    let one_minus = 1.0 - r * r;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * one_minus.sqrt());
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (&z1, &w1)) in nodes.iter().zip(weights).enumerate() {
        for (j, (&z2, &w2)) in nodes.iter().zip(weights).enumerate() {
            let q = (z1 * z1 - 2.0 * r * z1 * z2 + z2 * z2) / (2.0 * one_minus);
            if q > 700.0 {
                continue;
            }
            let d = norm * (-q).exp() * w1 * w2;
            num += g(i, j) * d;
            den += d;
        }
    }
    (num, den)
}

/// Bisection for an increasing function on `[lo, hi]`.
pub(crate) fn bisect_increasing<F: FnMut(f64) -> f64>(
    mut f: F,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    iters: usize,
) -> f64 {
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_moments_on_wide_box() {
        let (z, w) = simpson_nodes(-9.0, 9.0, 300);
        let r = 0.4;
        let (m, d) = bivariate_normal_moment(&z, &w, r, |i, j| z[i] * z[j]);
        assert_relative_eq!(d, 1.0, epsilon = 1e-9);
        assert_relative_eq!(m, r, epsilon = 1e-9);
        let (m4, _) = bivariate_normal_moment(&z, &w, r, |i, j| z[i].powi(2) * z[j].powi(2));
        assert_relative_eq!(m4, 1.0 + 2.0 * r * r, epsilon = 1e-8);
    }

    #[test]
    fn cdf_values() {
        assert_relative_eq!(std_normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(std_normal_cdf(1.959963984540054), 0.975, epsilon = 1e-10);
    }
}
