//! Special functions, Gauss rules and compensated summation.

use nalgebra::{DMatrix, SymmetricEigen};
use std::f64::consts::PI;

pub use statrs::function::gamma::{gamma, ln_gamma};

/// Neumaier compensated sum, evaluated in iteration order.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Pairwise sum of a slice. Deterministic for a fixed slice length.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        return neumaier_sum(values.iter().copied());
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.into_iter()
        .zip(w)
        .map(move |(xi, wi)| (mid + half * xi, half * wi))
}

/// Generalized Gauss–Laguerre rule for the weight `s^a e^{-s}` on `(0, ∞)`,
/// `a > -1`, built by Golub–Welsch. Weights are normalized to sum to one,
/// i.e. they integrate against `s^a e^{-s} / Γ(a+1)`.
pub fn gauss_laguerre_normalized(n: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1 && a > -1.0);
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        jacobi[(k, k)] = 2.0 * k as f64 + a + 1.0;
        if k + 1 < n {
            let kf = (k + 1) as f64;
            let off = (kf * (kf + a)).sqrt();
            jacobi[(k, k + 1)] = off;
            jacobi[(k + 1, k)] = off;
        }
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    pairs.into_iter().unzip()
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    statrs::function::beta::beta_reg(a, b, x.clamp(0.0, 1.0))
}

/// Volume of the unit ball in dimension `n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    let nf = n as f64;
    PI.powf(nf / 2.0) / gamma(nf / 2.0 + 1.0)
}

/// Surface area of the unit sphere `S^{n-1}`.
pub fn unit_sphere_area(n: usize) -> f64 {
    nf_sphere(n as f64)
}

fn nf_sphere(nf: f64) -> f64 {
    2.0 * PI.powf(nf / 2.0) / gamma(nf / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials() {
        let integral: f64 = gauss_legendre_on(5, 0.0, 2.0).map(|(x, w)| w * x.powi(9)).sum();
        assert_relative_eq!(integral, 2f64.powi(10) / 10.0, max_relative = 1e-13);
    }

    #[test]
    fn laguerre_matches_gamma_moments() {
        let a = -0.75;
        let (x, w) = gauss_laguerre_normalized(40, a);
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
        // E[s^2] under s^a e^{-s}/Γ(a+1) is (a+1)(a+2)
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        assert_relative_eq!(m2, (a + 1.0) * (a + 2.0), max_relative = 1e-10);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(neumaier_sum(v), 2.0);
        let many: Vec<f64> = (0..1000).map(|i| 0.1 * i as f64).collect();
        assert_relative_eq!(pairwise_sum(&many), 49950.0, max_relative = 1e-14);
    }

    #[test]
    fn ball_volumes() {
        assert_relative_eq!(unit_ball_volume(1), 2.0, max_relative = 1e-14);
        assert_relative_eq!(unit_ball_volume(2), PI, max_relative = 1e-14);
        assert_relative_eq!(unit_sphere_area(2), 2.0 * PI, max_relative = 1e-14);
    }
}
