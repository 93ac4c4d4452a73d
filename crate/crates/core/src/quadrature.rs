//! Gauss-Hermite and Gauss-Legendre rules, computed by Golub-Welsch on the
//! Jacobi recurrence matrix.

use crate::linalg::sym_eigen;
use crate::scalar::Scalar;
use ndarray::Array2;

/// Nodes and weights of the n-point Gauss-Hermite rule for weight `exp(-x^2)`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut j = Array2::<f64>::zeros((n, n));
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        j[[i - 1, i]] = b;
        j[[i, i - 1]] = b;
    }
    let (vals, vecs) = sym_eigen(&j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|c| {
            let w = std::f64::consts::PI.sqrt() * vecs[[0, c]] * vecs[[0, c]];
            (vals[c], w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Nodes and weights of the n-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut j = Array2::<f64>::zeros((n, n));
    for i in 1..n {
        let k = i as f64;
        let b = k / (4.0 * k * k - 1.0).sqrt();
        j[[i - 1, i]] = b;
        j[[i, i - 1]] = b;
    }
    let (vals, vecs) = sym_eigen(&j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|c| (vals[c], 2.0 * vecs[[0, c]] * vecs[[0, c]]))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// `E[f(Z)]` for standard normal `Z`, via an n-point Gauss-Hermite rule.
pub fn normal_expectation<F: Scalar>(n: usize, f: impl Fn(F) -> F) -> F {
    let (nodes, weights) = gauss_hermite(n);
    let scale = F::cast(std::f64::consts::SQRT_2);
    let norm = F::cast(1.0 / std::f64::consts::PI.sqrt());
    let mut acc = F::zero();
    for (x, w) in nodes.iter().zip(&weights) {
        acc += F::cast(*w) * f(scale * F::cast(*x));
    }
    acc * norm
}

/// Integral of `f` over `[a, b]` with an n-point Gauss-Legendre rule.
pub fn integrate_legendre<F: Scalar>(n: usize, a: F, b: F, f: impl Fn(F) -> F) -> F {
    let (nodes, weights) = gauss_legendre(n);
    let half = (b - a) / F::cast(2.0);
    let mid = (b + a) / F::cast(2.0);
    let mut acc = F::zero();
    for (x, w) in nodes.iter().zip(&weights) {
        acc += F::cast(*w) * f(mid + half * F::cast(*x));
    }
    acc * half
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_integrates_polynomials() {
        // E[Z^2] = 1, E[Z^4] = 3 under the standard normal.
        let m2: f64 = normal_expectation(24, |z: f64| z * z);
        let m4: f64 = normal_expectation(24, |z: f64| z * z * z * z);
        assert!((m2 - 1.0).abs() < 1e-12);
        assert!((m4 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn hermite_smooth_nonpolynomial() {
        // E[exp(Z)] = exp(1/2).
        let v: f64 = normal_expectation(48, |z: f64| z.exp());
        assert!((v - (0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn legendre_exact_on_cubics() {
        let v: f64 = integrate_legendre(4, 0.0, 2.0, |x: f64| x * x * x - x);
        assert!((v - (4.0 - 2.0)).abs() < 1e-13);
    }

    #[test]
    fn legendre_weights_sum_to_two() {
        let (_, w) = gauss_legendre(32);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-13);
    }
}
