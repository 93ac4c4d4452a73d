//! Small collection of Gaussian special functions.

use crate::scalar::Scalar;

/// Standard normal density.
pub fn normal_pdf<F: Scalar>(x: F) -> F {
    let inv_sqrt_2pi = F::cast(0.3989422804014327);
    inv_sqrt_2pi * (-x * x / F::cast(2.0)).exp()
}

/// Standard normal CDF, `P(Z <= x)`.
pub fn normal_cdf<F: Scalar>(x: F) -> F {
    let half = F::cast(0.5);
    half * (-x / F::cast(std::f64::consts::SQRT_2)).erfc()
}

/// Standard normal survival function, `P(Z > x)`.
pub fn normal_sf<F: Scalar>(x: F) -> F {
    normal_cdf(-x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_matches_erf_identities() {
        assert!((normal_cdf(0.0f64) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054f64) - 0.975).abs() < 1e-9);
        assert!((normal_sf(3.0f64) - 1.349898031630095e-3).abs() < 1e-12);
    }

    #[test]
    fn pdf_normalisation() {
        // Riemann sum sanity check.
        let n = 20_000;
        let h = 20.0 / n as f64;
        let total: f64 = (0..n)
            .map(|i| normal_pdf(-10.0 + (i as f64 + 0.5) * h) * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
    }
}
