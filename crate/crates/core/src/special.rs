//! Scalar special functions used by the channel and PHY models.

use std::f64::consts::{PI, SQRT_2};

/// Crossover between the power series and the large-argument expansion of I₀.
const SERIES_LIMIT: f64 = 20.0;

/// `ln(I₀(x)) - x`, the log of the exponentially scaled Bessel function.
///
/// Finite for every finite `x ≥ 0`, so kernels built from it never overflow.
pub fn ln_i0e(x: f64) -> f64 {
    let x = x.abs();
    if x < SERIES_LIMIT {
        // Σ (x²/4)^k / (k!)²
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > sum * 1e-17 {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum.ln() - x
    } else {
        // e^x / sqrt(2πx) · Σ a_k / x^k, a_k = a_{k-1} (2k-1)² / (8k).
        // At x = 20 the k = 2 term alone is 1.8e-4, so the sum is carried
        // until terms stop mattering.
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..30 {
            let kf = k as f64;
            let next = term * (2.0 * kf - 1.0).powi(2) / (8.0 * kf * x);
            if next >= term || next < sum * 1e-17 {
                break;
            }
            term = next;
            sum += term;
        }
        sum.ln() - 0.5 * (2.0 * PI * x).ln()
    }
}

/// `ln(I₀(x))`.
pub fn ln_i0(x: f64) -> f64 {
    ln_i0e(x) + x.abs()
}

/// Standard Gaussian tail probability `Q(x) = P(N(0,1) > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// `ln C(n, k)` via log-gamma.
pub fn ln_binomial(n: u32, k: u32) -> f64 {
    debug_assert!(k <= n);
    if k == 0 || k == n {
        return 0.0;
    }
    let (n, k) = (n as f64, k as f64);
    libm::lgamma(n + 1.0) - libm::lgamma(k + 1.0) - libm::lgamma(n - k + 1.0)
}
