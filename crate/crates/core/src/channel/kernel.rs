use super::{ChannelParams, SnrGrid};
use crate::error::{Error, Result};
use crate::special::ln_i0e;

/// Columns are cut where the log-density falls this far below its peak.
const TRUNCATION_NATS: f64 = 80.0;

/// Closed-form density of `γ_t` given `γ_{t-lag}`.
///
/// With `ρ = (1-α)^lag` and `c = mean · (1 - ρ²)`:
/// `p(γ | γ') = (1/c) exp(-(γ + ρ²γ')/c) I₀(2ρ √(γγ') / c)`.
/// Everything is evaluated in the log domain using the scaled Bessel
/// function, so the exponent becomes `-(√γ - ρ√γ')² / c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagKernel {
    lag: u64,
    rho: f64,
    rho_sq: f64,
    spread: f64,
    ln_spread: f64,
}

impl LagKernel {
    pub fn new(params: &ChannelParams, lag: u64) -> Result<Self> {
        if lag == 0 {
            return Err(Error::Domain("transition lag must be at least 1".into()));
        }
        let ln_one_minus_alpha = (-params.alpha()).ln_1p();
        let rho = (lag as f64 * ln_one_minus_alpha).exp();
        let rho_sq = (2.0 * lag as f64 * ln_one_minus_alpha).exp();
        let one_minus_rho_sq = -(2.0 * lag as f64 * ln_one_minus_alpha).exp_m1();
        let spread = params.mean_snr() * one_minus_rho_sq;
        Ok(Self {
            lag,
            rho,
            rho_sq,
            spread,
            ln_spread: spread.ln(),
        })
    }

    pub fn lag(&self) -> u64 {
        self.lag
    }

    /// `(1-α)^lag`.
    pub fn memory(&self) -> f64 {
        self.rho
    }

    /// Exponential scale `c` of the kernel.
    pub fn spread(&self) -> f64 {
        self.spread
    }

    /// Conditional mean `c + ρ² γ'`.
    pub fn conditional_mean(&self, snr_past: f64) -> f64 {
        self.spread + self.rho_sq * snr_past
    }

    /// Conditional standard deviation, `sqrt(c² + 2cρ²γ')`.
    pub fn conditional_std(&self, snr_past: f64) -> f64 {
        (self.spread * self.spread + 2.0 * self.spread * self.rho_sq * snr_past).sqrt()
    }

    pub fn ln_pdf(&self, snr_now: f64, snr_past: f64) -> f64 {
        let (a, b) = (snr_now.sqrt(), self.rho * snr_past.sqrt());
        let bessel_arg = 2.0 * a * b / self.spread;
        let d = a - b;
        -self.ln_spread - d * d / self.spread + ln_i0e(bessel_arg)
    }

    pub fn pdf(&self, snr_now: f64, snr_past: f64) -> f64 {
        self.ln_pdf(snr_now, snr_past).exp()
    }

    /// Density of `γ` on the grid for a fixed past SNR, truncated to the
    /// contiguous range where it is within `e^-80` of its peak.
    pub fn column(&self, grid: &SnrGrid, snr_past: f64) -> KernelColumn {
        self.column_on(grid.points(), snr_past)
    }

    /// [`column`](Self::column) on any increasing set of points.
    pub fn column_on(&self, pts: &[f64], snr_past: f64) -> KernelColumn {
        let n = pts.len();
        // the mode never exceeds the mean for this family
        let start = pts
            .partition_point(|&g| g < self.conditional_mean(snr_past))
            .min(n - 1);
        let mut ln_vals_down = Vec::new();
        let mut peak = f64::NEG_INFINITY;
        let mut i = start as isize;
        while i >= 0 {
            let v = self.ln_pdf(pts[i as usize], snr_past);
            peak = peak.max(v);
            if v < peak - TRUNCATION_NATS {
                break;
            }
            ln_vals_down.push(v);
            i -= 1;
        }
        let lo = (i + 1) as usize;
        let mut ln_vals = ln_vals_down;
        ln_vals.reverse();
        let mut j = start + 1;
        while j < n {
            let v = self.ln_pdf(pts[j], snr_past);
            peak = peak.max(v);
            if v < peak - TRUNCATION_NATS {
                break;
            }
            ln_vals.push(v);
            j += 1;
        }
        KernelColumn {
            start: lo,
            values: ln_vals.into_iter().map(f64::exp).collect(),
        }
    }
}

/// Contiguous slice of a kernel density sampled on grid indices
/// `start..start + values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelColumn {
    pub start: usize,
    pub values: Vec<f64>,
}

impl KernelColumn {
    pub fn end(&self) -> usize {
        self.start + self.values.len()
    }

    /// Quadrature of `f · kernel` over the grid.
    pub fn integrate_against(&self, grid: &SnrGrid, f: &[f64]) -> f64 {
        let w = &grid.weights()[self.start..self.end()];
        let f = &f[self.start..self.end()];
        self.values
            .iter()
            .zip(w)
            .zip(f)
            .map(|((k, w), f)| k * w * f)
            .sum()
    }
}

/// `p(γ_t = snr_now | γ_{t-lag} = snr_past)`.
pub fn transition_pdf(snr_now: f64, snr_past: f64, params: &ChannelParams, lag: u64) -> Result<f64> {
    if snr_now < 0.0 || snr_past < 0.0 {
        return Err(Error::Domain("SNR values must be nonnegative".into()));
    }
    Ok(LagKernel::new(params, lag)?.pdf(snr_now, snr_past))
}
