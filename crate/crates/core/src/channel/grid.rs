use crate::error::{Error, Result};

/// Shape of the SNR discretization, relative to the steady-state mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub points: usize,
    pub lo_factor: f64,
    pub hi_factor: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 2000,
            lo_factor: 1e-6,
            hi_factor: 30.0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points < 16 {
            return Err(Error::config("grid_points", "need at least 16 grid points"));
        }
        if !(self.lo_factor > 0.0 && self.hi_factor > self.lo_factor) {
            return Err(Error::config(
                "grid_lo_factor",
                "grid span must satisfy 0 < lo_factor < hi_factor",
            ));
        }
        Ok(())
    }
}

/// Log-spaced SNR points with trapezoidal weights in `ln γ`.
///
/// The first weight also absorbs the interval `[0, γ₀]`, treating the
/// integrand as flat there, so densities on `[0, ∞)` integrate to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl SnrGrid {
    pub fn new(spec: &GridSpec, mean_snr: f64) -> Result<Self> {
        spec.validate()?;
        let lo = (mean_snr * spec.lo_factor).ln();
        let hi = (mean_snr * spec.hi_factor).ln();
        let n = spec.points;
        let h = (hi - lo) / (n - 1) as f64;
        let points: Vec<f64> = (0..n).map(|k| (lo + h * k as f64).exp()).collect();
        let mut weights: Vec<f64> = points.iter().map(|&g| g * h).collect();
        weights[0] *= 0.5;
        weights[n - 1] *= 0.5;
        weights[0] += points[0];
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn max(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// `Σ values[i] · w[i]`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.points.len());
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Index of the grid point closest to `snr` (in log distance).
    pub fn nearest(&self, snr: f64) -> usize {
        let i = self.points.partition_point(|&g| g < snr);
        if i == 0 {
            0
        } else if i == self.points.len() {
            i - 1
        } else if snr / self.points[i - 1] < self.points[i] / snr {
            i - 1
        } else {
            i
        }
    }
}
