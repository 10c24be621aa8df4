//! Monte Carlo checks of the closed-form channel laws against direct
//! simulation of the gain recursion.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{complex_noise, step_gain, steady_state_cdf, ChannelParams, GainProcess, GainState, LagKernel};
use crate::error::{Error, Result};

/// Pass threshold on the largest per-slice L1 distance.
pub const L1_THRESHOLD: f64 = 0.02;
const BINS: usize = 20;
const CDF_POINTS: usize = 20_000;
/// Steady-state quantiles of the conditioning SNR values.
const SLICE_QUANTILES: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Which density the samples are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelVariant {
    ClosedForm,
    /// The closed form with the Bessel factor removed; a negative control
    /// that must fail.
    WithoutBessel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceReport {
    pub past_snr: f64,
    pub samples: usize,
    pub l1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelReport {
    pub alpha: f64,
    pub lag: u64,
    pub slices: Vec<SliceReport>,
}

impl KernelReport {
    pub fn max_l1(&self) -> f64 {
        self.slices.iter().map(|s| s.l1).fold(0.0, f64::max)
    }

    pub fn transitions(&self) -> usize {
        self.slices.iter().map(|s| s.samples).sum()
    }

    pub fn passed(&self) -> bool {
        self.max_l1() < L1_THRESHOLD
    }
}

/// Equiprobable bin edges of the density `ln_pdf` on `[lo, hi]`.
fn equiprobable_edges(lo: f64, hi: f64, ln_pdf: impl Fn(f64) -> f64) -> Vec<f64> {
    let h = (hi - lo) / (CDF_POINTS - 1) as f64;
    let xs: Vec<f64> = (0..CDF_POINTS).map(|i| lo + h * i as f64).collect();
    let pdf: Vec<f64> = xs.iter().map(|&x| ln_pdf(x).exp()).collect();
    let mut cdf = vec![0.0; CDF_POINTS];
    for i in 1..CDF_POINTS {
        cdf[i] = cdf[i - 1] + 0.5 * h * (pdf[i] + pdf[i - 1]);
    }
    let total = cdf[CDF_POINTS - 1];
    (1..BINS)
        .map(|k| {
            let target = total * k as f64 / BINS as f64;
            let i = cdf.partition_point(|&c| c < target).clamp(1, CDF_POINTS - 1);
            let frac = (target - cdf[i - 1]) / (cdf[i] - cdf[i - 1]);
            xs[i - 1] + frac * h
        })
        .collect()
}

/// Simulates `transitions` lag-`lag` steps split over fixed conditioning
/// values and compares binned frequencies with the chosen density.
pub fn validate_kernel(
    params: &ChannelParams,
    lag: u64,
    transitions: usize,
    seed: u64,
    variant: KernelVariant,
) -> Result<KernelReport> {
    if transitions < SLICE_QUANTILES.len() * BINS {
        return Err(Error::config("transitions", "too few transitions to fill the bins"));
    }
    let kernel = LagKernel::new(params, lag)?;
    let mu = params.mean_snr();
    let per_slice = transitions / SLICE_QUANTILES.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slices = Vec::with_capacity(SLICE_QUANTILES.len());
    for q in SLICE_QUANTILES {
        let past = -mu * (-q).ln_1p();
        let mean = kernel.conditional_mean(past);
        let std = kernel.conditional_std(past);
        let (lo, hi) = ((mean - 14.0 * std).max(0.0), mean + 14.0 * std);
        let edges = match variant {
            KernelVariant::ClosedForm => equiprobable_edges(lo, hi, |x| kernel.ln_pdf(x, past)),
            KernelVariant::WithoutBessel => {
                let rho_sq = kernel.memory() * kernel.memory();
                let c = kernel.spread();
                equiprobable_edges(lo, hi, |x| -c.ln() - (x + rho_sq * past) / c)
            }
        };
        let start = GainState::new(Complex64::new((past / params.scale()).sqrt(), 0.0), 0);
        let mut counts = [0usize; BINS];
        for _ in 0..per_slice {
            let mut s = start;
            for _ in 0..lag {
                s = step_gain(s, params, complex_noise(&mut rng));
            }
            let snr = params.scale() * s.gain.norm_sqr();
            counts[edges.partition_point(|&e| e <= snr)] += 1;
        }
        let l1 = counts
            .iter()
            .map(|&c| (c as f64 / per_slice as f64 - 1.0 / BINS as f64).abs())
            .sum();
        slices.push(SliceReport {
            past_snr: past,
            samples: per_slice,
            l1,
        });
    }
    Ok(KernelReport {
        alpha: params.alpha(),
        lag,
        slices,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateReport {
    pub samples: usize,
    pub mean: f64,
    pub expected_mean: f64,
    pub ks: f64,
}

impl SteadyStateReport {
    pub fn mean_error(&self) -> f64 {
        (self.mean / self.expected_mean - 1.0).abs()
    }
}

/// Samples the SNR along one long chain, thinned so consecutive samples
/// have correlation below 1e-3, and compares with the exponential law.
pub fn validate_steady_state(params: &ChannelParams, samples: usize, seed: u64) -> Result<SteadyStateReport> {
    if samples == 0 {
        return Err(Error::config("samples", "must be at least 1"));
    }
    let alpha = params.alpha();
    let spacing = if alpha >= 1.0 {
        1
    } else {
        ((1e-3f64).ln() / (2.0 * (-alpha).ln_1p())).ceil() as usize
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut process = GainProcess::new(*params, 0);
    for _ in 0..50 * spacing {
        process.advance(&mut rng);
    }
    let mut xs = Vec::with_capacity(samples);
    for _ in 0..samples {
        for _ in 0..spacing {
            process.advance(&mut rng);
        }
        xs.push(process.snr());
    }
    let mean = xs.iter().sum::<f64>() / samples as f64;
    xs.sort_by(f64::total_cmp);
    let n = samples as f64;
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = steady_state_cdf(x, params);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    Ok(SteadyStateReport {
        samples,
        mean,
        expected_mean: params.mean_snr(),
        ks,
    })
}
