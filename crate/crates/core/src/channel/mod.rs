//! Gauss-Markov fading gain, its SNR process and the laws derived from it.
//!
//! The complex gain follows `g' = (1-α) g + α w` with `w` circular Gaussian
//! whose real and imaginary parts are each `N(0, 1)`. The SNR is `K |g|²`;
//! in steady state it is exponential with mean `2Kα/(2-α)`.

mod grid;
mod kernel;
mod quantize;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub use grid::{GridSpec, SnrGrid};
pub use kernel::{transition_pdf, KernelColumn, LagKernel};
pub use quantize::{lloyd_max_quantize, quantized_transition_matrix, QuantizedChannel};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    alpha: f64,
    scale: f64,
    symbols_per_packet: u32,
}

impl ChannelParams {
    /// `alpha` must lie in `(0, 1]`: at zero the lag kernel is a point mass.
    pub fn new(alpha: f64, scale: f64, symbols_per_packet: u32) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::config(
                "alpha",
                format!("{alpha} is outside (0, 1]; alpha = 0 makes the transition kernel degenerate"),
            ));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::config("K", format!("{scale} must be positive and finite")));
        }
        if symbols_per_packet == 0 {
            return Err(Error::config("p", "symbols per packet must be at least 1"));
        }
        Ok(Self {
            alpha,
            scale,
            symbols_per_packet,
        })
    }

    /// Derives `K = mean (2-α) / (2α)` from a mean SNR given in dB.
    pub fn from_mean_snr_db(mean_snr_db: f64, alpha: f64, symbols_per_packet: u32) -> Result<Self> {
        if !mean_snr_db.is_finite() {
            return Err(Error::config("mean_snr_db", "must be finite"));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Self::new(alpha, 1.0, symbols_per_packet);
        }
        let mean = db_to_linear(mean_snr_db);
        Self::new(alpha, mean * (2.0 - alpha) / (2.0 * alpha), symbols_per_packet)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The SNR scale `K`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn symbols_per_packet(&self) -> u32 {
        self.symbols_per_packet
    }

    /// Steady-state mean SNR, `2Kα/(2-α)`.
    pub fn mean_snr(&self) -> f64 {
        2.0 * self.scale * self.alpha / (2.0 - self.alpha)
    }

    /// `(1-α)^lag`, computed without underflow surprises for tiny `α`.
    pub fn memory(&self, lag: u64) -> f64 {
        (lag as f64 * (-self.alpha).ln_1p()).exp()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainState {
    pub gain: Complex64,
    pub index: i64,
}

impl GainState {
    pub fn new(gain: Complex64, index: i64) -> Self {
        Self { gain, index }
    }
}

/// One step of the first-order recursion.
pub fn step_gain(state: GainState, params: &ChannelParams, noise: Complex64) -> GainState {
    let a = params.alpha;
    GainState {
        gain: state.gain * (1.0 - a) + noise * a,
        index: state.index + 1,
    }
}

pub fn snr_of_gain(state: &GainState, params: &ChannelParams) -> f64 {
    params.scale * state.gain.norm_sqr()
}

/// Circular Gaussian draw with unit-variance real and imaginary parts.
pub fn complex_noise<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn steady_state_pdf(snr: f64, params: &ChannelParams) -> f64 {
    if snr < 0.0 {
        return 0.0;
    }
    let mean = params.mean_snr();
    (-snr / mean).exp() / mean
}

/// Steady-state CDF, `1 - exp(-snr/mean)`.
pub fn steady_state_cdf(snr: f64, params: &ChannelParams) -> f64 {
    if snr <= 0.0 {
        return 0.0;
    }
    -(-snr / params.mean_snr()).exp_m1()
}

/// Generates an SNR trace by iterating the gain recursion.
#[derive(Debug, Clone)]
pub struct GainProcess {
    params: ChannelParams,
    state: GainState,
}

impl GainProcess {
    /// Starts from `g = 0` at index `start_index`.
    pub fn new(params: ChannelParams, start_index: i64) -> Self {
        Self {
            params,
            state: GainState::new(Complex64::new(0.0, 0.0), start_index),
        }
    }

    pub fn state(&self) -> GainState {
        self.state
    }

    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        self.state = step_gain(self.state, &self.params, complex_noise(rng));
        snr_of_gain(&self.state, &self.params)
    }

    pub fn snr(&self) -> f64 {
        snr_of_gain(&self.state, &self.params)
    }
}
