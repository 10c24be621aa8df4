//! Uncoded square-QAM error model and goodput curves.

use crate::channel::SnrGrid;
use crate::error::{Error, Result};
use crate::special::q_function;

/// Symbol error probability of square `m`-QAM with minimum-distance
/// detection at symbol SNR `snr`.
pub fn symbol_error_rate(m: u32, snr: f64) -> f64 {
    let s = per_dimension_error(m as f64, snr);
    -(2.0 * (-s).ln_1p()).exp_m1()
}

/// Error probability of one PAM dimension, `2 (1 - 1/√m) Q(√(3γ/(m-1)))`.
fn per_dimension_error(m: f64, snr: f64) -> f64 {
    2.0 * (1.0 - 1.0 / m.sqrt()) * q_function((3.0 * snr.max(0.0) / (m - 1.0)).sqrt())
}

/// `ln(1 - ε)` for a packet of `symbols` symbols.
fn ln_packet_success(m: f64, symbols: u32, snr: f64) -> f64 {
    2.0 * symbols as f64 * (-per_dimension_error(m, snr)).ln_1p()
}

/// Constellation size carried by `rate` bits over `symbols` symbols, if it
/// is a perfect square of at least 4.
pub fn constellation_for_rate(rate: f64, symbols: u32) -> Result<u32> {
    let m = (rate / symbols as f64).exp2();
    let side = m.sqrt().round();
    if !(side >= 2.0) || ((side * side) / m - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidRate(rate));
    }
    Ok((side * side) as u32)
}

/// Packet error rate of `rate` bits/packet at `snr`.
pub fn packet_error_rate(rate: f64, snr: f64, symbols: u32) -> Result<f64> {
    let m = constellation_for_rate(rate, symbols)?;
    Ok(-ln_packet_success(m as f64, symbols, snr).exp_m1())
}

/// Expected successfully delivered bits per packet, `(1 - ε) r`.
pub fn goodput(rate: f64, snr: f64, symbols: u32) -> Result<f64> {
    let m = constellation_for_rate(rate, symbols)?;
    Ok(ln_packet_success(m as f64, symbols, snr).exp() * rate)
}

/// The SNR at which `rate` has packet error rate `eps`.
pub fn invert_error_rate(rate: f64, eps: f64, symbols: u32) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("error rate {eps} is outside (0, 1)")));
    }
    let per = |g: f64| packet_error_rate(rate, g, symbols);
    if per(0.0)? < eps {
        return Err(Error::Domain(format!(
            "error rate {eps} exceeds the zero-SNR error rate of rate {rate}"
        )));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while per(hi)? > eps {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Domain(format!("error rate {eps} is not reachable")));
        }
    }
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if per(mid)? > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Admissible rates, one per square constellation, in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSet {
    constellations: Vec<u32>,
    rates: Vec<f64>,
    symbols: u32,
}

impl RateSet {
    pub fn new(constellations: Vec<u32>, symbols: u32) -> Result<Self> {
        if constellations.is_empty() {
            return Err(Error::config("max_constellation", "rate set is empty"));
        }
        for &m in &constellations {
            let side = (m as f64).sqrt().round() as u32;
            if m < 4 || side * side != m {
                return Err(Error::config("max_constellation", format!("{m} is not a square >= 4")));
            }
        }
        if !constellations.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config("max_constellation", "constellations must increase"));
        }
        let rates = constellations
            .iter()
            .map(|&m| symbols as f64 * (m as f64).log2())
            .collect();
        Ok(Self {
            constellations,
            rates,
            symbols,
        })
    }

    /// `m = k²` for `k = 2..=max_side`.
    pub fn squares(max_side: u32, symbols: u32) -> Result<Self> {
        Self::new((2..=max_side).map(|k| k * k).collect(), symbols)
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn rate(&self, index: usize) -> f64 {
        self.rates[index]
    }

    pub fn constellation(&self, index: usize) -> u32 {
        self.constellations[index]
    }

    pub fn constellations(&self) -> &[u32] {
        &self.constellations
    }

    pub fn symbols_per_packet(&self) -> u32 {
        self.symbols
    }

    pub fn index_of(&self, rate: f64) -> Result<usize> {
        self.rates
            .iter()
            .position(|&r| (r - rate).abs() <= 1e-9 * rate)
            .ok_or(Error::InvalidRate(rate))
    }

    pub fn error_rate(&self, index: usize, snr: f64) -> f64 {
        -ln_packet_success(self.constellations[index] as f64, self.symbols, snr).exp_m1()
    }

    pub fn goodput(&self, index: usize, snr: f64) -> f64 {
        ln_packet_success(self.constellations[index] as f64, self.symbols, snr).exp() * self.rates[index]
    }
}

/// Error-rate and goodput curves of every rate sampled on the SNR grid.
#[derive(Debug, Clone)]
pub struct GoodputTable {
    rates: RateSet,
    /// `ln ε(r, γ_i)`
    ln_error: Vec<Vec<f64>>,
    /// `ln (1 - ε(r, γ_i))`
    ln_success: Vec<Vec<f64>>,
    goodput: Vec<Vec<f64>>,
}

impl GoodputTable {
    pub fn new(rates: RateSet, grid: &SnrGrid) -> Self {
        let mut ln_error = Vec::with_capacity(rates.len());
        let mut ln_success = Vec::with_capacity(rates.len());
        let mut goodput = Vec::with_capacity(rates.len());
        for (k, &m) in rates.constellations.iter().enumerate() {
            let ok: Vec<f64> = grid
                .points()
                .iter()
                .map(|&g| ln_packet_success(m as f64, rates.symbols, g))
                .collect();
            ln_error.push(ok.iter().map(|&l| (-l.exp_m1()).ln()).collect());
            goodput.push(ok.iter().map(|&l| l.exp() * rates.rates[k]).collect());
            ln_success.push(ok);
        }
        Self {
            rates,
            ln_error,
            ln_success,
            goodput,
        }
    }

    pub fn rate_set(&self) -> &RateSet {
        &self.rates
    }

    pub fn ln_error(&self, rate_index: usize) -> &[f64] {
        &self.ln_error[rate_index]
    }

    pub fn ln_success(&self, rate_index: usize) -> &[f64] {
        &self.ln_success[rate_index]
    }

    pub fn goodput(&self, rate_index: usize) -> &[f64] {
        &self.goodput[rate_index]
    }

    pub fn error_rate(&self, rate_index: usize, grid_index: usize) -> f64 {
        self.ln_error[rate_index][grid_index].exp()
    }
}

/// Index of the first maximum; ties resolve to the smaller rate.
pub fn argmax_first(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Rate index maximizing instantaneous goodput at a known SNR.
pub fn best_rate_at_snr(rates: &RateSet, snr: f64) -> usize {
    argmax_first((0..rates.len()).map(|k| rates.goodput(k, snr)))
}
