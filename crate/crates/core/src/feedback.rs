//! ACK/NAK generation, block aggregation and the observation likelihood.
//!
//! The likelihood depends only on the NAK count, the block size and the
//! candidate error probability; observations are conditionally independent
//! given the error rate, so nothing here takes a history.

use crate::error::{Error, Result};
use crate::special::ln_binomial;

/// One NAK-count observation for a packet (`n = 1`) or a block of packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedbackRecord {
    pub naks: u32,
    pub n: u32,
    /// Index into the rate set of the rate the packets were sent with.
    pub rate: usize,
    /// Packet or block index the observation refers to.
    pub index: i64,
}

impl FeedbackRecord {
    pub fn new(naks: u32, n: u32, rate: usize, index: i64) -> Result<Self> {
        if n == 0 || naks > n {
            return Err(Error::Domain(format!("{naks} NAKs out of {n} packets")));
        }
        Ok(Self { naks, n, rate, index })
    }

    /// The error-rate estimate `k / n`.
    pub fn value(&self) -> f64 {
        self.naks as f64 / self.n as f64
    }

    /// `ln P(k NAKs | ε)` given `ln ε` and `ln(1-ε)`.
    pub fn ln_likelihood(&self, ln_eps: f64, ln_one_minus_eps: f64) -> f64 {
        let k = self.naks;
        let rest = self.n - k;
        let mut l = ln_binomial(self.n, k);
        if k > 0 {
            l += k as f64 * ln_eps;
        }
        if rest > 0 {
            l += rest as f64 * ln_one_minus_eps;
        }
        l
    }
}

/// `true` is a NAK: the packet failed with probability `eps`.
pub fn draw_ack_nak(eps: f64, u: f64) -> bool {
    u < eps
}

/// Averages a block of NAK indicators into one record.
pub fn block_error_estimate(naks: &[bool], rate: usize, index: i64) -> Result<FeedbackRecord> {
    if naks.is_empty() {
        return Err(Error::Domain("empty ACK/NAK block".into()));
    }
    let k = naks.iter().filter(|&&nak| nak).count() as u32;
    FeedbackRecord::new(k, naks.len() as u32, rate, index)
}

/// Binomial probability of the record's NAK count under error rate `eps`.
pub fn block_likelihood(record: &FeedbackRecord, eps: f64) -> f64 {
    if record.n == 1 {
        return if record.naks == 1 { eps } else { 1.0 - eps };
    }
    record.ln_likelihood(eps.ln(), (-eps).ln_1p()).exp()
}
