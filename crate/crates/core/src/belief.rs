//! Grid-discretized SNR belief: Bayes updates from ACK/NAK counts, Markov
//! prediction through the lag kernel, and expected goodput.

use std::sync::Arc;

use log::warn;

use crate::channel::{steady_state_pdf, ChannelParams, KernelColumn, LagKernel, SnrGrid};
use crate::error::{Error, Result};
use crate::feedback::FeedbackRecord;
use crate::phy::{argmax_first, GoodputTable};

/// Normalizers below this mean the observation annihilated the belief.
const DEGENERATE_NORMALIZER: f64 = 1e-300;
/// Source points carrying less than this fraction of the largest point mass
/// are skipped during prediction.
const NEGLIGIBLE_MASS: f64 = 1e-18;
/// Densities this far below the peak are flushed to zero after an update.
const FLUSH_RATIO: f64 = 1e-250;

#[derive(Debug, Clone, PartialEq)]
pub struct SnrBelief {
    grid: Arc<SnrGrid>,
    density: Vec<f64>,
}

impl SnrBelief {
    /// The steady-state law, renormalized on the grid.
    pub fn prior(grid: &Arc<SnrGrid>, params: &ChannelParams) -> Self {
        let density = grid.points().iter().map(|&g| steady_state_pdf(g, params)).collect();
        Self::normalized(grid.clone(), density)
    }

    /// All mass on one grid point.
    pub fn point_mass(grid: &Arc<SnrGrid>, index: usize) -> Self {
        let mut density = vec![0.0; grid.len()];
        density[index] = 1.0 / grid.weights()[index];
        Self {
            grid: grid.clone(),
            density,
        }
    }

    /// Wraps raw nonnegative values and renormalizes them.
    pub fn from_density(grid: &Arc<SnrGrid>, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.len() {
            return Err(Error::Domain("density length differs from the grid".into()));
        }
        if density.iter().any(|&d| !(d >= 0.0)) {
            return Err(Error::Domain("density must be nonnegative".into()));
        }
        if grid.integrate(&density) <= 0.0 {
            return Err(Error::Domain("density has no mass".into()));
        }
        Ok(Self::normalized(grid.clone(), density))
    }

    fn normalized(grid: Arc<SnrGrid>, mut density: Vec<f64>) -> Self {
        let mut clipped = false;
        for d in density.iter_mut() {
            if *d < 0.0 {
                clipped |= *d < -1e-12;
                *d = 0.0;
            }
        }
        if clipped {
            warn!("clipped negative belief density below -1e-12");
        }
        let z = grid.integrate(&density);
        for d in density.iter_mut() {
            *d /= z;
        }
        Self { grid, density }
    }

    pub fn grid(&self) -> &Arc<SnrGrid> {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.density)
    }

    pub fn mean(&self) -> f64 {
        self.grid
            .points()
            .iter()
            .zip(&self.density)
            .zip(self.grid.weights())
            .map(|((g, d), w)| g * d * w)
            .sum()
    }

    /// Posterior after observing `record`, which was generated at
    /// `record.rate`. Returns [`Error::DegenerateUpdate`] when the
    /// normalizer underflows.
    pub fn bayes_update(&self, record: &FeedbackRecord, table: &GoodputTable) -> Result<Self> {
        let ln_err = table.ln_error(record.rate);
        let ln_ok = table.ln_success(record.rate);
        let ln_choose = crate::special::ln_binomial(record.n, record.naks);
        let (k, rest) = (record.naks as f64, (record.n - record.naks) as f64);
        let ln_lik: Vec<f64> = ln_err
            .iter()
            .zip(ln_ok)
            .map(|(&le, &lo)| {
                let mut l = ln_choose;
                if k > 0.0 {
                    l += k * le;
                }
                if rest > 0.0 {
                    l += rest * lo;
                }
                l
            })
            .collect();
        let peak = ln_lik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::DegenerateUpdate);
        }
        let mut post: Vec<f64> = ln_lik
            .iter()
            .zip(&self.density)
            .map(|(&l, &d)| (l - peak).exp() * d)
            .collect();
        let z = self.grid.integrate(&post);
        if !(z > 0.0) || peak + z.ln() < DEGENERATE_NORMALIZER.ln() {
            return Err(Error::DegenerateUpdate);
        }
        let top = post.iter().copied().fold(0.0, f64::max);
        for v in post.iter_mut() {
            *v = if *v < top * FLUSH_RATIO { 0.0 } else { *v / z };
        }
        Ok(Self {
            grid: self.grid.clone(),
            density: post,
        })
    }

    /// Pushes the belief forward through the kernel's lag.
    pub fn predict(&self, kernel: &PredictionKernel) -> Self {
        debug_assert_eq!(kernel.columns.len(), self.density.len());
        let w = self.grid.weights();
        let mass: Vec<f64> = self.density.iter().zip(w).map(|(d, w)| d * w).collect();
        let cutoff = mass.iter().copied().fold(0.0, f64::max) * NEGLIGIBLE_MASS;
        let mut out = vec![0.0; self.density.len()];
        for (col, &m) in kernel.columns.iter().zip(&mass) {
            if m <= cutoff {
                continue;
            }
            for (o, v) in out[col.start..col.end()].iter_mut().zip(&col.values) {
                *o += v * m;
            }
        }
        Self::normalized(self.grid.clone(), out)
    }

    /// `∫ G(rate, γ) p(γ) dγ` for one rate.
    pub fn expected_goodput(&self, rate_index: usize, table: &GoodputTable) -> f64 {
        self.grid.integrate(
            &table
                .goodput(rate_index)
                .iter()
                .zip(&self.density)
                .map(|(g, d)| g * d)
                .collect::<Vec<_>>(),
        )
    }

    /// Rate index maximizing expected goodput; ties go to the smaller rate.
    pub fn best_rate(&self, table: &GoodputTable) -> usize {
        let mass: Vec<f64> = self
            .density
            .iter()
            .zip(self.grid.weights())
            .map(|(d, w)| d * w)
            .collect();
        argmax_first((0..table.rate_set().len()).map(|k| {
            table
                .goodput(k)
                .iter()
                .zip(&mass)
                .map(|(g, m)| g * m)
                .sum::<f64>()
        }))
    }
}

/// Lag kernel sampled on the grid, one truncated column per source point.
#[derive(Debug, Clone)]
pub struct PredictionKernel {
    lag: u64,
    columns: Vec<KernelColumn>,
}

impl PredictionKernel {
    pub fn new(params: &ChannelParams, grid: &SnrGrid, lag: u64) -> Result<Self> {
        let kernel = LagKernel::new(params, lag)?;
        let columns = grid.points().iter().map(|&g| kernel.column(grid, g)).collect();
        Ok(Self { lag, columns })
    }

    pub fn lag(&self) -> u64 {
        self.lag
    }

    /// Number of stored kernel samples.
    pub fn nonzeros(&self) -> usize {
        self.columns.iter().map(|c| c.values.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::GridSpec;
    use crate::phy::{packet_error_rate, RateSet};
    use crate::feedback::block_likelihood;

    struct Fixture {
        params: ChannelParams,
        grid: Arc<SnrGrid>,
        table: GoodputTable,
    }

    fn fixture(alpha: f64) -> Fixture {
        let params = ChannelParams::from_mean_snr_db(25.0, alpha, 100).unwrap();
        let grid = Arc::new(SnrGrid::new(&GridSpec::default(), params.mean_snr()).unwrap());
        let table = GoodputTable::new(RateSet::squares(16, 100).unwrap(), &grid);
        Fixture { params, grid, table }
    }

    fn record(naks: u32, n: u32, rate: usize) -> FeedbackRecord {
        FeedbackRecord::new(naks, n, rate, 0).unwrap()
    }

    #[test]
    fn prior_shape() {
        let f = fixture(0.001);
        let b = SnrBelief::prior(&f.grid, &f.params);
        assert!((b.integral() - 1.0).abs() < 1e-9);
        assert!((b.mean() / f.params.mean_snr() - 1.0).abs() < 5e-3);
        let mode = argmax_first(b.density().iter().copied());
        assert_eq!(mode, 0);
    }

    #[test]
    fn posterior_matches_direct_evaluation() {
        let f = fixture(0.001);
        let prior = SnrBelief::prior(&f.grid, &f.params);
        for rec in [record(1, 1, 3), record(0, 1, 6), record(3, 10, 4), record(0, 20, 0)] {
            let post = prior.bayes_update(&rec, &f.table).unwrap();
            let rate = f.table.rate_set().rate(rec.rate);
            let raw: Vec<f64> = f
                .grid
                .points()
                .iter()
                .zip(prior.density())
                .map(|(&g, &d)| block_likelihood(&rec, packet_error_rate(rate, g, 100).unwrap()) * d)
                .collect();
            let z: f64 = raw.iter().zip(f.grid.weights()).map(|(r, w)| r * w).sum();
            let diff = raw
                .iter()
                .zip(post.density())
                .map(|(r, p)| (r / z - p).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-12, "{rec:?}: {diff}");
            assert!((post.integral() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_likelihood_leaves_belief_unchanged() {
        // an observation of 0 NAKs at a rate whose error rate is ~0 over the
        // whole belief support multiplies every point by ~1
        let f = fixture(0.001);
        let mut density = vec![0.0; f.grid.len()];
        for i in 1500..1600 {
            density[i] = 1.0;
        }
        let b = SnrBelief::from_density(&f.grid, density).unwrap();
        let post = b.bayes_update(&record(0, 1, 0), &f.table).unwrap();
        let diff = post
            .density()
            .iter()
            .zip(b.density())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn mirrored_observations_mirror_the_likelihood() {
        // k NAKs at ε versus n-k NAKs at 1-ε give the same likelihood
        for (k, n) in [(1, 3), (2, 7), (0, 5)] {
            for eps in [0.1, 0.35, 0.8] {
                let a = block_likelihood(&record(k, n, 0), eps);
                let b = block_likelihood(&record(n - k, n, 0), 1.0 - eps);
                assert!((a - b).abs() < 1e-12 * a.max(1e-300));
            }
        }
    }

    #[test]
    fn ack_at_a_high_rate_raises_the_mean() {
        let f = fixture(0.001);
        let prior = SnrBelief::prior(&f.grid, &f.params);
        let top = f.table.rate_set().len() - 1;
        let post = prior.bayes_update(&record(0, 1, top), &f.table).unwrap();
        assert!(post.mean() > prior.mean());
        let nak = prior.bayes_update(&record(1, 1, 0), &f.table).unwrap();
        assert!(nak.mean() < prior.mean());
    }

    #[test]
    fn impossible_observation_is_degenerate() {
        let f = fixture(0.001);
        // all mass at the top of the grid, where QPSK never fails
        let b = SnrBelief::point_mass(&f.grid, f.grid.len() - 1);
        let res = b.bayes_update(&record(50, 50, 0), &f.table);
        assert!(matches!(res, Err(Error::DegenerateUpdate)));
    }

    #[test]
    fn prediction_keeps_the_prior() {
        for alpha in [0.001, 0.01, 1.0] {
            let f = fixture(alpha);
            let prior = SnrBelief::prior(&f.grid, &f.params);
            let k = PredictionKernel::new(&f.params, &f.grid, 1).unwrap();
            let next = prior.predict(&k);
            assert!((next.integral() - 1.0).abs() < 1e-9);
            for (a, b) in next.density().iter().zip(prior.density()) {
                // relative inside the bulk, absolute in the truncated tail
                let tol = if *b > 1e-12 { 1e-4 * b } else { 1e-12 };
                assert!((a - b).abs() < tol, "alpha {alpha}: {a} {b}");
            }
        }
    }

    #[test]
    fn iid_prediction_returns_the_prior() {
        let f = fixture(1.0);
        let prior = SnrBelief::prior(&f.grid, &f.params);
        let k = PredictionKernel::new(&f.params, &f.grid, 1).unwrap();
        let skewed = SnrBelief::point_mass(&f.grid, 1200);
        let next = skewed.predict(&k);
        for (a, b) in next.density().iter().zip(prior.density()) {
            assert!((a - b).abs() < 1e-9 * b.max(1e-12));
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        for alpha in [0.001, 0.01] {
            let f = fixture(alpha);
            let one = PredictionKernel::new(&f.params, &f.grid, 1).unwrap();
            let start = SnrBelief::prior(&f.grid, &f.params)
                .bayes_update(&record(0, 1, 8), &f.table)
                .unwrap()
                .bayes_update(&record(1, 1, 10), &f.table)
                .unwrap();
            for d in [2u64, 3, 5] {
                let mut stepped = start.clone();
                for _ in 0..d {
                    stepped = stepped.predict(&one);
                }
                let jump = start.predict(&PredictionKernel::new(&f.params, &f.grid, d).unwrap());
                let diff = stepped
                    .density()
                    .iter()
                    .zip(jump.density())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(diff < 1e-6, "alpha {alpha} d {d}: {diff}");
            }
        }
    }

    #[test]
    fn expected_goodput_bounds() {
        let f = fixture(0.001);
        let i = 1400;
        let b = SnrBelief::point_mass(&f.grid, i);
        for k in 0..f.table.rate_set().len() {
            let eg = b.expected_goodput(k, &f.table);
            assert!((eg - f.table.goodput(k)[i]).abs() < 1e-9 * f.table.rate_set().rate(k));
            let prior = SnrBelief::prior(&f.grid, &f.params);
            assert!(prior.expected_goodput(k, &f.table) <= f.table.rate_set().rate(k));
        }
    }

    #[test]
    fn rejects_bad_densities() {
        let f = fixture(0.01);
        assert!(SnrBelief::from_density(&f.grid, vec![0.0; f.grid.len()]).is_err());
        assert!(SnrBelief::from_density(&f.grid, vec![1.0; 3]).is_err());
        let mut d = vec![1.0; f.grid.len()];
        d[5] = -1.0;
        assert!(SnrBelief::from_density(&f.grid, d).is_err());
    }
}
