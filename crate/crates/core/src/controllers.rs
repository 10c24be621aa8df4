//! Rate-selection policies behind one interface.
//!
//! Every controller sees a [`Slot`] per decision: the true SNR `n·d` packets
//! back and at the current block (genies use these), plus its own delayed
//! ACK/NAK block (the greedy controller uses only this).

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use log::debug;

use crate::belief::{PredictionKernel, SnrBelief};
use crate::channel::{
    lloyd_max_quantize, quantized_transition_matrix, ChannelParams, GridSpec, LagKernel, QuantizedChannel, SnrGrid,
};
use crate::error::{Error, Result};
use crate::feedback::{block_error_estimate, FeedbackRecord};
use crate::phy::{argmax_first, best_rate_at_snr, GoodputTable, RateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    Fixed,
    Greedy,
    CausalGenie,
    NoncausalGenie,
    /// Causal genie restricted to an `L`-cell quantization of the SNR.
    QuantizedGenie(usize),
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Fixed => write!(f, "fixed"),
            Policy::Greedy => write!(f, "greedy"),
            Policy::CausalGenie => write!(f, "causal_genie"),
            Policy::NoncausalGenie => write!(f, "noncausal_genie"),
            Policy::QuantizedGenie(l) => write!(f, "quantized_genie_L{l}"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "fixed" => Ok(Policy::Fixed),
            "greedy" => Ok(Policy::Greedy),
            "causal_genie" => Ok(Policy::CausalGenie),
            "noncausal_genie" => Ok(Policy::NoncausalGenie),
            _ => s
                .strip_prefix("quantized_genie_L")
                .and_then(|l| l.parse::<usize>().ok())
                .filter(|&l| l >= 1)
                .map(Policy::QuantizedGenie)
                .ok_or_else(|| Error::config("controllers", format!("unknown controller `{s}`"))),
        }
    }
}

/// Channel, grid, goodput curves and prior shared by every controller of
/// one configuration.
#[derive(Debug)]
pub struct Model {
    params: ChannelParams,
    grid: Arc<SnrGrid>,
    table: GoodputTable,
    prior: SnrBelief,
    fixed_rate: usize,
}

impl Model {
    pub fn new(params: ChannelParams, grid_spec: &GridSpec, rates: RateSet) -> Result<Self> {
        let grid = Arc::new(SnrGrid::new(grid_spec, params.mean_snr())?);
        let table = GoodputTable::new(rates, &grid);
        let prior = SnrBelief::prior(&grid, &params);
        let fixed_rate = fixed_rate_select(&prior, &table);
        Ok(Self {
            params,
            grid,
            table,
            prior,
            fixed_rate,
        })
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn grid(&self) -> &Arc<SnrGrid> {
        &self.grid
    }

    pub fn table(&self) -> &GoodputTable {
        &self.table
    }

    pub fn rates(&self) -> &RateSet {
        self.table.rate_set()
    }

    pub fn prior(&self) -> &SnrBelief {
        &self.prior
    }

    /// Index of the fixed-rate controller's choice.
    pub fn fixed_rate(&self) -> usize {
        self.fixed_rate
    }
}

/// Argmax of expected goodput under the steady-state prior.
pub fn fixed_rate_select(prior: &SnrBelief, table: &GoodputTable) -> usize {
    prior.best_rate(table)
}

/// Argmax of goodput averaged over the lag kernel from a known past SNR.
pub fn causal_genie_select(lagged_snr: f64, kernel: &LagKernel, grid: &SnrGrid, table: &GoodputTable) -> usize {
    let col = kernel.column(grid, lagged_snr);
    argmax_first((0..table.rate_set().len()).map(|r| col.integrate_against(grid, table.goodput(r))))
}

pub fn noncausal_genie_select(snr: f64, rates: &RateSet) -> usize {
    best_rate_at_snr(rates, snr)
}

/// Per-cell decisions of the quantized genie:
/// `argmax_r Σ_j T(i,j) E[G(r, γ) | γ ∈ cell j]`.
pub fn quantized_genie_table(qc: &QuantizedChannel, model: &Model) -> Result<Vec<usize>> {
    let levels = qc.levels();
    let rates = model.rates();
    let cell_goodput: Vec<Vec<f64>> = (0..rates.len())
        .map(|r| qc.cell_averages(&model.params, &model.grid, |g| rates.goodput(r, g)))
        .collect();
    (0..levels)
        .map(|i| {
            let row = qc
                .transition_row(i)
                .ok_or_else(|| Error::Domain("quantized channel has no transition matrix".into()))?;
            Ok(argmax_first(
                cell_goodput
                    .iter()
                    .map(|g| row.iter().zip(g).map(|(t, g)| t * g).sum::<f64>()),
            ))
        })
        .collect()
}

/// Quantized-genie lookup: the decision for the cell holding `γ_{t-d}`.
pub fn quantized_genie_select(lagged_snr: f64, qc: &QuantizedChannel, decisions: &[usize]) -> usize {
    decisions[qc.cell_of(lagged_snr)]
}

/// Packet-rate and block-rate greedy controller.
///
/// The stored belief is over `γ` one decision ahead of the newest feedback,
/// i.e. `p(γ_{i-d+1} | feedback up to block i-d)`.
#[derive(Debug, Clone)]
pub struct GreedyState {
    model: Arc<Model>,
    decide: Arc<PredictionKernel>,
    advance: Option<Arc<PredictionKernel>>,
    stored: SnrBelief,
    at_prior: bool,
    issued: VecDeque<usize>,
    degenerate_updates: u64,
}

impl GreedyState {
    /// `decide` must have lag `n·d` and `advance` lag `n` (only needed when
    /// `d > 1`).
    pub fn new(
        model: Arc<Model>,
        delay: usize,
        decide: Arc<PredictionKernel>,
        advance: Option<Arc<PredictionKernel>>,
    ) -> Result<Self> {
        if delay == 0 {
            return Err(Error::config("d", "feedback delay must be at least 1"));
        }
        if delay > 1 && advance.is_none() {
            return Err(Error::Domain("delays above one need a one-block kernel".into()));
        }
        let issued = std::iter::repeat(model.fixed_rate).take(delay).collect();
        Ok(Self {
            stored: model.prior.clone(),
            at_prior: true,
            model,
            decide,
            advance,
            issued,
            degenerate_updates: 0,
        })
    }

    pub fn belief(&self) -> &SnrBelief {
        &self.stored
    }

    pub fn degenerate_updates(&self) -> u64 {
        self.degenerate_updates
    }

    /// Rates issued for the last `d` blocks, oldest first.
    pub fn pipeline(&self) -> &VecDeque<usize> {
        &self.issued
    }

    /// One decision given the record that arrived for block `i-d`, if any.
    pub fn step(&mut self, arrived: Option<FeedbackRecord>) -> usize {
        let rate = match arrived {
            None if self.at_prior => self.model.fixed_rate,
            None => self.decide_from(self.stored.clone()),
            Some(rec) => {
                let posterior = match self.stored.bayes_update(&rec, &self.model.table) {
                    Ok(b) => b,
                    Err(_) => {
                        debug!("degenerate update at block {}, resetting to the prior", rec.index);
                        self.degenerate_updates += 1;
                        self.model.prior.clone()
                    }
                };
                self.at_prior = false;
                self.decide_from(posterior)
            }
        };
        self.issued.pop_front();
        self.issued.push_back(rate);
        rate
    }

    fn decide_from(&mut self, posterior: SnrBelief) -> usize {
        let predicted = posterior.predict(&self.decide);
        let rate = predicted.best_rate(&self.model.table);
        self.stored = match &self.advance {
            Some(k) if self.issued.len() > 1 => posterior.predict(k),
            _ => predicted,
        };
        rate
    }

    /// Block-rate decision from the ACK/NAK indicators of block `i-d`
    /// (`true` is a NAK), tagged with the rate issued for that block.
    pub fn block_step(&mut self, block: i64, naks: Option<&[bool]>) -> Result<usize> {
        let record = match naks {
            Some(acks) => {
                let rate = *self.issued.front().expect("pipeline holds d rates");
                Some(block_error_estimate(acks, rate, block - self.issued.len() as i64)?)
            }
            None => None,
        };
        Ok(self.step(record))
    }
}

/// What a controller may look at when choosing the rate for block `block`.
#[derive(Debug, Clone, Copy)]
pub struct Slot<'a> {
    pub block: i64,
    /// True mid-block SNR of block `block - d`.
    pub lagged_snr: f64,
    /// True mid-block SNR of block `block`.
    pub current_snr: f64,
    /// This controller's NAK indicators for block `block - d`.
    pub feedback: Option<&'a [bool]>,
}

#[derive(Debug, Clone)]
enum Inner {
    Fixed(usize),
    Greedy(Box<GreedyState>),
    Causal(LagKernel),
    Noncausal,
    Quantized(Arc<QuantizedChannel>, Arc<Vec<usize>>),
}

#[derive(Debug, Clone)]
pub struct Controller {
    policy: Policy,
    model: Arc<Model>,
    inner: Inner,
}

impl Controller {
    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn select(&mut self, slot: &Slot) -> Result<usize> {
        let model = &self.model;
        Ok(match &mut self.inner {
            Inner::Fixed(r) => *r,
            Inner::Greedy(g) => g.block_step(slot.block, slot.feedback)?,
            Inner::Causal(k) => causal_genie_select(slot.lagged_snr, k, &model.grid, &model.table),
            Inner::Noncausal => noncausal_genie_select(slot.current_snr, model.rates()),
            Inner::Quantized(qc, dec) => quantized_genie_select(slot.lagged_snr, qc, dec),
        })
    }

    pub fn degenerate_updates(&self) -> u64 {
        match &self.inner {
            Inner::Greedy(g) => g.degenerate_updates(),
            _ => 0,
        }
    }
}

/// Builds the shared tables once per configuration and hands out fresh
/// controllers per realization.
#[derive(Debug)]
pub struct ControllerFactory {
    model: Arc<Model>,
    block: u64,
    delay: usize,
    policies: Vec<Policy>,
    decide: Option<Arc<PredictionKernel>>,
    advance: Option<Arc<PredictionKernel>>,
    quantized: Vec<(usize, Arc<QuantizedChannel>, Arc<Vec<usize>>)>,
}

impl ControllerFactory {
    pub fn new(model: Arc<Model>, block: u64, delay: usize, policies: &[Policy]) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::config("controllers", "no controllers configured"));
        }
        if block == 0 {
            return Err(Error::config("n", "block size must be at least 1"));
        }
        if delay == 0 {
            return Err(Error::config("d", "feedback delay must be at least 1"));
        }
        let lag = block * delay as u64;
        let (mut decide, mut advance) = (None, None);
        if policies.contains(&Policy::Greedy) {
            let d = Arc::new(PredictionKernel::new(&model.params, &model.grid, lag)?);
            if delay > 1 {
                advance = Some(Arc::new(PredictionKernel::new(&model.params, &model.grid, block)?));
            }
            decide = Some(d);
        }
        let mut quantized = Vec::new();
        for p in policies {
            if let Policy::QuantizedGenie(levels) = *p {
                let qc = lloyd_max_quantize(&model.params, levels)?;
                let qc = quantized_transition_matrix(&qc, &model.params, lag, &model.grid)?;
                let table = quantized_genie_table(&qc, &model)?;
                quantized.push((levels, Arc::new(qc), Arc::new(table)));
            }
        }
        Ok(Self {
            model,
            block,
            delay,
            policies: policies.to_vec(),
            decide,
            advance,
            quantized,
        })
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn spawn(&self) -> Result<Vec<Controller>> {
        let lag = self.block * self.delay as u64;
        self.policies
            .iter()
            .map(|&policy| {
                let inner = match policy {
                    Policy::Fixed => Inner::Fixed(self.model.fixed_rate),
                    Policy::Greedy => Inner::Greedy(Box::new(GreedyState::new(
                        self.model.clone(),
                        self.delay,
                        self.decide.clone().expect("built with greedy"),
                        self.advance.clone(),
                    )?)),
                    Policy::CausalGenie => Inner::Causal(LagKernel::new(&self.model.params, lag)?),
                    Policy::NoncausalGenie => Inner::Noncausal,
                    Policy::QuantizedGenie(levels) => {
                        let (_, qc, dec) = self
                            .quantized
                            .iter()
                            .find(|(l, _, _)| *l == levels)
                            .expect("built for every level");
                        Inner::Quantized(qc.clone(), dec.clone())
                    }
                };
                Ok(Controller {
                    policy,
                    model: self.model.clone(),
                    inner,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::draw_ack_nak;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(db: f64, alpha: f64) -> Arc<Model> {
        let params = ChannelParams::from_mean_snr_db(db, alpha, 100).unwrap();
        Arc::new(Model::new(params, &GridSpec::default(), RateSet::squares(16, 100).unwrap()).unwrap())
    }

    fn greedy(m: &Arc<Model>, delay: usize) -> GreedyState {
        let decide = Arc::new(PredictionKernel::new(m.params(), m.grid(), delay as u64).unwrap());
        let advance = Arc::new(PredictionKernel::new(m.params(), m.grid(), 1).unwrap());
        GreedyState::new(m.clone(), delay, decide, Some(advance)).unwrap()
    }

    #[test]
    fn policy_names_round_trip() {
        for p in [
            Policy::Fixed,
            Policy::Greedy,
            Policy::CausalGenie,
            Policy::NoncausalGenie,
            Policy::QuantizedGenie(7),
        ] {
            assert_eq!(p.to_string().parse::<Policy>().unwrap(), p);
        }
        assert!("quantized_genie_L0".parse::<Policy>().is_err());
        assert!("oracle".parse::<Policy>().is_err());
    }

    #[test]
    fn fixed_rate_extremes() {
        assert_eq!(model(-10.0, 0.01).fixed_rate(), 0);
        let hi = model(70.0, 0.01);
        assert_eq!(hi.fixed_rate(), hi.rates().len() - 1);
    }

    #[test]
    fn fixed_rate_at_the_default_scenario() {
        // direct quadrature of the exponential law on a fine linear grid
        let m = model(25.0, 0.001);
        let mu = m.params().mean_snr();
        let n = 400_000;
        let dx = 40.0 * mu / n as f64;
        let eg: Vec<f64> = (0..m.rates().len())
            .map(|r| {
                (0..n)
                    .map(|i| {
                        let g = (i as f64 + 0.5) * dx;
                        m.rates().goodput(r, g) * (-g / mu).exp() / mu * dx
                    })
                    .sum()
            })
            .collect();
        assert_eq!(m.fixed_rate(), argmax_first(eg.iter().copied()));
        assert_eq!(m.rates().constellation(m.fixed_rate()), 36);
    }

    #[test]
    fn iid_channel_makes_greedy_fixed() {
        let m = model(25.0, 1.0);
        let mut g = greedy(&m, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in 0..200 {
            let nak = [rng.random::<f64>() < 0.5];
            let r = g.block_step(t, if t == 0 { None } else { Some(&nak) }).unwrap();
            assert_eq!(r, m.fixed_rate(), "step {t}");
        }
    }

    #[test]
    fn all_acks_push_the_rate_up_on_a_frozen_channel() {
        let m = model(25.0, 1e-6);
        let mut g = greedy(&m, 1);
        let true_snr = 3000.0;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut last = g.step(None);
        for t in 1..60 {
            let eps = m.rates().error_rate(last, true_snr);
            let nak = draw_ack_nak(eps, rng.random());
            let rec = FeedbackRecord::new(nak as u32, 1, last, t - 1).unwrap();
            let r = g.step(Some(rec));
            if !nak {
                assert!(r >= last, "step {t}: {r} < {last}");
            }
            last = r;
        }
        assert!(last > m.fixed_rate());
    }

    #[test]
    fn warm_up_uses_the_prior() {
        let m = model(25.0, 0.001);
        let mut g = greedy(&m, 3);
        for t in 0..3 {
            assert_eq!(g.block_step(t, None).unwrap(), m.fixed_rate());
        }
        assert_eq!(g.pipeline().len(), 3);
    }

    #[test]
    fn point_mass_feedback_reproduces_the_causal_genie() {
        let m = model(25.0, 0.001);
        for lag in [1u64, 4] {
            let kernel = LagKernel::new(m.params(), lag).unwrap();
            let pk = PredictionKernel::new(m.params(), m.grid(), lag).unwrap();
            for idx in (900..2000).step_by(25) {
                let snr = m.grid().points()[idx];
                let belief = SnrBelief::point_mass(m.grid(), idx).predict(&pk);
                let greedy = belief.best_rate(m.table());
                assert_eq!(greedy, causal_genie_select(snr, &kernel, m.grid(), m.table()), "idx {idx}");
            }
        }
    }

    #[test]
    fn genies_forget_with_long_lags() {
        let m = model(25.0, 0.01);
        let kernel = LagKernel::new(m.params(), 5000).unwrap();
        for snr in [1.0, 100.0, 3000.0] {
            assert_eq!(causal_genie_select(snr, &kernel, m.grid(), m.table()), m.fixed_rate());
        }
        let iid = model(25.0, 1.0);
        let kernel = LagKernel::new(iid.params(), 1).unwrap();
        assert_eq!(causal_genie_select(5000.0, &kernel, iid.grid(), iid.table()), iid.fixed_rate());
    }

    #[test]
    fn single_cell_quantized_genie_is_fixed() {
        let m = model(25.0, 0.001);
        let f = ControllerFactory::new(m.clone(), 1, 1, &[Policy::QuantizedGenie(1)]).unwrap();
        let dec = &f.quantized[0].2;
        assert_eq!(dec.as_slice(), &[m.fixed_rate()]);
    }

    #[test]
    fn quantized_decisions_increase_with_the_cell() {
        let m = model(25.0, 0.001);
        let f = ControllerFactory::new(m, 1, 1, &[Policy::QuantizedGenie(7)]).unwrap();
        let dec = &f.quantized[0].2;
        assert!(dec.windows(2).all(|w| w[0] <= w[1]), "{dec:?}");
    }

    #[test]
    fn factory_validation() {
        let m = model(25.0, 0.01);
        assert!(ControllerFactory::new(m.clone(), 1, 1, &[]).is_err());
        assert!(ControllerFactory::new(m.clone(), 0, 1, &[Policy::Fixed]).is_err());
        assert!(ControllerFactory::new(m, 1, 0, &[Policy::Fixed]).is_err());
    }

    #[test]
    fn outputs_stay_in_the_rate_set() {
        let m = model(25.0, 0.01);
        let policies = [
            Policy::Fixed,
            Policy::Greedy,
            Policy::CausalGenie,
            Policy::NoncausalGenie,
            Policy::QuantizedGenie(4),
        ];
        let f = ControllerFactory::new(m.clone(), 1, 2, &policies).unwrap();
        let mut ctl = f.spawn().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for t in 0..100 {
            let fb = [rng.random::<bool>()];
            let slot = Slot {
                block: t,
                lagged_snr: rng.random::<f64>() * 2000.0,
                current_snr: rng.random::<f64>() * 2000.0,
                feedback: if t >= 2 { Some(&fb) } else { None },
            };
            for c in ctl.iter_mut() {
                assert!(c.select(&slot).unwrap() < m.rates().len());
            }
        }
    }
}
