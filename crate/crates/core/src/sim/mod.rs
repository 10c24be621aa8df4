//! Monte Carlo engine: one channel trace per realization, shared by every
//! configured controller, aggregated into per-controller metrics.

mod config;
mod output;

use std::collections::VecDeque;
use std::sync::Arc;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{SimConfig, Sweep, SweepParam, CONFIG_KEYS};
pub use output::{goodput_curves, read_results, write_curves, write_results, CurveRow, ResultRow};

use crate::channel::GainProcess;
use crate::controllers::{Controller, ControllerFactory, Model, Policy, Slot};
use crate::error::Result;
use crate::queue::{ArrivalProcess, BufferState};

const CHANNEL_STREAM: u64 = 0;
const FEEDBACK_STREAM: u64 = 1;
const ARRIVAL_STREAM: u64 = 2;

/// Independent stream for one (realization, purpose) pair.
fn stream(seed: u64, realization: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((realization as u64) << 2) | purpose);
    rng
}

/// Shared, read-only state of one configuration.
#[derive(Debug)]
pub struct Cell {
    config: SimConfig,
    factory: ControllerFactory,
    packet_bits: u64,
}

impl Cell {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let model = Arc::new(Model::new(config.channel()?, &config.grid, config.rate_set()?)?);
        let packet_bits = model.rates().rate(model.fixed_rate()).floor() as u64;
        let factory = ControllerFactory::new(model, config.n, config.d, &config.controllers)?;
        Ok(Self {
            config,
            factory,
            packet_bits,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn model(&self) -> &Arc<Model> {
        self.factory.model()
    }

    /// Bits per arriving packet: the fixed-rate payload.
    pub fn packet_bits(&self) -> u64 {
        self.packet_bits
    }
}

/// Per-packet record of one controller over one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerTrace {
    pub policy: Policy,
    /// Rate index used for each packet.
    pub rates: Vec<usize>,
    /// Goodput credited to each packet, in bits.
    pub goodput: Vec<f64>,
    /// Buffer occupancy after each interval, in arrival packets.
    pub occupancy: Vec<f64>,
    pub arrived_bits: u64,
    pub dropped_bits: u64,
    pub degenerate_updates: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizationTrace {
    /// True SNR of packets `0..horizon`.
    pub snr: Vec<f64>,
    pub controllers: Vec<ControllerTrace>,
}

/// Runs every controller of `cell` against realization `realization`.
pub fn run_realization(cell: &Cell, realization: usize) -> Result<RealizationTrace> {
    let cfg = &cell.config;
    let model = cell.model();
    let n = cfg.n as usize;
    let lag = n * cfg.d;
    let span = cfg.blocks() * n;

    // history[t + lag] is the SNR of packet t, t in -lag..span
    let mut rng = stream(cfg.seed, realization, CHANNEL_STREAM);
    let preroll = cfg.preroll();
    let mut process = GainProcess::new(*model.params(), -(preroll as i64));
    let mut history = Vec::with_capacity(lag + span);
    for step in 0..preroll {
        let snr = process.advance(&mut rng);
        if step + lag >= preroll {
            history.push(snr);
        }
    }
    for _ in 0..span {
        history.push(process.advance(&mut rng));
    }

    let mut rng = stream(cfg.seed, realization, FEEDBACK_STREAM);
    let uniforms: Vec<f64> = (0..span).map(|_| rng.random()).collect();
    let mut rng = stream(cfg.seed, realization, ARRIVAL_STREAM);
    let start_on = rng.random::<f64>() < 0.5;
    let arrival_uniforms: Vec<f64> = (0..span).map(|_| rng.random()).collect();

    let mut controllers = cell.factory.spawn()?;
    let traces = controllers
        .iter_mut()
        .map(|c| {
            let input = PacketInputs {
                history: &history,
                lag,
                uniforms: &uniforms,
                arrival_uniforms: &arrival_uniforms,
                start_on,
            };
            run_controller(cell, c, &input)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RealizationTrace {
        snr: history[lag..lag + cfg.horizon].to_vec(),
        controllers: traces,
    })
}

struct PacketInputs<'a> {
    history: &'a [f64],
    lag: usize,
    uniforms: &'a [f64],
    arrival_uniforms: &'a [f64],
    start_on: bool,
}

fn run_controller(cell: &Cell, controller: &mut Controller, input: &PacketInputs) -> Result<ControllerTrace> {
    let cfg = &cell.config;
    let rates = cell.model().rates();
    let n = cfg.n as usize;
    let horizon = cfg.horizon;
    let snr_at = |t: i64| input.history[(t + input.lag as i64) as usize];
    let mid = |block: i64| block * n as i64 + (n / 2) as i64;

    let mut trace = ControllerTrace {
        policy: controller.policy(),
        rates: Vec::with_capacity(horizon),
        goodput: Vec::with_capacity(horizon),
        occupancy: Vec::new(),
        arrived_bits: 0,
        dropped_bits: 0,
        degenerate_updates: 0,
    };
    let mut buffer = if cfg.buffer {
        let cap = cfg.buffer_packets * cell.packet_bits;
        Some((
            BufferState::new(cap, cap / 2)?,
            ArrivalProcess::new(input.start_on, cfg.self_transition, cell.packet_bits)?,
            VecDeque::<(u64, bool)>::with_capacity(input.lag + 1),
        ))
    } else {
        None
    };

    let mut feedback: Vec<Option<Vec<bool>>> = Vec::with_capacity(cfg.blocks());
    for block in 0..cfg.blocks() {
        let b = block as i64;
        let arrived = block.checked_sub(cfg.d).and_then(|k| feedback[k].as_deref());
        let slot = Slot {
            block: b,
            lagged_snr: snr_at(mid(b - cfg.d as i64)),
            current_snr: snr_at(mid(b)),
            feedback: arrived,
        };
        let rate = controller.select(&slot)?;
        let rate_bits = rates.rate(rate);
        let mut naks = Vec::with_capacity(n);
        for t in block * n..((block + 1) * n).min(horizon) {
            let eps = rates.error_rate(rate, snr_at(t as i64));
            let nak = input.uniforms[t] < eps;
            let credited = match &mut buffer {
                None => {
                    naks.push(nak);
                    if cfg.realized_goodput {
                        if nak {
                            0.0
                        } else {
                            rate_bits
                        }
                    } else {
                        (1.0 - eps) * rate_bits
                    }
                }
                Some((buf, arrivals, flight)) => {
                    let mut acked = 0;
                    if flight.len() == input.lag {
                        let (bits, was_nak) = flight.pop_front().expect("nonempty");
                        if was_nak {
                            buf.retain(bits)?;
                        } else {
                            acked = bits;
                        }
                    }
                    buf.step(arrivals.step(input.arrival_uniforms[t]), acked)?;
                    let bits = buf.transmit(rate_bits.floor() as u64);
                    flight.push_back((bits, nak));
                    trace.occupancy.push(buf.occupancy as f64 / cell.packet_bits as f64);
                    if bits > 0 {
                        naks.push(nak);
                    }
                    if cfg.realized_goodput {
                        if nak {
                            0.0
                        } else {
                            bits as f64
                        }
                    } else {
                        (1.0 - eps) * bits as f64
                    }
                }
            };
            trace.rates.push(rate);
            trace.goodput.push(credited);
        }
        feedback.push(if naks.is_empty() { None } else { Some(naks) });
    }
    if let Some((buf, _, _)) = &buffer {
        trace.arrived_bits = buf.arrived;
        trace.dropped_bits = buf.dropped;
    }
    trace.degenerate_updates = controller.degenerate_updates();
    Ok(trace)
}

/// Aggregates of one controller over all realizations of a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerMetrics {
    pub policy: Policy,
    /// Mean goodput in bits per symbol.
    pub goodput: f64,
    pub goodput_stderr: f64,
    /// Mean buffer occupancy in arrival packets (buffer runs only).
    pub occupancy: Option<f64>,
    /// Dropped over arrived bits (buffer runs only).
    pub drop_fraction: Option<f64>,
    /// Packets sent at each rate index.
    pub rate_histogram: Vec<u64>,
    pub degenerate_updates: u64,
    /// Per-realization goodput in bits per symbol, in realization order.
    pub per_realization: Vec<f64>,
    /// Per-realization mean occupancy (buffer runs only).
    pub occupancy_per_realization: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub sweep_value: f64,
    pub config: SimConfig,
    pub controllers: Vec<ControllerMetrics>,
}

impl CellResult {
    pub fn metrics(&self, policy: Policy) -> Option<&ControllerMetrics> {
        self.controllers.iter().find(|m| m.policy == policy)
    }

    /// Mean and standard error of the per-realization difference `a - b`.
    pub fn paired_difference(&self, a: Policy, b: Policy) -> Option<(f64, f64)> {
        let (a, b) = (self.metrics(a)?, self.metrics(b)?);
        let diff: Vec<f64> = a
            .per_realization
            .iter()
            .zip(&b.per_realization)
            .map(|(x, y)| x - y)
            .collect();
        Some(mean_and_stderr(&diff))
    }

    /// Orderings noncausal ≥ causal ≥ greedy ≥ fixed that are violated by
    /// more than three paired standard errors.
    pub fn ordering_violations(&self) -> Vec<String> {
        let chain = [
            Policy::NoncausalGenie,
            Policy::CausalGenie,
            Policy::Greedy,
            Policy::Fixed,
        ];
        chain
            .windows(2)
            .filter_map(|w| {
                let (mean, se) = self.paired_difference(w[0], w[1])?;
                (mean < -3.0 * se).then(|| format!("{} < {} by {mean:.4} (se {se:.4})", w[0], w[1]))
            })
            .collect()
    }
}

pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

struct RealizationSummary {
    goodput: Vec<f64>,
    occupancy: Vec<f64>,
    arrived: Vec<u64>,
    dropped: Vec<u64>,
    histograms: Vec<Vec<u64>>,
    degenerate: Vec<u64>,
}

fn summarize(cell: &Cell, trace: RealizationTrace) -> RealizationSummary {
    let symbols = (cell.config.horizon as f64) * cell.config.p as f64;
    let levels = cell.model().rates().len();
    let mut s = RealizationSummary {
        goodput: Vec::new(),
        occupancy: Vec::new(),
        arrived: Vec::new(),
        dropped: Vec::new(),
        histograms: Vec::new(),
        degenerate: Vec::new(),
    };
    for c in trace.controllers {
        s.goodput.push(c.goodput.iter().sum::<f64>() / symbols);
        s.occupancy
            .push(c.occupancy.iter().sum::<f64>() / c.occupancy.len().max(1) as f64);
        s.arrived.push(c.arrived_bits);
        s.dropped.push(c.dropped_bits);
        let mut h = vec![0; levels];
        for r in c.rates {
            h[r] += 1;
        }
        s.histograms.push(h);
        s.degenerate.push(c.degenerate_updates);
    }
    s
}

/// All realizations of one configuration; parallel over realizations with
/// an ordered reduction.
pub fn run_cell(config: &SimConfig, sweep_value: f64) -> Result<CellResult> {
    let cell = Cell::new(config.clone())?;
    info!(
        "cell {sweep_value}: {} realizations x {} packets, fixed rate m={}",
        config.realizations,
        config.horizon,
        cell.model().rates().constellation(cell.model().fixed_rate())
    );
    let summaries = (0..config.realizations)
        .into_par_iter()
        .map(|r| run_realization(&cell, r).map(|t| summarize(&cell, t)))
        .collect::<Result<Vec<_>>>()?;

    let controllers = config
        .controllers
        .iter()
        .enumerate()
        .map(|(k, &policy)| {
            let per_realization: Vec<f64> = summaries.iter().map(|s| s.goodput[k]).collect();
            let (goodput, goodput_stderr) = mean_and_stderr(&per_realization);
            let occupancy_per_realization: Vec<f64> = if config.buffer {
                summaries.iter().map(|s| s.occupancy[k]).collect()
            } else {
                Vec::new()
            };
            let (occupancy, drop_fraction) = if config.buffer {
                let arrived: u64 = summaries.iter().map(|s| s.arrived[k]).sum();
                let dropped: u64 = summaries.iter().map(|s| s.dropped[k]).sum();
                (
                    Some(mean_and_stderr(&occupancy_per_realization).0),
                    Some(if arrived == 0 { 0.0 } else { dropped as f64 / arrived as f64 }),
                )
            } else {
                (None, None)
            };
            let mut rate_histogram = vec![0; cell.model().rates().len()];
            for s in &summaries {
                for (h, c) in rate_histogram.iter_mut().zip(&s.histograms[k]) {
                    *h += c;
                }
            }
            ControllerMetrics {
                policy,
                goodput,
                goodput_stderr,
                occupancy,
                drop_fraction,
                rate_histogram,
                degenerate_updates: summaries.iter().map(|s| s.degenerate[k]).sum(),
                per_realization,
                occupancy_per_realization,
            }
        })
        .collect();
    let result = CellResult {
        sweep_value,
        config: config.clone(),
        controllers,
    };
    for v in result.ordering_violations() {
        warn!("ordering violated at {sweep_value}: {v}");
    }
    Ok(result)
}

/// Runs `config` once per sweep value. Every cell reuses the same
/// realization streams, so curves across the sweep are paired.
pub fn run_experiment(config: &SimConfig, sweep: &Sweep) -> Result<Vec<CellResult>> {
    let cells = sweep
        .values
        .iter()
        .map(|&v| {
            let mut c = config.clone();
            sweep.param.apply(&mut c, v)?;
            c.validate()?;
            Ok((v, c))
        })
        .collect::<Result<Vec<_>>>()?;
    cells
        .iter()
        .enumerate()
        .map(|(i, (v, c))| {
            info!("sweep {} = {v} ({}/{})", sweep.param, i + 1, cells.len());
            run_cell(c, *v)
        })
        .collect()
}

/// One CSV row per (sweep value, controller).
pub fn result_rows(cells: &[CellResult]) -> Vec<ResultRow> {
    cells
        .iter()
        .flat_map(|cell| {
            cell.controllers.iter().map(move |m| ResultRow {
                sweep_value: cell.sweep_value,
                controller: m.policy.to_string(),
                goodput_bits_per_symbol: m.goodput,
                goodput_stderr: m.goodput_stderr,
                occupancy_mean: m.occupancy,
                drop_fraction: m.drop_fraction,
            })
        })
        .collect()
}
