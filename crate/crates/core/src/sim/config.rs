use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;

use crate::channel::{ChannelParams, GridSpec};
use crate::controllers::Policy;
use crate::error::{Error, Result};
use crate::phy::RateSet;

/// Everything one simulation cell needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub mean_snr_db: f64,
    pub alpha: f64,
    /// Symbols per packet.
    pub p: u32,
    /// Block size in packets.
    pub n: u64,
    /// Feedback delay in blocks.
    pub d: usize,
    /// Packets per realization.
    pub horizon: usize,
    pub realizations: usize,
    pub max_constellation: u32,
    pub grid: GridSpec,
    pub buffer: bool,
    pub buffer_packets: u64,
    pub self_transition: f64,
    pub controllers: Vec<Policy>,
    pub seed: u64,
    pub realized_goodput: bool,
    /// Pre-roll length in units of `1/alpha`, clamped to `[1e2, 1e4]`.
    pub preroll_factor: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mean_snr_db: 25.0,
            alpha: 0.001,
            p: 100,
            n: 1,
            d: 1,
            horizon: 200,
            realizations: 1000,
            max_constellation: 256,
            grid: GridSpec::default(),
            buffer: false,
            buffer_packets: 30,
            self_transition: 0.9,
            controllers: vec![
                Policy::Fixed,
                Policy::Greedy,
                Policy::CausalGenie,
                Policy::NoncausalGenie,
            ],
            seed: 1,
            realized_goodput: false,
            preroll_factor: 50.0,
        }
    }
}

/// Key, help text. Defaults come from [`SimConfig::get`] on the default config.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("mean_snr_db", "steady-state mean SNR in dB"),
    ("alpha", "fading rate of the gain recursion, in (0, 1]"),
    ("p", "symbols per packet"),
    ("n", "block size in packets (1 = packet-rate adaptation)"),
    ("d", "feedback delay in blocks"),
    ("horizon", "packets per realization"),
    ("realizations", "independent channel realizations"),
    ("max_constellation", "largest square QAM size in the rate set"),
    ("grid_points", "number of SNR grid points"),
    ("grid_lo_factor", "lowest grid point relative to the mean SNR"),
    ("grid_hi_factor", "highest grid point relative to the mean SNR"),
    ("buffer", "enable the finite transmit buffer"),
    ("buffer_packets", "buffer capacity in arrival packets (starts half full)"),
    ("self_transition", "ON/OFF arrival self-transition probability"),
    ("controllers", "comma-separated: fixed, greedy, causal_genie, noncausal_genie, quantized_genie_L<L>"),
    ("seed", "master seed"),
    ("realized_goodput", "count ACKed bits instead of expected goodput"),
    ("preroll_factor", "channel pre-roll in units of 1/alpha (clamped to [1e2, 1e4])"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::config(key, format!("expected a boolean, got `{other}`"))),
    }
}

impl SimConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mean_snr_db" => self.mean_snr_db = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "p" => self.p = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "d" => self.d = parse(key, value)?,
            "horizon" => self.horizon = parse(key, value)?,
            "realizations" => self.realizations = parse(key, value)?,
            "max_constellation" => self.max_constellation = parse(key, value)?,
            "grid_points" => self.grid.points = parse(key, value)?,
            "grid_lo_factor" => self.grid.lo_factor = parse(key, value)?,
            "grid_hi_factor" => self.grid.hi_factor = parse(key, value)?,
            "buffer" => self.buffer = parse_bool(key, value)?,
            "buffer_packets" => self.buffer_packets = parse(key, value)?,
            "self_transition" => self.self_transition = parse(key, value)?,
            "controllers" => {
                self.controllers = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "seed" => self.seed = parse(key, value)?,
            "realized_goodput" => self.realized_goodput = parse_bool(key, value)?,
            "preroll_factor" => self.preroll_factor = parse(key, value)?,
            _ => return Err(Error::config(key, "unknown configuration key")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "mean_snr_db" => self.mean_snr_db.to_string(),
            "alpha" => self.alpha.to_string(),
            "p" => self.p.to_string(),
            "n" => self.n.to_string(),
            "d" => self.d.to_string(),
            "horizon" => self.horizon.to_string(),
            "realizations" => self.realizations.to_string(),
            "max_constellation" => self.max_constellation.to_string(),
            "grid_points" => self.grid.points.to_string(),
            "grid_lo_factor" => self.grid.lo_factor.to_string(),
            "grid_hi_factor" => self.grid.hi_factor.to_string(),
            "buffer" => self.buffer.to_string(),
            "buffer_packets" => self.buffer_packets.to_string(),
            "self_transition" => self.self_transition.to_string(),
            "controllers" => self
                .controllers
                .iter()
                .map(Policy::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "seed" => self.seed.to_string(),
            "realized_goodput" => self.realized_goodput.to_string(),
            "preroll_factor" => self.preroll_factor.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", lineno + 1), format!("expected `key = value`, got `{line}`"))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_text(&text)
    }

    pub fn channel(&self) -> Result<ChannelParams> {
        ChannelParams::from_mean_snr_db(self.mean_snr_db, self.alpha, self.p)
    }

    pub fn rate_set(&self) -> Result<RateSet> {
        let side = (self.max_constellation as f64).sqrt().round() as u32;
        if side < 2 || side * side != self.max_constellation {
            return Err(Error::config(
                "max_constellation",
                format!("{} is not a square of at least 4", self.max_constellation),
            ));
        }
        RateSet::squares(side, self.p)
    }

    /// Channel steps simulated before packet 0.
    pub fn preroll(&self) -> usize {
        (self.preroll_factor * (1.0 / self.alpha).clamp(1e2, 1e4)).round() as usize
    }

    pub fn blocks(&self) -> usize {
        self.horizon.div_ceil(self.n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.channel()?;
        self.rate_set()?;
        self.grid.validate()?;
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.realizations == 0 {
            return Err(Error::config("realizations", "must be at least 1"));
        }
        if self.n == 0 {
            return Err(Error::config("n", "block size must be at least 1"));
        }
        if self.d == 0 {
            return Err(Error::config("d", "feedback delay must be at least 1"));
        }
        if self.controllers.is_empty() {
            return Err(Error::config("controllers", "no controllers configured"));
        }
        if !(0.0..=1.0).contains(&self.self_transition) {
            return Err(Error::config("self_transition", "must lie in [0, 1]"));
        }
        if self.buffer && self.buffer_packets == 0 {
            return Err(Error::config("buffer_packets", "must be at least 1"));
        }
        if !(self.preroll_factor > 0.0) {
            return Err(Error::config("preroll_factor", "must be positive"));
        }
        let lag = self.n as usize * self.d;
        if lag > self.preroll() {
            return Err(Error::config(
                "d",
                format!("n·d = {lag} packets of history exceed the {}-step pre-roll", self.preroll()),
            ));
        }
        if lag >= self.horizon {
            warn!("n·d = {lag} is not below the horizon; no feedback arrives within a realization");
        }
        Ok(())
    }
}

/// Parameter swept by [`run_experiment`](super::run_experiment).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    MeanSnrDb,
    Alpha,
    Delay,
    Block,
    /// Quantizer levels of the quantized genie.
    Levels,
}

impl SweepParam {
    pub fn apply(&self, config: &mut SimConfig, value: f64) -> Result<()> {
        let whole = |key: &str| -> Result<u64> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as u64)
            } else {
                Err(Error::config(key, format!("sweep value {value} must be a positive integer")))
            }
        };
        match self {
            SweepParam::MeanSnrDb => config.mean_snr_db = value,
            SweepParam::Alpha => config.alpha = value,
            SweepParam::Delay => config.d = whole("d")? as usize,
            SweepParam::Block => config.n = whole("n")?,
            SweepParam::Levels => {
                let levels = whole("levels")? as usize;
                config.controllers.retain(|p| !matches!(p, Policy::QuantizedGenie(_)));
                config.controllers.push(Policy::QuantizedGenie(levels));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::MeanSnrDb => "mean_snr_db",
            SweepParam::Alpha => "alpha",
            SweepParam::Delay => "d",
            SweepParam::Block => "n",
            SweepParam::Levels => "levels",
        })
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mean_snr_db" => Ok(SweepParam::MeanSnrDb),
            "alpha" => Ok(SweepParam::Alpha),
            "d" => Ok(SweepParam::Delay),
            "n" => Ok(SweepParam::Block),
            "levels" | "L" => Ok(SweepParam::Levels),
            other => Err(Error::config("sweep", format!("cannot sweep `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl Sweep {
    /// `values` is a comma-separated list.
    pub fn parse(param: &str, values: &str) -> Result<Self> {
        let values = values
            .split(',')
            .map(|v| parse::<f64>("values", v))
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(Error::config("values", "sweep needs at least one value"));
        }
        Ok(Self {
            param: param.parse()?,
            values,
        })
    }
}
