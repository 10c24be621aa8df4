//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Arg, ArgAction, ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand, ValueEnum};
use log::info;

use crate::channel::quantized_transition_matrix;
use crate::channel::{lloyd_max_quantize, SnrGrid};
use crate::error::{Error, Result};
use crate::sim::{
    goodput_curves, result_rows, run_cell, run_experiment, write_curves, write_results, SimConfig, Sweep, SweepParam,
    CONFIG_KEYS,
};
use crate::validate::{validate_kernel, KernelVariant, L1_THRESHOLD};

/// `--key=value` overrides for every configuration key, in command-line order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub config: Option<PathBuf>,
    pub pairs: Vec<(String, String)>,
}

impl FromArgMatches for ConfigOverrides {
    fn from_arg_matches(matches: &ArgMatches) -> std::result::Result<Self, clap::Error> {
        let mut out = Self::default();
        out.update_from_arg_matches(matches)?;
        Ok(out)
    }

    fn update_from_arg_matches(&mut self, matches: &ArgMatches) -> std::result::Result<(), clap::Error> {
        if let Some(p) = matches.get_one::<PathBuf>("config") {
            self.config = Some(p.clone());
        }
        let mut indexed = Vec::new();
        for (key, _) in CONFIG_KEYS {
            if let (Some(values), Some(indices)) = (matches.get_many::<String>(key), matches.indices_of(key)) {
                for (v, i) in values.zip(indices) {
                    indexed.push((i, key.to_string(), v.clone()));
                }
            }
        }
        indexed.sort_by_key(|(i, _, _)| *i);
        self.pairs.extend(indexed.into_iter().map(|(_, k, v)| (k, v)));
        Ok(())
    }
}

impl Args for ConfigOverrides {
    fn augment_args(cmd: Command) -> Command {
        let defaults = SimConfig::default();
        let cmd = cmd.arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .value_parser(clap::value_parser!(PathBuf))
                .help("flat `key = value` file; flags given here override it"),
        );
        CONFIG_KEYS.iter().fold(cmd, |cmd, (key, help)| {
            let default = defaults.get(key).expect("every key has a default");
            cmd.arg(
                Arg::new(*key)
                    .long(*key)
                    .value_name("VALUE")
                    .action(ArgAction::Append)
                    .help(format!("{help} [default: {default}]")),
            )
        })
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// Static goodput-versus-SNR curves of every constellation (no simulation)
    Fig2,
    /// Goodput versus mean SNR, alpha = 0.01
    Fig3,
    /// Goodput versus alpha at 25 dB
    Fig4,
    /// Goodput versus feedback delay d, alpha = 0.001, with quantized genies
    Fig5,
    /// Goodput versus block size n, alpha = 0.001
    Fig6,
    /// Buffer occupancy versus alpha (Markov arrivals, 30-packet buffer)
    Fig7,
    /// Drop fraction versus alpha (same runs as fig7)
    Fig8,
    /// Goodput versus alpha with the finite buffer (same runs as fig7)
    Fig9,
}

const ALPHA_SWEEP: &[f64] = &[1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1];

impl Figure {
    /// Base configuration and sweep of the preset; `None` sweep for fig2.
    pub fn preset(self) -> (SimConfig, Option<Sweep>) {
        use crate::controllers::Policy::*;
        let mut c = SimConfig::default();
        let sweep = |param, values: &[f64]| {
            Some(Sweep {
                param,
                values: values.to_vec(),
            })
        };
        match self {
            Figure::Fig2 => (c, None),
            Figure::Fig3 => {
                c.alpha = 0.01;
                let snrs: Vec<f64> = (0..=8).map(|k| 5.0 * k as f64).collect();
                (c, sweep(SweepParam::MeanSnrDb, &snrs))
            }
            Figure::Fig4 => (c, sweep(SweepParam::Alpha, ALPHA_SWEEP)),
            Figure::Fig5 => {
                c.realizations = 500;
                c.controllers = vec![
                    Fixed,
                    Greedy,
                    CausalGenie,
                    NoncausalGenie,
                    QuantizedGenie(2),
                    QuantizedGenie(4),
                    QuantizedGenie(7),
                ];
                let ds = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0];
                (c, sweep(SweepParam::Delay, &ds))
            }
            Figure::Fig6 => {
                c.realizations = 500;
                (c, sweep(SweepParam::Block, &[1.0, 2.0, 5.0, 10.0, 20.0, 50.0]))
            }
            Figure::Fig7 | Figure::Fig8 | Figure::Fig9 => {
                c.buffer = true;
                c.horizon = 1000;
                (c, sweep(SweepParam::Alpha, ALPHA_SWEEP))
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "linkadapt",
    version,
    about = "Rate adaptation over a Gauss-Markov Rayleigh channel with delayed ACK/NAK feedback",
    after_help = "Figure presets: fig2 fig3 fig4 fig5 fig6 fig7 fig8 fig9 (see `linkadapt figure --help`).\n\
                  Exit status: 0 success, 1 runtime failure, 2 invalid configuration."
)]
pub struct Cli {
    /// Worker threads for the Monte Carlo loop (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Commands,
}

#[derive(Debug, Subcommand)]
pub enum Commands {
    /// Simulate one configuration
    Run {
        #[command(flatten)]
        overrides: ConfigOverrides,
        /// CSV destination (standard output if omitted)
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Simulate one configuration per value of a swept parameter
    Sweep {
        /// mean_snr_db, alpha, d, n or levels
        #[arg(long)]
        param: String,
        /// Comma-separated values
        #[arg(long)]
        values: String,
        #[command(flatten)]
        overrides: ConfigOverrides,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Reproduce a figure with its preset parameters
    Figure {
        #[arg(value_enum)]
        figure: Figure,
        #[command(flatten)]
        overrides: ConfigOverrides,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Compare the closed-form lag kernel with simulated transitions
    ValidateKernel {
        /// Comma-separated fading rates
        #[arg(long, default_value = "0.001,0.01,0.1")]
        alphas: String,
        /// Comma-separated lags
        #[arg(long, default_value = "1,10")]
        lags: String,
        /// Simulated transitions per (alpha, lag) pair
        #[arg(long, default_value_t = 1_000_000)]
        transitions: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Compare against the kernel without its Bessel factor (must fail)
        #[arg(long)]
        negative_control: bool,
    },
    /// Print the Lloyd-Max quantizer and its transition matrix
    Quantize {
        /// Number of cells
        #[arg(long)]
        levels: usize,
        /// Transition lag in packets
        #[arg(long, default_value_t = 1)]
        lag: u64,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
}

/// Defaults, then the file, then flags.
pub fn build_config(base: SimConfig, overrides: &ConfigOverrides) -> Result<SimConfig> {
    let mut config = base;
    if let Some(path) = &overrides.config {
        config.apply_file(path)?;
    }
    for (k, v) in &overrides.pairs {
        config.set(k, v)?;
    }
    config.validate()?;
    Ok(config)
}

fn parse_list<T: std::str::FromStr>(key: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::config(key, format!("cannot parse `{v}`")))
        })
        .collect()
}

fn simulate(config: &SimConfig, sweep: Option<&Sweep>, output: Option<&PathBuf>) -> Result<()> {
    let cells = match sweep {
        Some(s) => run_experiment(config, s)?,
        None => vec![run_cell(config, 0.0)?],
    };
    write_results(&result_rows(&cells), output.map(|p| p.as_path()))?;
    if let Some(p) = output {
        info!("wrote {}", p.display());
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match cli.command {
        Commands::Run { overrides, output } => {
            let config = build_config(SimConfig::default(), &overrides)?;
            simulate(&config, None, output.as_ref())
        }
        Commands::Sweep {
            param,
            values,
            overrides,
            output,
        } => {
            let sweep = Sweep::parse(&param, &values)?;
            let config = build_config(SimConfig::default(), &overrides)?;
            simulate(&config, Some(&sweep), output.as_ref())
        }
        Commands::Figure {
            figure,
            overrides,
            output,
        } => {
            let (base, sweep) = figure.preset();
            let config = build_config(base, &overrides)?;
            match sweep {
                Some(s) => simulate(&config, Some(&s), output.as_ref()),
                None => {
                    let snr_db: Vec<f64> = (0..=90).map(|k| -5.0 + 0.5 * k as f64).collect();
                    write_curves(&goodput_curves(&config.rate_set()?, &snr_db), output.as_deref())
                }
            }
        }
        Commands::ValidateKernel {
            alphas,
            lags,
            transitions,
            seed,
            negative_control,
        } => {
            let variant = if negative_control {
                KernelVariant::WithoutBessel
            } else {
                KernelVariant::ClosedForm
            };
            let mut all_passed = true;
            println!("alpha,lag,transitions,max_l1,threshold,result");
            for alpha in parse_list::<f64>("alphas", &alphas)? {
                for lag in parse_list::<u64>("lags", &lags)? {
                    let params = crate::channel::ChannelParams::from_mean_snr_db(25.0, alpha, 100)?;
                    let report = validate_kernel(&params, lag, transitions, seed, variant)?;
                    all_passed &= report.passed();
                    println!(
                        "{alpha},{lag},{},{:.5},{L1_THRESHOLD},{}",
                        report.transitions(),
                        report.max_l1(),
                        if report.passed() { "pass" } else { "fail" }
                    );
                }
            }
            if all_passed {
                Ok(())
            } else {
                Err(Error::Domain("kernel validation failed".into()))
            }
        }
        Commands::Quantize {
            levels,
            lag,
            overrides,
        } => {
            let config = build_config(SimConfig::default(), &overrides)?;
            let params = config.channel()?;
            let grid = SnrGrid::new(&config.grid, params.mean_snr())?;
            let qc = lloyd_max_quantize(&params, levels)?;
            let qc = quantized_transition_matrix(&qc, &params, lag, &grid)?;
            println!("cell,lower,upper,representative,mass");
            for (i, m) in qc.cell_masses().iter().enumerate() {
                println!(
                    "{i},{},{},{},{m}",
                    qc.boundaries[i],
                    qc.boundaries[i + 1],
                    qc.representatives[i]
                );
            }
            println!();
            for i in 0..qc.levels() {
                let row = qc.transition_row(i).expect("matrix filled");
                println!("{}", row.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(","));
            }
            Ok(())
        }
    }
}

/// Exit status for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => 2,
        _ => 1,
    }
}

/// Parses `args` and runs; returns the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
