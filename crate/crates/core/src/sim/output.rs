use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::RateSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub controller: String,
    pub goodput_bits_per_symbol: f64,
    pub goodput_stderr: f64,
    pub occupancy_mean: Option<f64>,
    pub drop_fraction: Option<f64>,
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Writes the results table; `None` writes to standard output.
pub fn write_results(rows: &[ResultRow], path: Option<&Path>) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Domain("no results to write".into()));
    }
    match path {
        Some(p) => write_rows(rows, std::fs::File::create(p).map_err(io_error(p))?),
        None => write_rows(rows, std::io::stdout().lock()),
    }
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let file = std::fs::File::open(path).map_err(io_error(path))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Instantaneous goodput of one constellation at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub snr_db: f64,
    pub constellation: u32,
    pub goodput_bits_per_symbol: f64,
    pub best: bool,
}

/// Static goodput-versus-SNR curves of every rate.
pub fn goodput_curves(rates: &RateSet, snr_db: &[f64]) -> Vec<CurveRow> {
    let symbols = rates.symbols_per_packet() as f64;
    snr_db
        .iter()
        .flat_map(|&db| {
            let snr = crate::channel::db_to_linear(db);
            let best = crate::phy::best_rate_at_snr(rates, snr);
            (0..rates.len()).map(move |k| CurveRow {
                snr_db: db,
                constellation: rates.constellation(k),
                goodput_bits_per_symbol: rates.goodput(k, snr) / symbols,
                best: k == best,
            })
        })
        .collect()
}

pub fn write_curves(rows: &[CurveRow], path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => write_rows(rows, std::fs::File::create(p).map_err(io_error(p))?),
        None => write_rows(rows, std::io::stdout().lock()),
    }
}
