//! Result tables, impedance dumps and channel import.
//!
//! Numbers are written with Rust's shortest round-trip float formatting
//! (integral values print without a fractional part); lines end in `\n`.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::montecarlo::{watts_to_dbw, RealizationRecord, Scenario, ScenarioResult};
use crate::{CMat, Error, Result};

/// `rates.csv`: one row per power point, one column per strategy.
pub fn rates_csv(result: &ScenarioResult) -> String {
    let mut out = String::from("# P_dBW in dBW; rates in bits/use\nP_dBW");
    for s in &result.strategies {
        out.push(',');
        out.push_str(s.rate_column());
    }
    out.push('\n');
    for (p, &w) in result.power_grid.iter().enumerate() {
        write!(out, "{}", watts_to_dbw(w)).unwrap();
        for rates in &result.ergodic_rates {
            write!(out, ",{}", rates[p]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// `streams.csv`: mean number of active streams.
pub fn streams_csv(result: &ScenarioResult) -> String {
    let mut out = String::from("# P_dBW in dBW; mean active streams per realization\nP_dBW");
    for s in &result.strategies {
        write!(out, ",streams_{}", s.name()).unwrap();
    }
    out.push('\n');
    for (p, &w) in result.power_grid.iter().enumerate() {
        write!(out, "{}", watts_to_dbw(w)).unwrap();
        for streams in &result.active_streams_avg {
            write!(out, ",{}", streams[p]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// `alpha.csv`: every α sample in long format.
pub fn alpha_csv(result: &ScenarioResult) -> String {
    let mut out = String::from("# P_dBW in dBW; alpha dimensionless\nP_dBW,strategy,realization,alpha\n");
    for a in &result.alpha {
        for (p, samples) in a.samples.iter().enumerate() {
            let dbw = watts_to_dbw(result.power_grid[p]);
            for (r, v) in samples.iter().enumerate() {
                writeln!(out, "{dbw},{},{},{v}", a.strategy.name(), result.records[r].index).unwrap();
            }
        }
    }
    out
}

/// `kde.csv`: α densities per strategy and power point. Power points whose
/// samples all coincide are omitted.
pub fn kde_csv(result: &ScenarioResult) -> String {
    let mut out = String::from("# P_dBW in dBW; density in 1/alpha\nP_dBW,strategy,alpha,density\n");
    for a in &result.alpha {
        for (p, density) in a.density.iter().enumerate() {
            let Some(k) = density else { continue };
            let dbw = watts_to_dbw(result.power_grid[p]);
            for (x, d) in k.grid.iter().zip(&k.density) {
                writeln!(out, "{dbw},{},{x},{d}", a.strategy.name()).unwrap();
            }
        }
    }
    out
}

/// Standalone density table as written by the `kde` command.
pub fn density_csv(grid: &[f64], density: &[f64]) -> String {
    let mut out = String::from("x,density\n");
    for (x, d) in grid.iter().zip(density) {
        writeln!(out, "{x},{d}").unwrap();
    }
    out
}

#[derive(Serialize)]
struct RealizationLog<'a> {
    topology: &'static str,
    n_bs: usize,
    users: &'a [usize],
    seed: u64,
    power_dbw: Vec<f64>,
    failures: usize,
    realizations: &'a [RealizationRecord],
}

/// `per_realization.json`: every rate, stream count and α of every realization.
pub fn per_realization_json(scenario: &Scenario, result: &ScenarioResult) -> String {
    let log = RealizationLog {
        topology: scenario.topology.name(),
        n_bs: scenario.n_bs,
        users: &scenario.users,
        seed: scenario.seed,
        power_dbw: result.power_grid.iter().map(|&w| watts_to_dbw(w)).collect(),
        failures: result.failures,
        realizations: &result.records,
    };
    let mut s = serde_json::to_string_pretty(&log).expect("records are serializable");
    s.push('\n');
    s
}

/// Matrix as CSV with columns `re_1,im_1,…,re_n,im_n`.
pub fn matrix_csv(m: &CMat) -> String {
    let mut out = String::new();
    for j in 0..m.ncols() {
        if j > 0 {
            out.push(',');
        }
        write!(out, "re_{0},im_{0}", j + 1).unwrap();
    }
    out.push('\n');
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{},{}", m[(i, j)].re, m[(i, j)].im).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Reals, one per line; blank lines are skipped.
pub fn parse_samples(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {}: {:?} is not a number", i + 1, l.trim())))
        })
        .collect()
}

#[derive(Deserialize)]
struct JsonChannel {
    realization: usize,
    m: usize,
    n: usize,
    z21: Vec<Vec<[f64; 2]>>,
}

/// `Z₂₁` realizations from CSV or JSON, ordered by realization index.
///
/// CSV: per realization a header line `realization,M,N` followed by `M` rows
/// of `2N` numbers `re,im,re,im,…`. Lines starting with `#` are ignored.
///
/// JSON: `[{"realization": 0, "m": 2, "n": 3, "z21": [[[re, im], …], …]}, …]`.
pub fn parse_channels(text: &str, json: bool) -> Result<Vec<CMat>> {
    let mut items = if json { parse_channels_json(text)? } else { parse_channels_csv(text)? };
    if items.is_empty() {
        return Err(Error::Parse("no channel realizations found".into()));
    }
    items.sort_by_key(|(i, _)| *i);
    if items.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Parse("duplicate realization index".into()));
    }
    Ok(items.into_iter().map(|(_, m)| m).collect())
}

fn parse_channels_json(text: &str) -> Result<Vec<(usize, CMat)>> {
    let raw: Vec<JsonChannel> =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("channel JSON: {e}")))?;
    raw.into_iter()
        .map(|c| {
            if c.z21.len() != c.m || c.z21.iter().any(|r| r.len() != c.n) {
                return Err(Error::Parse(format!(
                    "realization {}: z21 does not have {}×{} entries",
                    c.realization, c.m, c.n
                )));
            }
            let m = CMat::from_fn(c.m, c.n, |i, j| Complex64::new(c.z21[i][j][0], c.z21[i][j][1]));
            Ok((c.realization, m))
        })
        .collect()
}

fn parse_channels_csv(text: &str) -> Result<Vec<(usize, CMat)>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let numbers = |no: usize, l: &str| -> Result<Vec<f64>> {
        l.split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: {:?} is not a number", no + 1, v.trim())))
            })
            .collect()
    };
    let mut out = Vec::new();
    while let Some((no, header)) = lines.next() {
        let h = numbers(no, header)?;
        if h.len() != 3 || h.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
            return Err(Error::Parse(format!(
                "line {}: expected header `realization,M,N`",
                no + 1
            )));
        }
        let (idx, m, n) = (h[0] as usize, h[1] as usize, h[2] as usize);
        let mut z = CMat::zeros(m, n);
        for i in 0..m {
            let (rno, row) = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("realization {idx}: missing row {}", i + 1)))?;
            let vals = numbers(rno, row)?;
            if vals.len() != 2 * n {
                return Err(Error::Parse(format!(
                    "line {}: expected {} numbers, found {}",
                    rno + 1,
                    2 * n,
                    vals.len()
                )));
            }
            for j in 0..n {
                z[(i, j)] = Complex64::new(vals[2 * j], vals[2 * j + 1]);
            }
        }
        out.push((idx, z));
    }
    Ok(out)
}

/// Reads a channel file; `.json` selects the JSON layout, anything else CSV.
pub fn read_channel_file(path: &Path) -> Result<Vec<CMat>> {
    let text = std::fs::read_to_string(path)?;
    let json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    parse_channels(&text, json)
}

/// Writes realizations in the CSV layout accepted by [`parse_channels`].
pub fn channels_csv(channels: &[CMat]) -> String {
    let mut out = String::new();
    for (idx, z) in channels.iter().enumerate() {
        writeln!(out, "{idx},{},{}", z.nrows(), z.ncols()).unwrap();
        for i in 0..z.nrows() {
            let row: Vec<String> = (0..z.ncols())
                .map(|j| format!("{},{}", z[(i, j)].re, z[(i, j)].im))
                .collect();
            writeln!(out, "{}", row.join(",")).unwrap();
        }
    }
    out
}
