//! Scenario files.
//!
//! A run is described by one TOML file:
//!
//! ```toml
//! [scenario]
//! topology = "su_miso"        # su_miso | su_mimo | mu_miso | mu_mimo
//! n_bs = 9
//! users = [1]
//! spacing_bs = 0.35           # wavelengths
//! spacing_ue = 0.35           # optional, defaults to spacing_bs
//! sigma_z = 0.019085          # optional, ohms
//! n_realizations = 1000       # optional
//! seed = 1                    # optional
//! strategies = ["cap", "recip", "hyp"]   # optional
//! channel_file = "z21.csv"    # optional, replaces the i.i.d. sampler
//! z_g = [73.08, 0.0]          # optional generator impedance (re, im) in ohms
//! z_l = [73.08, 0.0]          # optional load impedance
//!
//! [power]                     # either an explicit list ...
//! dbw = [-100.0, -90.0]
//! # ... or a uniform grid
//! start_dbw = -100.0
//! stop_dbw = -50.0
//! points = 11
//!
//! [noise]                     # all optional
//! t_a = 290.0
//! delta_f = 740e3
//! noise_resistance = 5.0      # or sigma_u (V) directly
//! noise_conductance = 2e-3    # or sigma_i (A) directly
//! rho = [0.0, 0.0]
//!
//! [uplink_noise]              # optional, same keys as [noise]
//!
//! [output]                    # all optional
//! dir = "results"
//! emit = ["rates_csv", "alpha_csv", "streams_csv", "kde_csv", "per_realization_json"]
//! threads = 4
//! ```

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::NoiseConfig;
use crate::em_arrays::dipole_self_impedance;
use crate::io::read_channel_file;
use crate::montecarlo::{dbw_to_watts, Scenario, Topology, DEFAULT_SIGMA_Z};
use crate::strategies::{MacOptions, Strategy};
use crate::{Error, Result};

/// Default output directory when neither the file nor the caller sets one.
pub const DEFAULT_OUTPUT_DIR: &str = "results";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emit {
    RatesCsv,
    AlphaCsv,
    StreamsCsv,
    KdeCsv,
    PerRealizationJson,
}

impl Emit {
    pub const DEFAULT: [Emit; 4] = [Emit::RatesCsv, Emit::AlphaCsv, Emit::StreamsCsv, Emit::KdeCsv];

    pub fn file_name(self) -> &'static str {
        match self {
            Emit::RatesCsv => "rates.csv",
            Emit::AlphaCsv => "alpha.csv",
            Emit::StreamsCsv => "streams.csv",
            Emit::KdeCsv => "kde.csv",
            Emit::PerRealizationJson => "per_realization.json",
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    topology: String,
    n_bs: usize,
    users: Vec<usize>,
    spacing_bs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    spacing_ue: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_realizations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    strategies: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    channel_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    z_g: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    z_l: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPower {
    #[serde(skip_serializing_if = "Option::is_none")]
    dbw: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    start_dbw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stop_dbw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    points: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    #[serde(skip_serializing_if = "Option::is_none")]
    t_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_resistance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_conductance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_i: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    emit: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: RawScenario,
    #[serde(default)]
    power: RawPower,
    #[serde(default)]
    noise: RawNoise,
    #[serde(skip_serializing_if = "Option::is_none")]
    uplink_noise: Option<RawNoise>,
    #[serde(default)]
    output: RawOutput,
}

/// A validated run description.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    /// Power grid in dBW, the values the scenario's watts were derived from.
    pub power_dbw: Vec<f64>,
    pub output_dir: PathBuf,
    pub emit: Vec<Emit>,
    pub threads: Option<usize>,
    effective: RawConfig,
}

impl RunConfig {
    /// TOML text with every default made explicit; loading it yields the
    /// same run.
    pub fn effective_toml(&self) -> String {
        toml::to_string(&self.effective).expect("configuration is serializable")
    }
}

/// Line (1-based) of `key` inside `[section]`, if present.
fn line_of(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            current = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if key.is_empty() && current == section {
                return Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some(rest) = t.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn line_at_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, section: &str, key: &str, msg: impl Into<String>) -> Error {
        let line = line_of(self.text, section, key).or_else(|| line_of(self.text, section, ""));
        Error::config(line, format!("{section}.{key}: {}", msg.into()))
    }
}

fn build_noise(ctx: &Ctx, section: &str, raw: &RawNoise) -> Result<(NoiseConfig, RawNoise)> {
    let d = NoiseConfig::default();
    let t_a = raw.t_a.unwrap_or(d.t_a);
    let delta_f = raw.delta_f.unwrap_or(d.delta_f);
    if raw.sigma_u.is_some() && raw.noise_resistance.is_some() {
        return Err(ctx.err(section, "sigma_u", "give either sigma_u or noise_resistance"));
    }
    if raw.sigma_i.is_some() && raw.noise_conductance.is_some() {
        return Err(ctx.err(section, "sigma_i", "give either sigma_i or noise_conductance"));
    }
    for (key, v) in [("t_a", t_a), ("delta_f", delta_f)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(ctx.err(section, key, format!("must be positive, got {v}")));
        }
    }
    let rho = raw.rho.map_or(d.rho, |[re, im]| Complex64::new(re, im));
    let lna = NoiseConfig::from_lna(
        t_a,
        delta_f,
        raw.noise_resistance.unwrap_or(5.0),
        raw.noise_conductance.unwrap_or(2e-3),
        rho,
    );
    let noise = NoiseConfig {
        sigma_u: raw.sigma_u.unwrap_or(lna.sigma_u),
        sigma_i: raw.sigma_i.unwrap_or(lna.sigma_i),
        ..lna
    };
    noise.validate().map_err(|e| {
        let key = match &e {
            Error::Domain(m) if m.starts_with("sigma_u") => "sigma_u",
            Error::Domain(m) if m.starts_with("sigma_i") => "sigma_i",
            _ => "rho",
        };
        ctx.err(section, key, e.to_string())
    })?;
    let effective = RawNoise {
        t_a: Some(t_a),
        delta_f: Some(delta_f),
        noise_resistance: None,
        noise_conductance: None,
        sigma_u: Some(noise.sigma_u),
        sigma_i: Some(noise.sigma_i),
        rho: Some([rho.re, rho.im]),
    };
    Ok((noise, effective))
}

fn build_power(ctx: &Ctx, raw: &RawPower) -> Result<Vec<f64>> {
    let dbw = match (&raw.dbw, raw.start_dbw, raw.stop_dbw, raw.points) {
        (Some(list), None, None, None) => list.clone(),
        (Some(_), ..) => {
            return Err(ctx.err("power", "dbw", "give either dbw or start_dbw/stop_dbw/points"))
        }
        (None, start, stop, points) => {
            let start = start.unwrap_or(-100.0);
            let stop = stop.unwrap_or(-50.0);
            let points = points.unwrap_or(11);
            if points == 0 {
                return Err(ctx.err("power", "points", "must be at least 1"));
            }
            dbw_grid(start, stop, points)
        }
    };
    if dbw.is_empty() {
        return Err(ctx.err("power", "dbw", "power grid is empty"));
    }
    if dbw.iter().any(|v| !v.is_finite()) || dbw.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ctx.err("power", "dbw", "powers must be finite and strictly increasing"));
    }
    Ok(dbw)
}

/// `points` values evenly spaced from `start` to `stop` dBW.
pub fn dbw_grid(start: f64, stop: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![start];
    }
    (0..points)
        .map(|i| start + (stop - start) * i as f64 / (points - 1) as f64)
        .collect()
}

fn default_strategies(topology: Topology) -> Vec<Strategy> {
    if topology.is_multi_user() {
        vec![
            Strategy::Cap,
            Strategy::Hyp,
            Strategy::CapLin,
            Strategy::RecipLin,
            Strategy::HypLin,
        ]
    } else {
        vec![Strategy::Cap, Strategy::Recip, Strategy::Hyp]
    }
}

/// Parses and validates a configuration. Relative paths are resolved against
/// `base_dir`; `default_output_dir` applies when `[output] dir` is absent.
pub fn parse_config(text: &str, base_dir: &Path, default_output_dir: Option<&Path>) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_at_offset(text, s.start));
        Error::config(line, e.message().trim().to_string())
    })?;
    let ctx = Ctx { text };
    let rs = &raw.scenario;

    let topology = Topology::parse(&rs.topology).ok_or_else(|| {
        ctx.err(
            "scenario",
            "topology",
            format!("unknown topology {:?}; expected su_miso, su_mimo, mu_miso or mu_mimo", rs.topology),
        )
    })?;
    let strategies = match &rs.strategies {
        None => default_strategies(topology),
        Some(names) => names
            .iter()
            .map(|n| {
                Strategy::parse(n)
                    .ok_or_else(|| ctx.err("scenario", "strategies", format!("unknown strategy {n:?}")))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let power_dbw = build_power(&ctx, &raw.power)?;
    let (noise, noise_eff) = build_noise(&ctx, "noise", &raw.noise)?;
    let uplink = raw
        .uplink_noise
        .as_ref()
        .map(|u| build_noise(&ctx, "uplink_noise", u))
        .transpose()?;

    let term = dipole_self_impedance().re;
    let to_c = |v: Option<[f64; 2]>| v.map_or(Complex64::new(term, 0.0), |[re, im]| Complex64::new(re, im));
    let channel_path = rs.channel_file.as_ref().map(|f| base_dir.join(f));
    let imported = match &channel_path {
        Some(p) => Some(
            read_channel_file(p)
                .map_err(|e| ctx.err("scenario", "channel_file", format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    let n_realizations = match (&imported, rs.n_realizations) {
        (Some(z), None) => z.len(),
        (_, Some(n)) => n,
        (None, None) => 1000,
    };

    let mut scenario = Scenario::new(topology, rs.n_bs, rs.users.clone(), rs.spacing_bs);
    scenario.spacing_ue = rs.spacing_ue.unwrap_or(rs.spacing_bs);
    scenario.sigma_z = rs.sigma_z.unwrap_or(DEFAULT_SIGMA_Z);
    scenario.power_grid = power_dbw.iter().map(|&d| dbw_to_watts(d)).collect();
    scenario.n_realizations = n_realizations;
    scenario.seed = rs.seed.unwrap_or(1);
    scenario.noise = noise;
    scenario.uplink_noise = uplink.as_ref().map(|(n, _)| *n);
    scenario.z_g = to_c(rs.z_g);
    scenario.z_l = to_c(rs.z_l);
    scenario.strategies = strategies.clone();
    scenario.imported_z21 = imported;
    scenario.mac_options = MacOptions::default();
    scenario.validate().map_err(|e| {
        let msg = e.to_string();
        let key = [
            ("strateg", "strategies"),
            ("base station", "n_bs"),
            ("user", "users"),
            ("spacing", "spacing_bs"),
            ("sigma_z", "sigma_z"),
            ("n_realizations", "n_realizations"),
            ("imported", "n_realizations"),
            ("termination", "z_g"),
        ]
        .iter()
        .find(|(needle, _)| msg.contains(needle))
        .map_or("topology", |(_, k)| k);
        ctx.err("scenario", key, msg)
    })?;

    let emit = match &raw.output.emit {
        None => Emit::DEFAULT.to_vec(),
        Some(names) => {
            let mut out = Vec::new();
            for n in names {
                let e: Emit = serde_json::from_value(serde_json::Value::String(n.clone()))
                    .map_err(|_| ctx.err("output", "emit", format!("unknown output {n:?}")))?;
                if !out.contains(&e) {
                    out.push(e);
                }
            }
            if out.is_empty() {
                return Err(ctx.err("output", "emit", "at least one output is required"));
            }
            out
        }
    };
    if raw.output.threads == Some(0) {
        return Err(ctx.err("output", "threads", "must be positive"));
    }
    let output_dir = match &raw.output.dir {
        Some(d) => base_dir.join(d),
        None => default_output_dir
            .map(Path::to_path_buf)
            .unwrap_or_else(|| base_dir.join(DEFAULT_OUTPUT_DIR)),
    };

    let effective = RawConfig {
        scenario: RawScenario {
            topology: topology.name().to_string(),
            n_bs: scenario.n_bs,
            users: scenario.users.clone(),
            spacing_bs: scenario.spacing_bs,
            spacing_ue: Some(scenario.spacing_ue),
            sigma_z: Some(scenario.sigma_z),
            n_realizations: Some(scenario.n_realizations),
            seed: Some(scenario.seed),
            strategies: Some(strategies.iter().map(|s| s.name().to_string()).collect()),
            channel_file: channel_path.map(|p| absolute(&p).display().to_string()),
            z_g: Some([scenario.z_g.re, scenario.z_g.im]),
            z_l: Some([scenario.z_l.re, scenario.z_l.im]),
        },
        power: RawPower {
            dbw: Some(power_dbw.clone()),
            ..RawPower::default()
        },
        noise: noise_eff,
        uplink_noise: uplink.map(|(_, raw)| raw),
        output: RawOutput {
            dir: Some(absolute(&output_dir).display().to_string()),
            emit: Some(
                emit.iter()
                    .map(|e| serde_json::to_value(e).unwrap().as_str().unwrap().to_string())
                    .collect(),
            ),
            threads: raw.output.threads,
        },
    };
    Ok(RunConfig {
        scenario,
        power_dbw,
        output_dir,
        emit,
        threads: raw.output.threads,
        effective,
    })
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path, default_output_dir: Option<&Path>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config(&text, base, default_output_dir)
}
