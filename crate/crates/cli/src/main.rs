use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coupled_mimo::config::{load_config, Emit, RunConfig};
use coupled_mimo::em_arrays::{array_impedance_matrix, dipole_self_impedance, ArrayGeometry};
use coupled_mimo::io;
use coupled_mimo::montecarlo::{kde, run_scenario, run_scenario_with_threads, ScenarioResult, KDE_POINTS};
use coupled_mimo::Error;

/// Environment variable naming the output directory of configs without `[output] dir`.
const OUT_ENV: &str = "COUPLED_MIMO_OUT";

const EXIT_INVALID: u8 = 2;
const EXIT_ABORTED: u8 = 3;

#[derive(Parser)]
#[command(name = "coupled-mimo", version, about = "MIMO rates with mutually coupled antenna arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo scenario described by a TOML file.
    Run { config: PathBuf },
    /// Print the impedance matrix of an N-element UCA of half-wave dipoles.
    DumpImpedance {
        #[arg(long)]
        n: usize,
        /// Neighbor spacing in wavelengths.
        #[arg(long)]
        d: f64,
    },
    /// Gaussian kernel density of one real per line.
    Kde { input: PathBuf, output: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::DumpImpedance { n, d } => cmd_dump_impedance(n, d),
        Command::Kde { input, output } => cmd_kde(&input, &output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

type CmdResult = Result<(), (u8, String)>;

fn invalid(e: impl std::fmt::Display) -> (u8, String) {
    (EXIT_INVALID, e.to_string())
}

fn cmd_run(path: &Path) -> CmdResult {
    let default_out = std::env::var_os(OUT_ENV).map(PathBuf::from);
    let cfg = load_config(path, default_out.as_deref()).map_err(|e| match e {
        Error::Io(io) => invalid(format!("{}: {io}", path.display())),
        other => invalid(other),
    })?;
    let result = match cfg.threads {
        Some(t) => run_scenario_with_threads(&cfg.scenario, t),
        None => run_scenario(&cfg.scenario),
    }
    .map_err(|e| (EXIT_ABORTED, e.to_string()))?;
    print_summary(&cfg, &result);
    write_outputs(&cfg, &result).map_err(|e| (EXIT_ABORTED, e))?;
    Ok(())
}

fn print_summary(cfg: &RunConfig, result: &ScenarioResult) {
    for (p, dbw) in cfg.power_dbw.iter().enumerate() {
        let mut line = format!("P = {dbw} dBW:");
        for (s, strategy) in result.strategies.iter().enumerate() {
            line.push_str(&format!(" {}={:.4}", strategy.rate_column(), result.ergodic_rates[s][p]));
        }
        for a in &result.alpha {
            let v = &a.samples[p];
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            line.push_str(&format!(" mean_alpha_{}={mean:.4}", a.strategy.name()));
        }
        println!("{line}");
    }
    if result.failures > 0 {
        println!("resampled realizations: {}", result.failures);
    }
}

fn write_outputs(cfg: &RunConfig, result: &ScenarioResult) -> Result<(), String> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| format!("{}: {e}", p.display()))
    };
    for &e in &cfg.emit {
        let body = match e {
            Emit::RatesCsv => io::rates_csv(result),
            Emit::AlphaCsv => io::alpha_csv(result),
            Emit::StreamsCsv => io::streams_csv(result),
            Emit::KdeCsv => io::kde_csv(result),
            Emit::PerRealizationJson => io::per_realization_json(&cfg.scenario, result),
        };
        write(e.file_name(), body)?;
    }
    write("effective_config.toml", cfg.effective_toml())
}

fn cmd_dump_impedance(n: usize, d: f64) -> CmdResult {
    let geom = ArrayGeometry::uca(n, d).map_err(invalid)?;
    let z = array_impedance_matrix(&geom).map_err(invalid)?;
    print!("{}", io::matrix_csv(&z));
    let za = dipole_self_impedance();
    eprintln!("elements: {n}, spacing: {d} wavelengths, radius: {} wavelengths", geom.radius());
    eprintln!("self impedance: {} {:+} j ohm", za.re, za.im);
    if n > 1 {
        let (i, j) = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .max_by(|a, b| z[*a].norm().total_cmp(&z[*b].norm()))
            .unwrap();
        let m = z[(i, j)];
        eprintln!(
            "largest mutual impedance: {} {:+} j ohm (|z| = {}) between elements {i} and {j}",
            m.re,
            m.im,
            m.norm()
        );
    }
    Ok(())
}

fn cmd_kde(input: &Path, output: &Path) -> CmdResult {
    let text = std::fs::read_to_string(input).map_err(|e| invalid(format!("{}: {e}", input.display())))?;
    let samples = io::parse_samples(&text).map_err(invalid)?;
    if samples.is_empty() {
        return Err(invalid(format!("{}: no samples", input.display())));
    }
    let k = kde(&samples, KDE_POINTS).map_err(invalid)?;
    std::fs::write(output, io::density_csv(&k.grid, &k.density))
        .map_err(|e| invalid(format!("{}: {e}", output.display())))?;
    eprintln!("bandwidth: {}", k.bandwidth);
    Ok(())
}
