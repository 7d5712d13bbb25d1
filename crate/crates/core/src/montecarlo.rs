//! Monte Carlo driver: i.i.d. coupling realizations, every strategy over a
//! power grid, ergodic averages and kernel density estimates of α.
//!
//! Realization `i` draws from its own ChaCha8 stream `(seed, i)`, so results
//! do not depend on how realizations are scheduled across threads. Results
//! are reduced in index order.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::dbw_grid;
use crate::channel::{compute_h, ordinary_reciprocity_gap, ChannelBundle, Direction, ImpedanceSystem, NoiseConfig};
use crate::em_arrays::{array_impedance_matrix, block_diagonal, dipole_self_impedance, ArrayGeometry};
use crate::strategies::{
    coupling_mismatch, evaluate_bc_rates, greedy_zf, mac_hypothetical, mac_sum_capacity,
    su_miso_cap, su_miso_hyp, su_miso_recip, su_mimo_cap, su_mimo_hyp, su_mimo_recip,
    MacOptions, RateResult, Strategy,
};
use crate::{CMat, CVec, Error, Result};

/// Standard deviation of the i.i.d. transfer impedances in Ω; the mutual
/// impedance of two dipoles 1000 wavelengths apart.
pub const DEFAULT_SIGMA_Z: f64 = 0.019085;

/// Resampling attempts per realization before the run is aborted.
const MAX_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    SuMiso,
    SuMimo,
    MuMiso,
    MuMimo,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::SuMiso => "su_miso",
            Topology::SuMimo => "su_mimo",
            Topology::MuMiso => "mu_miso",
            Topology::MuMimo => "mu_mimo",
        }
    }

    pub fn parse(s: &str) -> Option<Topology> {
        [Topology::SuMiso, Topology::SuMimo, Topology::MuMiso, Topology::MuMimo]
            .into_iter()
            .find(|t| t.name() == s)
    }

    pub fn is_multi_user(self) -> bool {
        matches!(self, Topology::MuMiso | Topology::MuMimo)
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: Topology,
    /// Base-station antennas `N`.
    pub n_bs: usize,
    /// Antennas per mobile.
    pub users: Vec<usize>,
    /// Neighbor spacing of the base-station UCA in wavelengths.
    pub spacing_bs: f64,
    /// Neighbor spacing of every mobile UCA in wavelengths.
    pub spacing_ue: f64,
    pub sigma_z: f64,
    /// Transmit powers in W, strictly increasing.
    pub power_grid: Vec<f64>,
    pub n_realizations: usize,
    pub seed: u64,
    pub noise: NoiseConfig,
    /// Noise at the base-station receivers; `noise` when absent.
    pub uplink_noise: Option<NoiseConfig>,
    pub z_g: Complex64,
    pub z_l: Complex64,
    pub strategies: Vec<Strategy>,
    /// Externally supplied `Z₂₁` realizations replacing the sampler.
    pub imported_z21: Option<Vec<CMat>>,
    pub mac_options: MacOptions,
}

pub fn dbw_to_watts(dbw: f64) -> f64 {
    10f64.powf(dbw / 10.0)
}

pub fn watts_to_dbw(w: f64) -> f64 {
    10.0 * w.log10()
}

/// `points` values evenly spaced in dBW from `start` to `stop`, in W.
pub fn power_grid_dbw(start: f64, stop: f64, points: usize) -> Vec<f64> {
    dbw_grid(start, stop, points).into_iter().map(dbw_to_watts).collect()
}

impl Scenario {
    /// Scenario with the default terminations, noise and power grid.
    pub fn new(topology: Topology, n_bs: usize, users: Vec<usize>, spacing_bs: f64) -> Self {
        let z_term = Complex64::new(dipole_self_impedance().re, 0.0);
        Scenario {
            topology,
            n_bs,
            users,
            spacing_bs,
            spacing_ue: spacing_bs,
            sigma_z: DEFAULT_SIGMA_Z,
            power_grid: power_grid_dbw(-100.0, -50.0, 11),
            n_realizations: 1000,
            seed: 1,
            noise: NoiseConfig::default(),
            uplink_noise: None,
            z_g: z_term,
            z_l: z_term,
            strategies: vec![Strategy::Cap, Strategy::Recip, Strategy::Hyp],
            imported_z21: None,
            mac_options: MacOptions::default(),
        }
    }

    pub fn n_ue(&self) -> usize {
        self.users.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Domain(m));
        if self.n_bs == 0 {
            return fail("base station needs at least one antenna".into());
        }
        if self.users.is_empty() || self.users.contains(&0) {
            return fail("every user needs at least one antenna".into());
        }
        match self.topology {
            Topology::SuMiso if self.users != [1] => {
                return fail("su_miso needs exactly one single-antenna user".into())
            }
            Topology::SuMimo if self.users.len() != 1 => {
                return fail("su_mimo needs exactly one user".into())
            }
            Topology::MuMiso if self.users.iter().any(|&m| m != 1) => {
                return fail("mu_miso users must have a single antenna".into())
            }
            _ => {}
        }
        if self.topology.is_multi_user() && self.strategies.contains(&Strategy::Recip) {
            return fail("strategy recip is not defined for multi-user topologies; use recip_lin".into());
        }
        if self.strategies.is_empty() {
            return fail("no strategies requested".into());
        }
        if !(self.spacing_bs > 0.0) || !(self.spacing_ue > 0.0) {
            return fail("array spacings must be positive".into());
        }
        if !(self.sigma_z > 0.0) || !self.sigma_z.is_finite() {
            return fail(format!("sigma_z must be positive, got {}", self.sigma_z));
        }
        if self.power_grid.is_empty()
            || self.power_grid.iter().any(|p| !(*p > 0.0) || !p.is_finite())
            || self.power_grid.windows(2).any(|w| !(w[1] > w[0]))
        {
            return fail("power grid must be positive and strictly increasing".into());
        }
        if self.n_realizations == 0 {
            return fail("n_realizations must be at least 1".into());
        }
        if !(self.z_g.re > 0.0) || !(self.z_l.re > 0.0) {
            return fail("terminations need a positive resistance".into());
        }
        self.noise.validate()?;
        if let Some(ul) = &self.uplink_noise {
            ul.validate()?;
        }
        if let Some(z21) = &self.imported_z21 {
            if z21.len() != self.n_realizations {
                return fail(format!(
                    "{} imported channels for {} realizations",
                    z21.len(),
                    self.n_realizations
                ));
            }
            if let Some(bad) = z21.iter().find(|z| z.shape() != (self.n_ue(), self.n_bs)) {
                return fail(format!(
                    "imported channel is {:?}, expected ({}, {})",
                    bad.shape(),
                    self.n_ue(),
                    self.n_bs
                ));
            }
        }
        Ok(())
    }
}

/// Generator of realization `index` for a run seeded with `seed`.
pub fn realization_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `M × N` matrix of i.i.d. `N_C(0, σ_z²)` entries, drawn row by row with
/// the real part before the imaginary part.
pub fn sample_z21<R: Rng + ?Sized>(m: usize, n: usize, sigma_z: f64, rng: &mut R) -> Result<CMat> {
    if !(sigma_z > 0.0) || !sigma_z.is_finite() {
        return Err(Error::Domain(format!("sigma_z must be positive, got {sigma_z}")));
    }
    let normal = Normal::new(0.0, sigma_z / std::f64::consts::SQRT_2)
        .map_err(|e| Error::Domain(e.to_string()))?;
    let mut z = CMat::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let re = rng.sample(normal);
            let im = rng.sample(normal);
            z[(i, j)] = Complex64::new(re, im);
        }
    }
    Ok(z)
}

/// Rates, streams and α of one strategy across the power grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyTrace {
    pub strategy: Strategy,
    pub rate: Vec<f64>,
    pub active_streams: Vec<usize>,
    /// Present for the hypothetical strategies.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub index: usize,
    /// Draws discarded before this realization succeeded.
    pub resamples: usize,
    /// `‖H − H_ULᵀ‖_F / ‖H‖_F`.
    pub reciprocity_gap: f64,
    pub traces: Vec<StrategyTrace>,
}

impl RealizationRecord {
    pub fn trace(&self, strategy: Strategy) -> Option<&StrategyTrace> {
        self.traces.iter().find(|t| t.strategy == strategy)
    }
}

/// Gaussian kernel density estimate on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

#[derive(Debug, Clone)]
pub struct AlphaStatistics {
    pub strategy: Strategy,
    /// `samples[p][r]`: α of realization `r` at power point `p`.
    pub samples: Vec<Vec<f64>>,
    /// Density per power point; `None` when all samples coincide.
    pub density: Vec<Option<Kde>>,
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub power_grid: Vec<f64>,
    pub strategies: Vec<Strategy>,
    /// `ergodic_rates[s][p]` in bits per channel use.
    pub ergodic_rates: Vec<Vec<f64>>,
    /// `active_streams_avg[s][p]`.
    pub active_streams_avg: Vec<Vec<f64>>,
    pub alpha: Vec<AlphaStatistics>,
    /// Realizations that had to be redrawn.
    pub failures: usize,
    pub records: Vec<RealizationRecord>,
}

impl ScenarioResult {
    pub fn rates(&self, strategy: Strategy) -> Option<&[f64]> {
        let i = self.strategies.iter().position(|&s| s == strategy)?;
        Some(&self.ergodic_rates[i])
    }

    pub fn streams(&self, strategy: Strategy) -> Option<&[f64]> {
        let i = self.strategies.iter().position(|&s| s == strategy)?;
        Some(&self.active_streams_avg[i])
    }

    pub fn alpha(&self, strategy: Strategy) -> Option<&AlphaStatistics> {
        self.alpha.iter().find(|a| a.strategy == strategy)
    }
}

/// Impedance data shared by every realization of a scenario.
struct Fixed {
    z11: CMat,
    z22: CMat,
}

fn fixed_arrays(s: &Scenario) -> Result<Fixed> {
    let z11 = array_impedance_matrix(&ArrayGeometry::uca(s.n_bs, s.spacing_bs)?)?;
    let blocks = s
        .users
        .iter()
        .map(|&m| array_impedance_matrix(&ArrayGeometry::uca(m, s.spacing_ue)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(Fixed {
        z11,
        z22: block_diagonal(&blocks),
    })
}

fn column(m: &CMat, j: usize) -> CVec {
    m.column(j).clone_owned()
}

fn row_as_vector(m: &CMat, i: usize) -> CVec {
    m.row(i).transpose()
}

struct Outcome {
    rate: RateResult,
    alpha: Option<f64>,
}

fn plain(rate: RateResult) -> Outcome {
    Outcome { rate, alpha: None }
}

fn evaluate(
    s: &Scenario,
    strategy: Strategy,
    dl: &ChannelBundle,
    ul: &ChannelBundle,
    p: f64,
) -> Result<Outcome> {
    let sigma = dl.sigma_theta;
    let part = &dl.user_partition;
    let h_ul_t = ul.h.transpose();
    match (s.topology, strategy) {
        (Topology::SuMiso, Strategy::Cap) => Ok(plain(su_miso_cap(&row_as_vector(&dl.h, 0), p, sigma)?.0)),
        (Topology::SuMiso, Strategy::Recip) => Ok(plain(
            su_miso_recip(&row_as_vector(&dl.h, 0), &column(&ul.h, 0), p, sigma)?.0,
        )),
        (Topology::SuMiso, Strategy::Hyp) => {
            let (rate, sol) =
                su_miso_hyp(&row_as_vector(&dl.h_hat, 0), &dl.b, &dl.b_hat_root, p, sigma)?;
            Ok(Outcome { rate, alpha: Some(sol.alpha) })
        }
        (Topology::SuMimo, Strategy::Cap) => Ok(plain(su_mimo_cap(&dl.h, p, sigma)?.0)),
        (Topology::SuMimo, Strategy::Recip) => Ok(plain(su_mimo_recip(&dl.h, &ul.h, p, sigma)?.0)),
        (Topology::SuMimo, Strategy::Hyp) => {
            let (rate, sol) =
                su_mimo_hyp(&dl.h_hat, &dl.h_hat_prime, &dl.b, &dl.b_hat_root, p, sigma)?;
            Ok(Outcome { rate, alpha: Some(sol.alpha) })
        }
        (_, Strategy::Cap) => {
            let (rate, mac) = mac_sum_capacity(&dl.h, p, sigma, part, &s.mac_options)?;
            if !mac.converged {
                return Err(Error::NotConverged {
                    iterations: mac.iterations,
                    residual: mac.kkt_residual,
                });
            }
            Ok(plain(rate))
        }
        (_, Strategy::Hyp) => {
            let (rate, sol, mac) = mac_hypothetical(
                &dl.h_hat,
                &dl.h_hat_prime,
                &dl.b,
                &dl.b_hat_root,
                p,
                sigma,
                part,
                &s.mac_options,
            )?;
            if !mac.converged {
                return Err(Error::NotConverged {
                    iterations: mac.iterations,
                    residual: mac.kkt_residual,
                });
            }
            Ok(Outcome { rate, alpha: Some(sol.alpha) })
        }
        (_, Strategy::Recip) => Err(Error::Domain("recip needs a single-user topology".into())),
        (_, Strategy::CapLin) => {
            let sol = greedy_zf(&dl.h, p, sigma, part)?;
            Ok(plain(evaluate_bc_rates(&dl.h, &sol, sigma, part, strategy)?))
        }
        (_, Strategy::RecipLin) => {
            let sol = greedy_zf(&h_ul_t, p, sigma, part)?;
            Ok(plain(evaluate_bc_rates(&dl.h, &sol, sigma, part, strategy)?))
        }
        (_, Strategy::HypLin) => {
            let mut sol = greedy_zf(&dl.h_hat_prime, p, sigma, part)?;
            sol.apply_power_ratio(&coupling_mismatch(&dl.b, &dl.b_hat_root));
            let rate = evaluate_bc_rates(&dl.h_hat, &sol, sigma, part, strategy)?;
            Ok(Outcome { rate, alpha: Some(sol.alpha) })
        }
    }
}

fn process(s: &Scenario, fixed: &Fixed, z21: CMat) -> Result<(f64, Vec<StrategyTrace>)> {
    let sys = ImpedanceSystem::new(
        fixed.z11.clone(),
        fixed.z22.clone(),
        z21,
        s.z_g,
        s.z_l,
        s.users.clone(),
    )?;
    let dl = compute_h(&sys, &s.noise, Direction::Downlink)?;
    let ul = compute_h(&sys, s.uplink_noise.as_ref().unwrap_or(&s.noise), Direction::Uplink)?;
    let gap = ordinary_reciprocity_gap(&dl, &ul);
    let mut traces = Vec::with_capacity(s.strategies.len());
    for &strategy in &s.strategies {
        let mut trace = StrategyTrace {
            strategy,
            rate: Vec::with_capacity(s.power_grid.len()),
            active_streams: Vec::with_capacity(s.power_grid.len()),
            alpha: strategy.is_hypothetical().then(Vec::new),
        };
        for &p in &s.power_grid {
            let out = evaluate(s, strategy, &dl, &ul, p)?;
            if !out.rate.sum_rate.is_finite() {
                return Err(Error::Domain("non-finite rate".into()));
            }
            trace.rate.push(out.rate.sum_rate);
            trace.active_streams.push(out.rate.active_streams);
            if let (Some(a), Some(v)) = (trace.alpha.as_mut(), out.alpha) {
                a.push(v);
            }
        }
        traces.push(trace);
    }
    Ok((gap, traces))
}

fn run_realization(s: &Scenario, fixed: &Fixed, index: usize) -> Result<RealizationRecord> {
    if let Some(imported) = &s.imported_z21 {
        let (gap, traces) = process(s, fixed, imported[index].clone())?;
        return Ok(RealizationRecord {
            index,
            resamples: 0,
            reciprocity_gap: gap,
            traces,
        });
    }
    let mut rng = realization_rng(s.seed, index as u64);
    let mut last = None;
    for attempt in 0..MAX_ATTEMPTS {
        let z21 = sample_z21(s.n_ue(), s.n_bs, s.sigma_z, &mut rng)?;
        match process(s, fixed, z21) {
            Ok((gap, traces)) => {
                return Ok(RealizationRecord {
                    index,
                    resamples: attempt,
                    reciprocity_gap: gap,
                    traces,
                })
            }
            Err(e) => last = Some(e),
        }
    }
    Err(Error::Aborted(format!(
        "realization {index} failed {MAX_ATTEMPTS} times, last error: {}",
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}

/// Runs every realization of `s` on the current rayon pool.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioResult> {
    s.validate()?;
    let fixed = fixed_arrays(s)?;
    let outcomes: Vec<Result<RealizationRecord>> = (0..s.n_realizations)
        .into_par_iter()
        .map(|i| run_realization(s, &fixed, i))
        .collect();

    let mut records = Vec::with_capacity(outcomes.len());
    let mut failures = 0;
    for outcome in outcomes {
        match outcome {
            Ok(r) => {
                failures += r.resamples;
                records.push(r);
            }
            Err(Error::Aborted(m)) => return Err(Error::Aborted(m)),
            // imported realizations cannot be redrawn; they count as failures
            Err(_) if s.imported_z21.is_some() => failures += 1,
            Err(e) => return Err(e),
        }
    }
    if failures as f64 > 0.01 * s.n_realizations as f64 {
        return Err(Error::Aborted(format!(
            "{failures} failed realizations exceed 1% of {}",
            s.n_realizations
        )));
    }
    if records.is_empty() {
        return Err(Error::Aborted("no realization succeeded".into()));
    }
    Ok(aggregate(s, records, failures))
}

/// Runs `s` on a dedicated pool with `threads` workers.
pub fn run_scenario_with_threads(s: &Scenario, threads: usize) -> Result<ScenarioResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Aborted(format!("thread pool: {e}")))?;
    pool.install(|| run_scenario(s))
}

fn aggregate(s: &Scenario, records: Vec<RealizationRecord>, failures: usize) -> ScenarioResult {
    let n = records.len() as f64;
    let n_p = s.power_grid.len();
    let mut ergodic_rates = Vec::with_capacity(s.strategies.len());
    let mut active_streams_avg = Vec::with_capacity(s.strategies.len());
    let mut alpha = Vec::new();
    for (si, &strategy) in s.strategies.iter().enumerate() {
        let mut rates = vec![0.0; n_p];
        let mut streams = vec![0.0; n_p];
        for r in &records {
            let t = &r.traces[si];
            for p in 0..n_p {
                rates[p] += t.rate[p];
                streams[p] += t.active_streams[p] as f64;
            }
        }
        ergodic_rates.push(rates.into_iter().map(|v| v / n).collect());
        active_streams_avg.push(streams.into_iter().map(|v| v / n).collect());
        if strategy.is_hypothetical() {
            let samples: Vec<Vec<f64>> = (0..n_p)
                .map(|p| {
                    records
                        .iter()
                        .map(|r| r.traces[si].alpha.as_ref().map_or(f64::NAN, |a| a[p]))
                        .collect()
                })
                .collect();
            let density = samples.iter().map(|v| kde(v, KDE_POINTS).ok()).collect();
            alpha.push(AlphaStatistics {
                strategy,
                samples,
                density,
            });
        }
    }
    ScenarioResult {
        power_grid: s.power_grid.clone(),
        strategies: s.strategies.clone(),
        ergodic_rates,
        active_streams_avg,
        alpha,
        failures,
        records,
    }
}

/// Grid size of the α density estimates.
pub const KDE_POINTS: usize = 128;

/// Gaussian kernel density estimate with Silverman's bandwidth
/// `b = 1.06 σ̂ n^{-1/5}` on `n_grid` points spanning `[min − 3b, max + 3b]`.
pub fn kde(samples: &[f64], n_grid: usize) -> Result<Kde> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSamples(format!(
            "need at least two samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("samples must be finite".into()));
    }
    if n_grid < 2 {
        return Err(Error::Domain("grid needs at least two points".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateSamples("all samples are equal".into()));
    }
    let b = 1.06 * sd * n.powf(-0.2);
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * b;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * b;
    let step = (hi - lo) / (n_grid - 1) as f64;
    let norm = 1.0 / (n * b * (2.0 * std::f64::consts::PI).sqrt());
    let grid: Vec<f64> = (0..n_grid).map(|i| lo + step * i as f64).collect();
    let density = grid
        .iter()
        .map(|&x| {
            norm * samples
                .iter()
                .map(|&s| (-0.5 * ((x - s) / b).powi(2)).exp())
                .sum::<f64>()
        })
        .collect();
    Ok(Kde {
        grid,
        density,
        bandwidth: b,
    })
}
