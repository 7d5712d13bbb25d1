//! Sum capacity of the broadcast channel through its dual multiple-access
//! channel, solved by projected gradient ascent with Armijo step control.
//!
//! All iterations run in normalized units: `G = √P/σ_ϑ · H` and `X = Ξ/P`, so
//! the feasible set is `{X block-diagonal, X ⪰ 0, tr X ≤ 1}` for every `P`.

use nalgebra::linalg::Cholesky;
use num_complex::Complex64;

use super::{
    check_partition, check_power, check_sigma, coupling_mismatch, PrecodingSolution, RateResult,
    Strategy, ACTIVE_STREAM_THRESHOLD,
};
use crate::channel::user_rows;
use crate::numerics::{
    block_diagonal_part, frobenius, hermitian_eigen, inner, log2_det_hpd,
    principal_inv_sqrt, principal_psd_sqrt, project_block_psd_trace, symmetrize,
};
use crate::{CMat, Error, Result};

#[derive(Debug, Clone)]
pub struct MacOptions {
    pub max_iterations: usize,
    /// Stop once the relative objective increase drops below this value.
    pub rel_tolerance: f64,
    /// KKT residual above which hitting the iteration cap counts as failure.
    pub kkt_tolerance: f64,
    pub initial_step: f64,
    pub backtrack: f64,
    pub sufficient_increase: f64,
    pub record_trace: bool,
}

impl Default for MacOptions {
    fn default() -> Self {
        MacOptions {
            max_iterations: 5000,
            rel_tolerance: 1e-9,
            kkt_tolerance: 1e-5,
            initial_step: 1.0,
            backtrack: 0.5,
            sufficient_increase: 1e-4,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MacSolution {
    /// Block-diagonal dual-MAC covariance in W.
    pub xi: CMat,
    /// Sum rate in bits per channel use.
    pub sum_rate: f64,
    /// Per-user rates with user `K−1` decoded first.
    pub per_user_rates: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    /// Objective in bits after every accepted iterate, starting point included.
    pub objective_trace: Vec<f64>,
}

impl MacSolution {
    /// Number of dual-MAC eigen-directions carrying power.
    pub fn active_streams(&self, partition: &[usize], power: f64) -> usize {
        let mut count = 0;
        let mut offset = 0;
        for &k in partition {
            let block = self.xi.view((offset, offset), (k, k)).clone_owned();
            if let Ok((values, _)) = hermitian_eigen(&block) {
                count += values
                    .iter()
                    .filter(|&&v| v > ACTIVE_STREAM_THRESHOLD * power)
                    .count();
            }
            offset += k;
        }
        count
    }
}

struct Problem {
    /// `(G Gᴴ)^{1/2}`.
    s: CMat,
    partition: Vec<usize>,
}

impl Problem {
    fn inner_matrix(&self, x: &CMat) -> CMat {
        let mut m = &self.s * x * &self.s;
        for i in 0..m.nrows() {
            m[(i, i)] += Complex64::new(1.0, 0.0);
        }
        m
    }

    /// `log₂ det(I + S X S)`.
    fn objective(&self, x: &CMat) -> Result<f64> {
        log2_det_hpd(&self.inner_matrix(x))
    }

    /// Block-diagonal part of `S (I + S X S)⁻¹ S`, the gradient in nats.
    fn gradient(&self, x: &CMat) -> Result<CMat> {
        let m = symmetrize(&self.inner_matrix(x));
        let inv = Cholesky::new(m)
            .ok_or_else(|| Error::NotPositiveDefinite("I + S X S".into()))?
            .inverse();
        let g = &self.s * inv * &self.s;
        Ok(symmetrize(&block_diagonal_part(&g, &self.partition)))
    }

    fn project(&self, x: &CMat) -> Result<CMat> {
        project_block_psd_trace(x, &self.partition, 1.0)
    }
}

fn scaled(m: &CMat, f: f64) -> CMat {
    m * Complex64::new(f, 0.0)
}

fn normalized_channel(h: &CMat, p: f64, sigma_theta: f64) -> CMat {
    scaled(h, p.sqrt() / sigma_theta)
}

fn kkt_residual(problem: &Problem, x: &CMat, g: &CMat) -> Result<f64> {
    let norm = frobenius(g);
    if norm == 0.0 {
        return Ok(0.0);
    }
    let stepped = problem.project(&(x + scaled(g, 1.0 / norm)))?;
    Ok(frobenius(&(x - stepped)))
}

/// Per-user dual-MAC rates, user `K−1` decoded first, in normalized units.
fn mac_user_rates(g: &CMat, x: &CMat, partition: &[usize]) -> Result<Vec<f64>> {
    let n = g.ncols();
    let mut acc = CMat::identity(n, n);
    let mut prev = 0.0;
    let mut rates = Vec::with_capacity(partition.len());
    let mut offset = 0;
    for (k, &mk) in partition.iter().enumerate() {
        let gk = user_rows(g, partition, k);
        let xk = x.view((offset, offset), (mk, mk));
        acc += gk.adjoint() * xk * &gk;
        let now = log2_det_hpd(&acc)?;
        rates.push((now - prev).max(0.0));
        prev = now;
        offset += mk;
    }
    Ok(rates)
}

/// Maximizes `log₂ det(I + σ_ϑ⁻² Hᴴ Ξ H)` over block-diagonal `Ξ ⪰ 0` with
/// `tr Ξ ≤ P`. `h` is the `M × N` downlink channel whose row blocks follow
/// `partition`; the value equals the sum capacity of the broadcast channel.
pub fn mac_sum_capacity(
    h: &CMat,
    p: f64,
    sigma_theta: f64,
    partition: &[usize],
    options: &MacOptions,
) -> Result<(RateResult, MacSolution)> {
    check_power(p)?;
    check_sigma(sigma_theta)?;
    check_partition(partition, h.nrows())?;
    if !(p > 0.0) {
        return Err(Error::Domain("dual MAC needs a positive power budget".into()));
    }
    if frobenius(h) == 0.0 {
        return Err(Error::ZeroChannel("dual MAC channel is zero".into()));
    }
    let m = h.nrows();
    let g = normalized_channel(h, p, sigma_theta);
    let w = symmetrize(&(&g * g.adjoint()));
    let problem = Problem {
        s: principal_psd_sqrt(&w)?.root,
        partition: partition.to_vec(),
    };

    let mut x = scaled(&CMat::identity(m, m), 1.0 / m as f64);
    let mut f = problem.objective(&x)?;
    let mut trace = Vec::new();
    if options.record_trace {
        trace.push(f);
    }
    let mut iterations = 0;
    let mut grad = problem.gradient(&x)?;
    while iterations < options.max_iterations {
        iterations += 1;
        let scale = frobenius(&grad);
        if scale == 0.0 {
            break;
        }
        let dir = scaled(&grad, 1.0 / scale);
        let mut t = options.initial_step;
        let mut accepted = None;
        while t > 1e-20 {
            let candidate = problem.project(&(&x + scaled(&dir, t)))?;
            let fc = problem.objective(&candidate)?;
            // gradient is in nats, objective in bits
            let predicted = inner(&grad, &(&candidate - &x)) / std::f64::consts::LN_2;
            if fc - f >= options.sufficient_increase * predicted {
                accepted = Some((candidate, fc));
                break;
            }
            t *= options.backtrack;
        }
        let Some((next, fn_)) = accepted else { break };
        let rel = (fn_ - f) / fn_.abs().max(f64::MIN_POSITIVE);
        x = next;
        f = fn_;
        if options.record_trace {
            trace.push(f);
        }
        grad = problem.gradient(&x)?;
        if rel < options.rel_tolerance {
            break;
        }
    }
    let residual = kkt_residual(&problem, &x, &grad)?;
    let converged = iterations < options.max_iterations || residual <= options.kkt_tolerance;
    let per_user = mac_user_rates(&g, &x, partition)?;
    let solution = MacSolution {
        xi: scaled(&x, p),
        sum_rate: f,
        per_user_rates: per_user.clone(),
        iterations,
        kkt_residual: residual,
        converged,
        objective_trace: trace,
    };
    let rate = RateResult {
        strategy: Strategy::Cap,
        sum_rate: f,
        per_user_rates: per_user,
        active_streams: solution.active_streams(partition, p),
    };
    Ok((rate, solution))
}

/// Broadcast-channel covariances `Σ_k` (W) achieving the dual-MAC rates of
/// `xi` with dirty paper coding, user 0 encoded first.
pub fn mac_to_bc_covariances(
    h: &CMat,
    xi: &CMat,
    p: f64,
    sigma_theta: f64,
    partition: &[usize],
) -> Result<Vec<CMat>> {
    check_sigma(sigma_theta)?;
    check_partition(partition, h.nrows())?;
    if xi.shape() != (h.nrows(), h.nrows()) {
        return Err(Error::Dimension("Ξ does not match the channel rows".into()));
    }
    if !(p > 0.0) {
        return Err(Error::Domain("power budget must be positive".into()));
    }
    let n = h.ncols();
    let g = normalized_channel(h, p, sigma_theta);
    let x = scaled(xi, 1.0 / p);
    let k_users = partition.len();
    let offsets: Vec<usize> = partition
        .iter()
        .scan(0, |acc, &k| {
            let o = *acc;
            *acc += k;
            Some(o)
        })
        .collect();
    let mut sigmas = vec![CMat::zeros(n, n); k_users];
    for k in (0..k_users).rev() {
        let mk = partition[k];
        let gk = user_rows(&g, partition, k);
        let xk = x.view((offsets[k], offsets[k]), (mk, mk)).clone_owned();
        if frobenius(&xk) == 0.0 {
            continue;
        }
        let later: CMat = sigmas[k + 1..]
            .iter()
            .fold(CMat::zeros(n, n), |acc, s| acc + s);
        let a = symmetrize(&(&gk * later * gk.adjoint())) + CMat::identity(mk, mk);
        let mut b = CMat::identity(n, n);
        for j in 0..k {
            let mj = partition[j];
            let gj = user_rows(&g, partition, j);
            b += gj.adjoint() * x.view((offsets[j], offsets[j]), (mj, mj)) * gj;
        }
        let b_inv_sqrt = principal_inv_sqrt(&symmetrize(&b))?;
        let a_sqrt = principal_psd_sqrt(&a)?.root;
        let a_inv_sqrt = principal_inv_sqrt(&a)?;
        let svd = (&b_inv_sqrt * gk.adjoint() * a_inv_sqrt).svd(true, true);
        let (f, vt) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(Error::Singular("SVD failed in MAC-to-BC mapping".into())),
        };
        let left = &b_inv_sqrt * f * vt * &a_sqrt;
        sigmas[k] = symmetrize(&(&left * xk * left.adjoint()));
    }
    Ok(sigmas.into_iter().map(|s| scaled(&s, p)).collect())
}

/// Per-user dirty-paper rates of BC covariances `Σ_k`, user 0 encoded first.
pub fn dpc_rates(h: &CMat, sigmas: &[CMat], sigma_theta: f64, partition: &[usize]) -> Result<Vec<f64>> {
    check_partition(partition, h.nrows())?;
    if sigmas.len() != partition.len() {
        return Err(Error::Dimension("one covariance per user expected".into()));
    }
    let n = h.ncols();
    let noise = sigma_theta * sigma_theta;
    let mut rates = Vec::with_capacity(partition.len());
    for k in 0..partition.len() {
        let hk = user_rows(h, partition, k);
        let later = sigmas[k + 1..]
            .iter()
            .fold(CMat::zeros(n, n), |acc, s| acc + s);
        let with = &later + &sigmas[k];
        let mk = partition[k];
        let eye = CMat::identity(mk, mk);
        let num = &eye + scaled(&(&hk * with * hk.adjoint()), 1.0 / noise);
        let den = &eye + scaled(&(&hk * later * hk.adjoint()), 1.0 / noise);
        rates.push((log2_det_hpd(&num)? - log2_det_hpd(&den)?).max(0.0));
    }
    Ok(rates)
}

/// Precoding solution realizing the dual-MAC optimum on the broadcast side.
pub fn mac_to_bc(
    h: &CMat,
    mac: &MacSolution,
    p: f64,
    sigma_theta: f64,
    partition: &[usize],
) -> Result<PrecodingSolution> {
    let sigmas = mac_to_bc_covariances(h, &mac.xi, p, sigma_theta, partition)?;
    let mut precoders = Vec::with_capacity(sigmas.len());
    let mut powers = Vec::with_capacity(sigmas.len());
    for (k, s) in sigmas.iter().enumerate() {
        let (values, vectors) = hermitian_eigen(s)?;
        let rank = partition[k].min(s.nrows());
        precoders.push(vectors.columns(0, rank).clone_owned());
        powers.push(values[..rank].iter().map(|v| v.max(0.0)).collect());
    }
    let mut sol = PrecodingSolution::with_matched_power(precoders, powers, p);
    sol.dual_mac_covariance = Some(mac.xi.clone());
    Ok(sol)
}

/// Sum-rate optimization on the coupling-free belief `Ĥ′` with predicted
/// power `P`. The rate is the dual-MAC objective of the optimizer evaluated on
/// `Ĥ`; the returned solution carries the radiated power ratio α.
#[allow(clippy::too_many_arguments)]
pub fn mac_hypothetical(
    h_hat: &CMat,
    h_hat_prime: &CMat,
    b: &CMat,
    b_hat_root: &CMat,
    p: f64,
    sigma_theta: f64,
    partition: &[usize],
    options: &MacOptions,
) -> Result<(RateResult, PrecodingSolution, MacSolution)> {
    if h_hat.shape() != h_hat_prime.shape() {
        return Err(Error::Dimension("Ĥ and Ĥ′ differ in shape".into()));
    }
    let (_, mac) = mac_sum_capacity(h_hat_prime, p, sigma_theta, partition, options)?;
    let g = normalized_channel(h_hat, p, sigma_theta);
    let x = scaled(&mac.xi, 1.0 / p);
    let per_user = mac_user_rates(&g, &x, partition)?;
    let mut sol = mac_to_bc(h_hat_prime, &mac, p, sigma_theta, partition)?;
    sol.apply_power_ratio(&coupling_mismatch(b, b_hat_root));
    let rate = RateResult {
        strategy: Strategy::Hyp,
        sum_rate: per_user.iter().sum(),
        per_user_rates: per_user,
        active_streams: sol.active_streams(),
    };
    Ok((rate, sol, mac))
}
