use num_complex::Complex64;

use super::{
    check_power, check_sigma, coupling_mismatch, rate_with_covariance, PrecodingSolution,
    RateResult, Strategy,
};
use crate::numerics::{hermitian_eigen, symmetrize, waterfill};
use crate::{CMat, CVec, Error, Result};

fn single_stream(f: CVec, p: f64) -> PrecodingSolution {
    let n = f.len();
    PrecodingSolution::with_matched_power(vec![CMat::from_column_slice(n, 1, f.as_slice())], vec![vec![p]], p)
}

fn miso_result(strategy: Strategy, rate: f64, p: f64) -> RateResult {
    RateResult {
        strategy,
        sum_rate: rate,
        per_user_rates: vec![rate],
        active_streams: usize::from(p > 0.0),
    }
}

fn unit_conj(h: &CVec, what: &str) -> Result<(CVec, f64)> {
    let norm = h.norm();
    if !(norm > 0.0) {
        return Err(Error::ZeroChannel(what.to_string()));
    }
    Ok((h.conjugate() / Complex64::new(norm, 0.0), norm))
}

/// Single-antenna receiver with matched beamforming: `C = log₂(1 + P‖h‖²/σ_ϑ²)`
/// where `h = Hᵀ`.
pub fn su_miso_cap(h: &CVec, p: f64, sigma_theta: f64) -> Result<(RateResult, PrecodingSolution)> {
    check_power(p)?;
    check_sigma(sigma_theta)?;
    let (f, norm) = unit_conj(h, "downlink channel")?;
    let rate = (p * norm * norm / (sigma_theta * sigma_theta)).ln_1p() / std::f64::consts::LN_2;
    Ok((miso_result(Strategy::Cap, rate, p), single_stream(f, p)))
}

/// Beamforming on the conjugate uplink channel while transmitting over `h`.
pub fn su_miso_recip(
    h_true: &CVec,
    h_ul: &CVec,
    p: f64,
    sigma_theta: f64,
) -> Result<(RateResult, PrecodingSolution)> {
    check_power(p)?;
    check_sigma(sigma_theta)?;
    if h_true.len() != h_ul.len() {
        return Err(Error::Dimension("uplink and downlink lengths differ".into()));
    }
    let (f, _) = unit_conj(h_ul, "uplink channel")?;
    let gain = h_true.dot(&f).norm_sqr();
    let rate = (p * gain / (sigma_theta * sigma_theta)).ln_1p() / std::f64::consts::LN_2;
    Ok((miso_result(Strategy::Recip, rate, p), single_stream(f, p)))
}

/// Matched beamforming on the coupling-free channel `ĥ`. The reported rate is
/// the one the base station expects for predicted power `P`; the solution
/// carries the radiated power `αP`.
pub fn su_miso_hyp(
    h_hat: &CVec,
    b: &CMat,
    b_hat_root: &CMat,
    p: f64,
    sigma_theta: f64,
) -> Result<(RateResult, PrecodingSolution)> {
    check_power(p)?;
    check_sigma(sigma_theta)?;
    let (f, norm) = unit_conj(h_hat, "coupling-free channel")?;
    let rate = (p * norm * norm / (sigma_theta * sigma_theta)).ln_1p() / std::f64::consts::LN_2;
    let mismatch = coupling_mismatch(b, b_hat_root);
    let alpha = (f.adjoint() * &mismatch * &f)[(0, 0)].re;
    let mut sol = single_stream(f, p);
    sol.alpha = alpha;
    sol.true_power = alpha * p;
    Ok((miso_result(Strategy::Hyp, rate, p), sol))
}

/// Eigen-beamforming with water-filling designed on `design`.
/// Returns the precoder, the per-stream powers and the eigenvalues used.
fn eigen_waterfill(design: &CMat, p: f64, sigma_theta: f64) -> Result<(CMat, Vec<f64>, Vec<f64>)> {
    let gram = symmetrize(&(design.adjoint() * design));
    let (values, vectors) = hermitian_eigen(&gram)?;
    let largest = values.first().copied().unwrap_or(0.0);
    if !(largest > 0.0) {
        return Err(Error::ZeroChannel("channel matrix is zero".into()));
    }
    let rank = design.nrows().min(design.ncols());
    let gains: Vec<f64> = values
        .iter()
        .take(rank)
        .map(|&v| if v > 1e-13 * largest { v / (sigma_theta * sigma_theta) } else { 0.0 })
        .collect();
    let powers = waterfill(&gains, p)?;
    let precoder = vectors.columns(0, rank).clone_owned();
    Ok((precoder, powers, gains))
}

fn covariance(v: &CMat, powers: &[f64]) -> CMat {
    let mut scaled = v.clone();
    for (j, &pj) in powers.iter().enumerate() {
        scaled.column_mut(j).scale_mut(pj);
    }
    scaled * v.adjoint()
}

fn mimo_result(strategy: Strategy, rate: f64, sol: &PrecodingSolution) -> RateResult {
    RateResult {
        strategy,
        sum_rate: rate,
        per_user_rates: vec![rate],
        active_streams: sol.active_streams(),
    }
}

/// Point-to-point capacity with eigen-beamforming and water-filling.
pub fn su_mimo_cap(h: &CMat, p: f64, sigma_theta: f64) -> Result<(RateResult, PrecodingSolution)> {
    check_power(p)?;
    check_sigma(sigma_theta)?;
    let (v, powers, gains) = eigen_waterfill(h, p, sigma_theta)?;
    let rate: f64 = gains
        .iter()
        .zip(&powers)
        .map(|(g, q)| (g * q).ln_1p())
        .sum::<f64>()
        / std::f64::consts::LN_2;
    let sol = PrecodingSolution::with_matched_power(vec![v], vec![powers], p);
    Ok((mimo_result(Strategy::Cap, rate, &sol), sol))
}

/// Eigen-beamforming designed on `H_ULᵀ`, evaluated on the true `H`.
pub fn su_mimo_recip(
    h_true: &CMat,
    h_ul: &CMat,
    p: f64,
    sigma_theta: f64,
) -> Result<(RateResult, PrecodingSolution)> {
    check_power(p)?;
    check_sigma(sigma_theta)?;
    if h_ul.transpose().shape() != h_true.shape() {
        return Err(Error::Dimension(format!(
            "uplink {:?} is not the transpose shape of downlink {:?}",
            h_ul.shape(),
            h_true.shape()
        )));
    }
    let (v, powers, _) = eigen_waterfill(&h_ul.transpose(), p, sigma_theta)?;
    let rate = rate_with_covariance(h_true, &covariance(&v, &powers), sigma_theta)?;
    let sol = PrecodingSolution::with_matched_power(vec![v], vec![powers], p);
    Ok((mimo_result(Strategy::Recip, rate, &sol), sol))
}

/// Eigen-beamforming designed on `Ĥ′` with predicted power `P`; the rate is
/// evaluated on `Ĥ` and the solution carries `α(P)`.
pub fn su_mimo_hyp(
    h_hat: &CMat,
    h_hat_prime: &CMat,
    b: &CMat,
    b_hat_root: &CMat,
    p: f64,
    sigma_theta: f64,
) -> Result<(RateResult, PrecodingSolution)> {
    check_power(p)?;
    check_sigma(sigma_theta)?;
    if h_hat.shape() != h_hat_prime.shape() {
        return Err(Error::Dimension("Ĥ and Ĥ′ differ in shape".into()));
    }
    let (v, powers, _) = eigen_waterfill(h_hat_prime, p, sigma_theta)?;
    let rate = rate_with_covariance(h_hat, &covariance(&v, &powers), sigma_theta)?;
    let mut sol = PrecodingSolution::with_matched_power(vec![v], vec![powers], p);
    sol.apply_power_ratio(&coupling_mismatch(b, b_hat_root));
    Ok((mimo_result(Strategy::Hyp, rate, &sol), sol))
}
