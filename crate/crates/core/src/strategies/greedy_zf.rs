//! Greedy zero-forcing with successive stream allocation ("LISA-flavored").
//!
//! Streams are added one at a time. For each user the dominant direction of
//! its channel restricted to the orthogonal complement of the rows already
//! chosen is computed; the strongest one becomes a candidate row. The
//! zero-forcing beamformers of the enlarged set are water-filled and the
//! candidate is kept only if the sum rate grows.

use super::{check_partition, check_power, check_sigma, PrecodingSolution, RateResult, Strategy};
use crate::channel::user_rows;
use crate::numerics::{hermitian_eigen, log2_det_hpd, solve_left, symmetrize, waterfill};
use crate::{CMat, Error, Result};

/// Relative gain below which a projected channel is treated as empty.
const NULL_GAIN: f64 = 1e-12;

struct Selection {
    users: Vec<usize>,
    rows: CMat,
}

/// Unit-norm zero-forcing beamformers for `rows` (`s × N`) and the norms of
/// the unnormalized pseudo-inverse columns.
fn zero_forcing(rows: &CMat) -> Result<(CMat, Vec<f64>)> {
    let gram = rows * rows.adjoint();
    let pinv = solve_left(&gram, rows)?.adjoint();
    let mut beams = pinv;
    let mut norms = Vec::with_capacity(beams.ncols());
    for mut col in beams.column_iter_mut() {
        let n = col.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Singular("zero-forcing column".into()));
        }
        col.scale_mut(1.0 / n);
        norms.push(n);
    }
    Ok((beams, norms))
}

fn projector_complement(rows: &CMat, n: usize) -> Result<CMat> {
    let mut proj = CMat::identity(n, n);
    if rows.nrows() > 0 {
        let gram = rows * rows.adjoint();
        proj -= rows.adjoint() * solve_left(&gram, rows)?;
    }
    Ok(proj)
}

fn allocation(rows: &CMat, p: f64, noise: f64) -> Result<(CMat, Vec<f64>, f64)> {
    let (beams, norms) = zero_forcing(rows)?;
    let gains: Vec<f64> = norms.iter().map(|n| 1.0 / (noise * n * n)).collect();
    let powers = waterfill(&gains, p)?;
    let rate = gains
        .iter()
        .zip(&powers)
        .map(|(g, q)| (g * q).ln_1p())
        .sum::<f64>()
        / std::f64::consts::LN_2;
    Ok((beams, powers, rate))
}

/// Greedy zero-forcing precoder designed on `h_assumed` (`M × N`).
pub fn greedy_zf(
    h_assumed: &CMat,
    p: f64,
    sigma_theta: f64,
    partition: &[usize],
) -> Result<PrecodingSolution> {
    check_power(p)?;
    check_sigma(sigma_theta)?;
    check_partition(partition, h_assumed.nrows())?;
    let n = h_assumed.ncols();
    let noise = sigma_theta * sigma_theta;
    let max_streams = n.min(h_assumed.nrows());
    let blocks: Vec<CMat> = (0..partition.len())
        .map(|k| user_rows(h_assumed, partition, k))
        .collect();

    let mut sel = Selection {
        users: Vec::new(),
        rows: CMat::zeros(0, n),
    };
    let mut best: Option<(CMat, Vec<f64>, f64)> = None;
    let mut reference_gain = 0.0;

    while p > 0.0 && sel.users.len() < max_streams {
        let proj = projector_complement(&sel.rows, n)?;
        let mut pick: Option<(usize, f64, CMat)> = None;
        for (k, hk) in blocks.iter().enumerate() {
            if sel.users.iter().filter(|&&u| u == k).count() >= partition[k] {
                continue;
            }
            let projected = hk * &proj;
            let (values, vectors) = hermitian_eigen(&symmetrize(&(&projected * projected.adjoint())))?;
            let gain = values[0];
            if pick.as_ref().is_none_or(|(_, g, _)| gain > *g) {
                let u = vectors.columns(0, 1).clone_owned();
                pick = Some((k, gain, u.adjoint() * hk));
            }
        }
        let Some((user, gain, row)) = pick else { break };
        if sel.users.is_empty() {
            reference_gain = gain;
        }
        if !(gain > NULL_GAIN * reference_gain) || !(gain > 0.0) {
            break;
        }
        let mut rows = CMat::zeros(sel.rows.nrows() + 1, n);
        rows.rows_mut(0, sel.rows.nrows()).copy_from(&sel.rows);
        rows.row_mut(sel.rows.nrows()).copy_from(&row);
        let candidate = allocation(&rows, p, noise)?;
        let improves = best
            .as_ref()
            .is_none_or(|(_, _, r)| candidate.2 > r * (1.0 + 1e-12));
        if !improves {
            break;
        }
        sel.users.push(user);
        sel.rows = rows;
        best = Some(candidate);
    }

    let mut precoders: Vec<CMat> = partition.iter().map(|_| CMat::zeros(n, 0)).collect();
    let mut powers: Vec<Vec<f64>> = vec![Vec::new(); partition.len()];
    if let Some((beams, stream_powers, _)) = best {
        for (s, &user) in sel.users.iter().enumerate() {
            let f = &precoders[user];
            let mut grown = CMat::zeros(n, f.ncols() + 1);
            grown.columns_mut(0, f.ncols()).copy_from(f);
            grown.column_mut(f.ncols()).copy_from(&beams.column(s));
            precoders[user] = grown;
            powers[user].push(stream_powers[s]);
        }
    }
    Ok(PrecodingSolution::with_matched_power(precoders, powers, p))
}

/// Rates of a linear precoding solution over `h_true` with optimum
/// (interference-aware) receivers at every user.
pub fn evaluate_bc_rates(
    h_true: &CMat,
    solution: &PrecodingSolution,
    sigma_theta: f64,
    partition: &[usize],
    strategy: Strategy,
) -> Result<RateResult> {
    check_sigma(sigma_theta)?;
    check_partition(partition, h_true.nrows())?;
    if solution.precoders.len() != partition.len() {
        return Err(Error::Dimension(format!(
            "{} precoders for {} users",
            solution.precoders.len(),
            partition.len()
        )));
    }
    let n = h_true.ncols();
    let noise = sigma_theta * sigma_theta;
    let signal: Vec<CMat> = solution
        .precoders
        .iter()
        .zip(&solution.stream_powers)
        .map(|(f, q)| {
            if f.nrows() != n || f.ncols() != q.len() {
                return Err(Error::Dimension("precoder does not match channel".into()));
            }
            let mut scaled = f.clone();
            for (j, &qj) in q.iter().enumerate() {
                scaled.column_mut(j).scale_mut(qj / noise);
            }
            Ok(scaled * f.adjoint())
        })
        .collect::<Result<_>>()?;
    let total = signal.iter().fold(CMat::zeros(n, n), |acc, s| acc + s);

    let mut rates = Vec::with_capacity(partition.len());
    for (k, own) in signal.iter().enumerate() {
        let hk = user_rows(h_true, partition, k);
        let mk = partition[k];
        let eye = CMat::identity(mk, mk);
        let interference = &eye + &hk * (&total - own) * hk.adjoint();
        let all = &eye + &hk * &total * hk.adjoint();
        rates.push((log2_det_hpd(&all)? - log2_det_hpd(&interference)?).max(0.0));
    }
    Ok(RateResult {
        strategy,
        sum_rate: rates.iter().sum(),
        per_user_rates: rates,
        active_streams: solution.active_streams(),
    })
}
