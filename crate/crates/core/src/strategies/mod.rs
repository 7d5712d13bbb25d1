//! Transmit strategies and the rates they achieve.
//!
//! | strategy | channel used for the design        | channel transmitted over | budget       |
//! |----------|------------------------------------|--------------------------|--------------|
//! | cap      | `H` (corrected reciprocity)        | `H`                      | `P_T = P`    |
//! | recip    | `H_ULᵀ` (ordinary reciprocity)     | `H`                      | `P_T = P`    |
//! | hyp      | `Ĥ′` (coupling ignored)            | `Ĥ`                      | `P_T,p = P`  |
//!
//! The `_lin` variants replace the capacity-achieving scheme by greedy
//! zero-forcing. For "hyp" the radiated power differs from the predicted one
//! by the ratio α reported in [`PrecodingSolution`].

mod dual_mac;
mod greedy_zf;
mod single_user;

use serde::{Deserialize, Serialize};

use crate::numerics::log2_det_hpd;
use crate::{CMat, Error, Result};

pub use dual_mac::{
    dpc_rates, mac_hypothetical, mac_sum_capacity, mac_to_bc, mac_to_bc_covariances, MacOptions,
    MacSolution,
};
pub use greedy_zf::{evaluate_bc_rates, greedy_zf};
pub use single_user::{
    su_miso_cap, su_miso_hyp, su_miso_recip, su_mimo_cap, su_mimo_hyp, su_mimo_recip,
};

/// A stream counts as active when its power exceeds this fraction of the budget.
pub const ACTIVE_STREAM_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Cap,
    Recip,
    Hyp,
    CapLin,
    RecipLin,
    HypLin,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Cap,
        Strategy::Recip,
        Strategy::Hyp,
        Strategy::CapLin,
        Strategy::RecipLin,
        Strategy::HypLin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Cap => "cap",
            Strategy::Recip => "recip",
            Strategy::Hyp => "hyp",
            Strategy::CapLin => "cap_lin",
            Strategy::RecipLin => "recip_lin",
            Strategy::HypLin => "hyp_lin",
        }
    }

    /// Column header of the ergodic rate in result tables.
    pub fn rate_column(self) -> &'static str {
        match self {
            Strategy::Cap => "C_erg",
            Strategy::Recip => "R_erg_recip",
            Strategy::Hyp => "R_erg_hyp",
            Strategy::CapLin => "R_erg_lin",
            Strategy::RecipLin => "R_erg_recip_lin",
            Strategy::HypLin => "R_erg_hyp_lin",
        }
    }

    pub fn is_linear(self) -> bool {
        matches!(
            self,
            Strategy::CapLin | Strategy::RecipLin | Strategy::HypLin
        )
    }

    /// Whether the radiated power differs from the predicted one.
    pub fn is_hypothetical(self) -> bool {
        matches!(self, Strategy::Hyp | Strategy::HypLin)
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        Strategy::ALL.into_iter().find(|st| st.name() == s)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Precoders and power allocation of one transmission.
#[derive(Debug, Clone)]
pub struct PrecodingSolution {
    /// Per user, an `N × s_k` matrix whose columns are unit-norm beamformers.
    pub precoders: Vec<CMat>,
    /// Per user, the power of each stream in W.
    pub stream_powers: Vec<Vec<f64>>,
    /// Dual-MAC covariance `Ξ` when the solution stems from the dual MAC.
    pub dual_mac_covariance: Option<CMat>,
    pub predicted_power: f64,
    pub true_power: f64,
    /// `true_power / predicted_power`.
    pub alpha: f64,
}

impl PrecodingSolution {
    pub(crate) fn with_matched_power(
        precoders: Vec<CMat>,
        stream_powers: Vec<Vec<f64>>,
        power: f64,
    ) -> Self {
        PrecodingSolution {
            precoders,
            stream_powers,
            dual_mac_covariance: None,
            predicted_power: power,
            true_power: power,
            alpha: 1.0,
        }
    }

    /// Transmit covariance `Σ_k F_k diag(p_k) F_kᴴ` in the `x` domain.
    pub fn transmit_covariance(&self) -> CMat {
        let n = self.precoders.first().map_or(0, |f| f.nrows());
        let mut cov = CMat::zeros(n, n);
        for (f, p) in self.precoders.iter().zip(&self.stream_powers) {
            for (j, &pj) in p.iter().enumerate() {
                let col = f.column(j);
                cov += col * col.adjoint() * num_complex::Complex64::new(pj, 0.0);
            }
        }
        cov
    }

    pub fn total_stream_power(&self) -> f64 {
        self.stream_powers.iter().flatten().sum()
    }

    pub fn active_streams(&self) -> usize {
        let threshold = ACTIVE_STREAM_THRESHOLD * self.predicted_power;
        self.stream_powers
            .iter()
            .flatten()
            .filter(|&&p| p > threshold)
            .count()
    }

    /// Sets the predicted-to-radiated ratio from the coupling mismatch matrix
    /// `B̂^{-1/2} B B̂^{-H/2}`.
    pub(crate) fn apply_power_ratio(&mut self, mismatch: &CMat) {
        let cov = self.transmit_covariance();
        let radiated = (mismatch * cov).trace().re;
        self.true_power = radiated;
        self.alpha = if self.predicted_power > 0.0 {
            radiated / self.predicted_power
        } else {
            f64::NAN
        };
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateResult {
    pub strategy: Strategy,
    /// Sum rate in bits per channel use.
    pub sum_rate: f64,
    pub per_user_rates: Vec<f64>,
    pub active_streams: usize,
}

/// `B̂^{-1/2} B B̂^{-H/2}` for a diagonal `B̂^{1/2}`; its quadratic form with a
/// unit vector is the radiated-to-predicted power ratio of that direction.
pub fn coupling_mismatch(b: &CMat, b_hat_root: &CMat) -> CMat {
    let beta = b_hat_root.diagonal();
    CMat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] / (beta[i] * beta[j].conj()))
}

/// `log₂ det(I + σ⁻² H R_x Hᴴ)` for a transmit covariance `R_x`.
pub fn rate_with_covariance(h: &CMat, r_x: &CMat, sigma_theta: f64) -> Result<f64> {
    if r_x.nrows() != h.ncols() {
        return Err(Error::Dimension(format!(
            "covariance is {}×{}, channel has {} columns",
            r_x.nrows(),
            r_x.ncols(),
            h.ncols()
        )));
    }
    let s = h * r_x * h.adjoint() / num_complex::Complex64::new(sigma_theta * sigma_theta, 0.0);
    Ok(log2_det_hpd(&crate::numerics::identity_plus(&s))?.max(0.0))
}

pub(crate) fn check_power(p: f64) -> Result<()> {
    if !(p >= 0.0) || !p.is_finite() {
        return Err(Error::Domain(format!("power must be nonnegative, got {p}")));
    }
    Ok(())
}

pub(crate) fn check_sigma(sigma_theta: f64) -> Result<()> {
    if !(sigma_theta > 0.0) || !sigma_theta.is_finite() {
        return Err(Error::Domain(format!(
            "noise level must be positive, got {sigma_theta}"
        )));
    }
    Ok(())
}

pub(crate) fn check_partition(partition: &[usize], rows: usize) -> Result<()> {
    if partition.is_empty()
        || partition.iter().any(|&k| k == 0)
        || partition.iter().sum::<usize>() != rows
    {
        return Err(Error::Dimension(format!(
            "user partition {partition:?} does not match {rows} channel rows"
        )));
    }
    Ok(())
}
