//! Circuit-level description of a link and its mapping to the
//! information-theoretic channel `y = H x + ϑ`.
//!
//! All inverses are realized as linear solves. `Q^{1/2}` is the lower
//! Cholesky factor, `Re(Z₁₁)^{1/2}` the principal root and
//! `B^{1/2} = √R_G (Z₁₁ + Z_G I)^{-H} Re(Z₁₁)^{1/2}`, which is not Hermitian.

use num_complex::Complex64;

use crate::numerics::{
    cholesky_lower, frobenius, hermitian_part, principal_inv_sqrt, principal_psd_sqrt,
    solve_left, solve_lower, solve_right,
};
use crate::{CMat, Error, Result, BOLTZMANN};

/// Partitioned, reciprocal impedance matrix of a link plus its terminations.
///
/// Side 1 transmits and side 2 receives. `Z₁₂ = Z₂₁ᵀ` is never stored.
#[derive(Debug, Clone)]
pub struct ImpedanceSystem {
    z11: CMat,
    z22: CMat,
    z21: CMat,
    z_g: Complex64,
    z_l: Complex64,
    user_partition: Vec<usize>,
}

impl ImpedanceSystem {
    /// `user_partition` lists the antenna counts of the receiving nodes; `Z₂₂`
    /// must be block diagonal with respect to it.
    pub fn new(
        z11: CMat,
        z22: CMat,
        z21: CMat,
        z_g: Complex64,
        z_l: Complex64,
        user_partition: Vec<usize>,
    ) -> Result<Self> {
        let n = z11.nrows();
        let m = z22.nrows();
        if !z11.is_square() || !z22.is_square() || z21.shape() != (m, n) {
            return Err(Error::Dimension(format!(
                "Z11 {:?}, Z22 {:?}, Z21 {:?} are not a consistent partition",
                z11.shape(),
                z22.shape(),
                z21.shape()
            )));
        }
        if !(z_g.re > 0.0) || !(z_l.re > 0.0) {
            return Err(Error::Domain(
                "generator and load impedances need a positive real part".into(),
            ));
        }
        if user_partition.iter().any(|&k| k == 0) || user_partition.iter().sum::<usize>() != m {
            return Err(Error::Dimension(format!(
                "user partition {user_partition:?} does not cover {m} receive antennas"
            )));
        }
        let mut offset = 0;
        for &k in &user_partition {
            for i in offset..offset + k {
                for j in (0..m).filter(|j| *j < offset || *j >= offset + k) {
                    if z22[(i, j)] != Complex64::new(0.0, 0.0) {
                        return Err(Error::Dimension(format!(
                            "Z22 couples antenna {i} and {j} of different users"
                        )));
                    }
                }
            }
            offset += k;
        }
        Ok(ImpedanceSystem {
            z11,
            z22,
            z21,
            z_g,
            z_l,
            user_partition,
        })
    }

    /// The same physical system seen in the opposite direction (`Zᵀ`). The
    /// former transmitter becomes a single receiving node.
    pub fn transposed(&self) -> Self {
        ImpedanceSystem {
            z11: self.z22.clone(),
            z22: self.z11.clone(),
            z21: self.z21.transpose(),
            z_g: self.z_g,
            z_l: self.z_l,
            user_partition: vec![self.z11.nrows()],
        }
    }

    pub fn z11(&self) -> &CMat {
        &self.z11
    }
    pub fn z22(&self) -> &CMat {
        &self.z22
    }
    pub fn z21(&self) -> &CMat {
        &self.z21
    }
    pub fn z12(&self) -> CMat {
        self.z21.transpose()
    }
    pub fn z_g(&self) -> Complex64 {
        self.z_g
    }
    pub fn z_l(&self) -> Complex64 {
        self.z_l
    }
    pub fn r_g(&self) -> f64 {
        self.z_g.re
    }
    pub fn r_l(&self) -> f64 {
        self.z_l.re
    }
    pub fn user_partition(&self) -> &[usize] {
        &self.user_partition
    }
    /// Number of transmit antennas N.
    pub fn n_tx(&self) -> usize {
        self.z11.nrows()
    }
    /// Number of receive antennas M.
    pub fn n_rx(&self) -> usize {
        self.z22.nrows()
    }

    fn tx_loaded(&self) -> CMat {
        shifted(&self.z11, self.z_g)
    }
    fn rx_loaded(&self) -> CMat {
        shifted(&self.z22, self.z_l)
    }
}

fn shifted(z: &CMat, s: Complex64) -> CMat {
    let mut out = z.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += s;
    }
    out
}

fn real_part(z: &CMat) -> CMat {
    z.map(|v| Complex64::new(v.re, 0.0))
}

fn scale(m: &CMat, s: f64) -> CMat {
    m * Complex64::new(s, 0.0)
}

/// Receiver noise: LNA voltage and current sources plus thermal antenna noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Voltage noise standard deviation in V.
    pub sigma_u: f64,
    /// Current noise standard deviation in A.
    pub sigma_i: f64,
    /// Correlation `E[u_N i_N*]/(σ_u σ_i)`.
    pub rho: Complex64,
    /// Antenna noise temperature in K.
    pub t_a: f64,
    /// Noise bandwidth in Hz.
    pub delta_f: f64,
}

impl Default for NoiseConfig {
    /// 290 K, 740 kHz, uncorrelated LNA sources with a 5 Ω noise resistance
    /// and a 2 mS noise conductance.
    fn default() -> Self {
        Self::from_lna(290.0, 740e3, 5.0, 2e-3, Complex64::new(0.0, 0.0))
    }
}

impl NoiseConfig {
    /// Builds σ_u, σ_i from an equivalent noise resistance and conductance at
    /// the reference temperature of 290 K.
    pub fn from_lna(
        t_a: f64,
        delta_f: f64,
        noise_resistance: f64,
        noise_conductance: f64,
        rho: Complex64,
    ) -> Self {
        let kt = 4.0 * BOLTZMANN * 290.0 * delta_f;
        NoiseConfig {
            sigma_u: (kt * noise_resistance).sqrt(),
            sigma_i: (kt * noise_conductance).sqrt(),
            rho,
            t_a,
            delta_f,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma_u", self.sigma_u),
            ("sigma_i", self.sigma_i),
            ("t_a", self.t_a),
            ("delta_f", self.delta_f),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.rho.norm() <= 1.0) {
            return Err(Error::Domain(format!("|rho| must not exceed 1, got {}", self.rho)));
        }
        Ok(())
    }

    /// Same configuration with every noise power multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        NoiseConfig {
            sigma_u: self.sigma_u * factor.sqrt(),
            sigma_i: self.sigma_i * factor.sqrt(),
            t_a: self.t_a * factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Downlink,
    Uplink,
}

/// `D = Z_L (Z₂₂ + Z_L I)⁻¹ Z₂₁ (Z₁₁ + Z_G I)⁻¹` (unilateral approximation).
pub fn compute_d(sys: &ImpedanceSystem) -> Result<CMat> {
    let right = solve_right(sys.z21(), &sys.tx_loaded())?;
    Ok(solve_left(&sys.rx_loaded(), &right)? * sys.z_l())
}

/// Power-coupling matrix `B` and its root `B^{1/2}` with `B = B^{1/2} B^{H/2}`.
pub fn compute_b(sys: &ImpedanceSystem) -> Result<(CMat, CMat)> {
    let loaded = sys.tx_loaded();
    let re = real_part(sys.z11());
    let re_root = principal_psd_sqrt(&re)?.root;
    let left = solve_left(&loaded.adjoint(), &re)?;
    let b = hermitian_part(&scale(&solve_right(&left, &loaded)?, sys.r_g()))?;
    let b_root = scale(&solve_left(&loaded.adjoint(), &re_root)?, sys.r_g().sqrt());
    Ok((b, b_root))
}

/// Power-coupling matrix predicted when coupling is ignored (one antenna
/// excited at a time, the others open), and its diagonal root.
pub fn compute_b_hat(sys: &ImpedanceSystem) -> Result<(CMat, CMat)> {
    let n = sys.n_tx();
    let mut b_hat = CMat::zeros(n, n);
    let mut root = CMat::zeros(n, n);
    for i in 0..n {
        let z = sys.z11()[(i, i)];
        if !(z.re > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "self resistance of antenna {i} is {}",
                z.re
            )));
        }
        let loaded = z + sys.z_g();
        b_hat[(i, i)] = Complex64::new(sys.r_g() * z.re / loaded.norm_sqr(), 0.0);
        root[(i, i)] = sys.r_g().sqrt() * z.re.sqrt() / loaded.conj();
    }
    Ok((b_hat, root))
}

/// Noise quantities of the receiving side.
#[derive(Debug, Clone)]
pub struct NoiseCovariances {
    pub q: CMat,
    /// Lower Cholesky factor of `Q`.
    pub q_root: CMat,
    pub r_eta: CMat,
    /// `R_η^{1/2} = Z_L/√R_L (Z₂₂ + Z_L I)⁻¹ Q^{1/2}`.
    pub r_eta_root: CMat,
    /// Scalar noise level with `σ_ϑ² = tr(R_η)/M`.
    pub sigma_theta: f64,
}

/// Open-circuit noise covariance `Q`, load-referred `R_η`, and `σ_ϑ`.
pub fn compute_q_reta(sys: &ImpedanceSystem, noise: &NoiseConfig) -> Result<NoiseCovariances> {
    noise.validate()?;
    let z22 = sys.z22();
    let m = sys.n_rx();
    let su = noise.sigma_u;
    let si = noise.sigma_i;
    let r_a = scale(&real_part(z22), 4.0 * BOLTZMANN * noise.t_a * noise.delta_f);
    let cross = z22.adjoint() * noise.rho + z22 * noise.rho.conj();
    let q = CMat::identity(m, m) * Complex64::new(su * su, 0.0) + scale(&(z22 * z22.adjoint()), si * si)
        - scale(&cross, su * si)
        + r_a;
    let q_chol = cholesky_lower(&q)?;
    let loaded = sys.rx_loaded();
    let gain = sys.z_l().norm_sqr() / sys.r_l();
    let r_eta = hermitian_part(&scale(
        &solve_left(&loaded, &solve_right(&q_chol.original, &loaded.adjoint())?)?,
        gain,
    ))?;
    let r_eta_root =
        solve_left(&loaded, &q_chol.root)? * (sys.z_l() / Complex64::new(sys.r_l().sqrt(), 0.0));
    let trace: f64 = r_eta.diagonal().iter().map(|z| z.re).sum();
    Ok(NoiseCovariances {
        q: q_chol.original,
        q_root: q_chol.root,
        r_eta,
        r_eta_root,
        sigma_theta: (trace / m as f64).sqrt(),
    })
}

/// Every derived matrix of one link direction for one channel realization.
#[derive(Debug, Clone)]
pub struct ChannelBundle {
    pub direction: Direction,
    pub d: CMat,
    pub b: CMat,
    /// `B^{1/2}`; its adjoint is the `B^{H/2}` factor of the transmit mapping.
    pub b_root: CMat,
    pub b_hat: CMat,
    pub b_hat_root: CMat,
    pub q: CMat,
    pub q_root: CMat,
    pub r_eta: CMat,
    pub r_eta_root: CMat,
    /// `diag(R_η)`.
    pub r_eta_hat: CMat,
    pub sigma_theta: f64,
    pub h: CMat,
    /// Channel actually transmitted over when coupling is ignored.
    pub h_hat: CMat,
    /// Channel the base station believes in when coupling is ignored.
    pub h_hat_prime: CMat,
    /// `√(R_G/R_L)`, one for matched terminations.
    pub termination_ratio: f64,
    pub user_partition: Vec<usize>,
}

/// Factors of the downlink needed to map an uplink channel back.
#[derive(Debug, Clone, Copy)]
pub struct DownlinkFactors<'a> {
    pub r_eta_root: &'a CMat,
    pub b_root: &'a CMat,
    pub sigma_theta: f64,
}

impl ChannelBundle {
    pub fn downlink_factors(&self) -> DownlinkFactors<'_> {
        DownlinkFactors {
            r_eta_root: &self.r_eta_root,
            b_root: &self.b_root,
            sigma_theta: self.sigma_theta,
        }
    }

    /// `H` through the power-coupling form `σ_ϑ √(R_G/R_L) R_η^{-1/2} D B^{-H/2}`.
    pub fn h_via_power_coupling(&self) -> Result<CMat> {
        let whitened = solve_left(&self.r_eta_root, &self.d)?;
        let h = solve_right(&whitened, &self.b_root.adjoint())?;
        Ok(scale(&h, self.sigma_theta * self.termination_ratio))
    }

    /// Row block of `m` belonging to user `k`.
    pub fn user_rows(&self, m: &CMat, k: usize) -> CMat {
        user_rows(m, &self.user_partition, k)
    }
}

pub(crate) fn user_rows(m: &CMat, partition: &[usize], k: usize) -> CMat {
    let offset: usize = partition[..k].iter().sum();
    m.rows(offset, partition[k]).clone_owned()
}

/// Mismatched channels `(Ĥ, Ĥ′)` of the conventional, coupling-free model.
pub fn compute_h_hat(sys: &ImpedanceSystem, noise: &NoiseConfig) -> Result<(CMat, CMat)> {
    let d = compute_d(sys)?;
    let (_, b_hat_root) = compute_b_hat(sys)?;
    let nc = compute_q_reta(sys, noise)?;
    h_hat_from_parts(sys, &d, &b_hat_root, &nc)
}

fn h_hat_from_parts(
    sys: &ImpedanceSystem,
    d: &CMat,
    b_hat_root: &CMat,
    nc: &NoiseCovariances,
) -> Result<(CMat, CMat)> {
    let c = (sys.r_g() / sys.r_l()).sqrt();
    // B̂^{-H/2} is diagonal with entries 1/conj(β_i)
    let inv_root_h = CMat::from_diagonal(
        &b_hat_root
            .diagonal()
            .map(|beta| Complex64::new(1.0, 0.0) / beta.conj()),
    );
    let d_scaled = d * inv_root_h;
    let h_hat = scale(&solve_left(&nc.r_eta_root, &d_scaled)?, nc.sigma_theta * c);
    let mut h_hat_prime = d_scaled;
    for i in 0..h_hat_prime.nrows() {
        let r = nc.r_eta[(i, i)].re;
        if !(r > 0.0) {
            return Err(Error::NotPositiveDefinite("diagonal of R_eta".into()));
        }
        h_hat_prime.row_mut(i).scale_mut(nc.sigma_theta * c / r.sqrt());
    }
    Ok((h_hat, h_hat_prime))
}

/// Builds the full bundle for the given direction. The uplink uses the
/// transposed impedance matrix with `noise` describing the base-station
/// receivers.
pub fn compute_h(
    sys: &ImpedanceSystem,
    noise: &NoiseConfig,
    direction: Direction,
) -> Result<ChannelBundle> {
    let oriented;
    let sys = match direction {
        Direction::Downlink => sys,
        Direction::Uplink => {
            oriented = sys.transposed();
            &oriented
        }
    };
    let d = compute_d(sys)?;
    let (b, b_root) = compute_b(sys)?;
    let (b_hat, b_hat_root) = compute_b_hat(sys)?;
    let nc = compute_q_reta(sys, noise)?;

    let re_inv_sqrt = principal_inv_sqrt(&real_part(sys.z11()))?;
    let h = scale(
        &(solve_lower(&nc.q_root, sys.z21())? * re_inv_sqrt),
        nc.sigma_theta,
    );
    let (h_hat, h_hat_prime) = h_hat_from_parts(sys, &d, &b_hat_root, &nc)?;
    let r_eta_hat = CMat::from_diagonal(&nc.r_eta.diagonal());

    Ok(ChannelBundle {
        direction,
        d,
        b,
        b_root,
        b_hat,
        b_hat_root,
        q: nc.q,
        q_root: nc.q_root,
        r_eta: nc.r_eta,
        r_eta_root: nc.r_eta_root,
        r_eta_hat,
        sigma_theta: nc.sigma_theta,
        h,
        h_hat,
        h_hat_prime,
        termination_ratio: (sys.r_g() / sys.r_l()).sqrt(),
        user_partition: sys.user_partition().to_vec(),
    })
}

/// Downlink channel from the uplink one via the physically consistent relation
/// `H = (σ_ϑ/σ_ϑ,UL) R_η^{-1/2} B_UL^{*/2} H_ULᵀ R_η,UL^{T/2} B^{-H/2}`.
pub fn recip_transform(ul: &ChannelBundle, dl: DownlinkFactors<'_>) -> Result<CMat> {
    let m = ul.b_root.nrows();
    let n = ul.r_eta_root.nrows();
    if dl.r_eta_root.nrows() != m || dl.b_root.nrows() != n || ul.h.shape() != (n, m) {
        return Err(Error::Dimension(format!(
            "uplink bundle ({n}×{m}) does not match downlink factors ({}, {})",
            dl.r_eta_root.nrows(),
            dl.b_root.nrows()
        )));
    }
    let middle = ul.b_root.conjugate() * ul.h.transpose() * ul.r_eta_root.transpose();
    let left = solve_left(dl.r_eta_root, &middle)?;
    let h = solve_right(&left, &dl.b_root.adjoint())?;
    Ok(scale(&h, dl.sigma_theta / ul.sigma_theta))
}

/// Relative Frobenius gap `‖H − H_ULᵀ‖ / ‖H‖` between the true downlink and
/// the one assumed under ordinary reciprocity.
pub fn ordinary_reciprocity_gap(dl: &ChannelBundle, ul: &ChannelBundle) -> f64 {
    frobenius(&(&dl.h - ul.h.transpose())) / frobenius(&dl.h)
}
