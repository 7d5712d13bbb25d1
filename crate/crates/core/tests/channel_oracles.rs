//! Channel construction against solve-based, sampling and self-consistency oracles.

mod common;

use common::{c, matched_system, random_noise, random_system, random_users, rel_err, rng, uca};
use coupled_mimo::channel::{
    compute_b, compute_d, compute_h, compute_q_reta, ordinary_reciprocity_gap, recip_transform,
    Direction, ImpedanceSystem, NoiseConfig,
};
use coupled_mimo::em_arrays::{block_diagonal, dipole_self_impedance};
use coupled_mimo::montecarlo::{sample_z21, DEFAULT_SIGMA_Z};
use coupled_mimo::numerics::{frobenius, hermitian_eigen};
use coupled_mimo::{CMat, BOLTZMANN};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn inverse(a: &CMat) -> CMat {
    a.clone().qr().try_inverse().expect("invertible")
}

fn shifted(a: &CMat, z: Complex64) -> CMat {
    a + CMat::identity(a.nrows(), a.ncols()) * z
}

fn real_part(a: &CMat) -> CMat {
    a.map(|v| c(v.re, 0.0))
}

fn hermitian_gap(a: &CMat) -> f64 {
    frobenius(&(a - a.adjoint())) / frobenius(a)
}

#[test]
fn d_matches_inverse_based_oracle() {
    let mut r = rng(1);
    for _ in 0..20 {
        let n = r.random_range(2..12);
        let users = random_users(&mut r);
        let sys = random_system(&mut r, n, &users);
        let oracle = inverse(&shifted(sys.z22(), sys.z_l())) * sys.z21() * inverse(&shifted(sys.z11(), sys.z_g())) * sys.z_l();
        assert!(rel_err(&compute_d(&sys).unwrap(), &oracle) < 1e-12);
    }
}

#[test]
fn power_coupling_matrix_and_root() {
    let mut r = rng(2);
    for _ in 0..20 {
        let n = r.random_range(2..20);
        let sys = random_system(&mut r, n, &[1]);
        let (b, root) = compute_b(&sys).unwrap();
        let a_inv = inverse(&shifted(sys.z11(), sys.z_g()));
        let oracle = a_inv.adjoint() * real_part(sys.z11()) * &a_inv * c(sys.r_g(), 0.0);
        assert!(rel_err(&b, &oracle) < 1e-10);
        assert!(rel_err(&(&root * root.adjoint()), &b) < 1e-10);
        assert!(hermitian_gap(&b) < 1e-12);
        let (values, _) = hermitian_eigen(&b).unwrap();
        assert!(values.iter().all(|&v| v > 0.0));
    }
}

/// `η = Z_L/√R_L (Z₂₂ + Z_L I)⁻¹ (u_A − u_N + Z₂₂ i_N)` sampled directly.
#[test]
fn noise_covariance_matches_sampling() {
    let mut r = rng(3);
    let sys = random_system(&mut r, 4, &[3, 2]);
    let noise = NoiseConfig::from_lna(290.0, 740e3, 8.0, 3e-3, c(0.3, -0.2));
    let nc = compute_q_reta(&sys, &noise).unwrap();
    let m = sys.n_rx();
    let r_a = real_part(sys.z22()) * c(4.0 * BOLTZMANN * noise.t_a * noise.delta_f, 0.0);
    let r_a_root = r_a.clone().cholesky().expect("Re(Z22) is positive definite").l();
    let gain = inverse(&shifted(sys.z22(), sys.z_l())) * (sys.z_l() / sys.r_l().sqrt());
    let rho = noise.rho;
    let tail = (1.0 - rho.norm_sqr()).sqrt();
    let draws = 100_000;
    let mut acc = CMat::zeros(m, m);
    for _ in 0..draws {
        let w = common::random_cvec(&mut r, m);
        let a = common::random_cvec(&mut r, m);
        let b = common::random_cvec(&mut r, m);
        let u_a = &r_a_root * w;
        let u_n = &a * c(noise.sigma_u, 0.0);
        let i_n = (a * rho.conj() + b * c(tail, 0.0)) * c(noise.sigma_i, 0.0);
        let eta = &gain * (u_a - u_n + sys.z22() * i_n);
        acc += &eta * eta.adjoint();
    }
    let sample = acc / c(draws as f64, 0.0);
    for i in 0..m {
        for j in 0..m {
            let scale = (nc.r_eta[(i, i)].re * nc.r_eta[(j, j)].re).sqrt();
            let err = (sample[(i, j)] - nc.r_eta[(i, j)]).norm() / scale;
            assert!(err < 0.03, "entry ({i},{j}): {} vs {}", sample[(i, j)], nc.r_eta[(i, j)]);
        }
    }
}

#[test]
fn noise_of_identical_single_antenna_users_is_white() {
    let mut r = rng(4);
    let za = dipole_self_impedance();
    let z22 = CMat::identity(3, 3) * za;
    let z21 = sample_z21(3, 5, DEFAULT_SIGMA_Z, &mut r).unwrap();
    let zl = c(za.re, 0.0);
    let sys = ImpedanceSystem::new(uca(5, 0.4), z22, z21, zl, zl, vec![1, 1, 1]).unwrap();
    let noise = random_noise(&mut r);
    let nc = compute_q_reta(&sys, &noise).unwrap();
    let (su, si) = (noise.sigma_u, noise.sigma_i);
    let sigma_q2 = su * su + si * si * za.norm_sqr() - 2.0 * su * si * (noise.rho.conj() * za).re
        + 4.0 * BOLTZMANN * noise.t_a * noise.delta_f * za.re;
    let sigma_eta2 = zl.norm_sqr() / zl.re * sigma_q2 / (za + zl).norm_sqr();
    assert!(rel_err(&nc.r_eta, &(CMat::identity(3, 3) * c(sigma_eta2, 0.0))) < 1e-12);
    assert!((nc.sigma_theta * nc.sigma_theta / sigma_eta2 - 1.0).abs() < 1e-12);
}

#[test]
fn uncoupled_system_reduces_everything() {
    let mut r = rng(5);
    let za = dipole_self_impedance();
    let z21 = sample_z21(3, 3, DEFAULT_SIGMA_Z, &mut r).unwrap();
    let z = c(za.re, 0.0);
    let sys = ImpedanceSystem::new(CMat::identity(3, 3) * za, CMat::identity(3, 3) * za, z21, z, z, vec![1, 1, 1]).unwrap();
    let noise = NoiseConfig::default();
    let dl = compute_h(&sys, &noise, Direction::Downlink).unwrap();
    let ul = compute_h(&sys, &noise, Direction::Uplink).unwrap();
    assert!(rel_err(&dl.h, &ul.h.transpose()) < 1e-12);
    assert!(ordinary_reciprocity_gap(&dl, &ul) < 1e-12);
    assert!(rel_err(&dl.h_hat, &dl.h) < 1e-12);
    assert!(rel_err(&dl.b_hat, &dl.b) < 1e-12);
}

#[test]
fn whitened_belief_has_unit_diagonal() {
    let mut r = rng(6);
    let sys = random_system(&mut r, 6, &[2, 3]);
    let dl = compute_h(&sys, &random_noise(&mut r), Direction::Downlink).unwrap();
    let s2 = dl.sigma_theta * dl.sigma_theta;
    for i in 0..sys.n_rx() {
        let v = s2 * dl.r_eta[(i, i)].re / dl.r_eta_hat[(i, i)].re;
        assert!((v / s2 - 1.0).abs() < 1e-14);
        for j in 0..sys.n_rx() {
            if i != j {
                assert_eq!(dl.r_eta_hat[(i, j)], c(0.0, 0.0));
            }
        }
    }
    let n = sys.n_tx();
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            assert_eq!(dl.b_hat[(i, j)], c(0.0, 0.0));
        }
    }
}

/// With identical single-antenna mobiles the downlink is the transposed
/// uplink `D` times `B^{-H/2}`, up to the common phase of the load divider
/// that the Cholesky root of the noise carries.
#[test]
fn miso_downlink_from_uplink_d() {
    let mut r = rng(8);
    let za = dipole_self_impedance();
    let zt = c(za.re, 0.0);
    for k in 1..=3 {
        let z21 = sample_z21(k, 9, DEFAULT_SIGMA_Z, &mut r).unwrap();
        let sys = ImpedanceSystem::new(uca(9, 0.35), CMat::identity(k, k) * za, z21, zt, zt, vec![1; k]).unwrap();
        let dl = compute_h(&sys, &NoiseConfig::default(), Direction::Downlink).unwrap();
        let ul = compute_h(&sys, &NoiseConfig::default(), Direction::Uplink).unwrap();
        let phase = zt / (za + zt);
        let phase = phase / phase.norm();
        let b_inv_h = inverse(&dl.b_root.adjoint());
        let want = ul.d.transpose() * b_inv_h * phase.conj();
        assert!(rel_err(&dl.h, &want) < 1e-10);
    }
}

#[test]
fn multi_antenna_users_keep_block_structure() {
    let mut r = rng(9);
    let sys = random_system(&mut r, 7, &[2, 3, 1]);
    let noise = random_noise(&mut r);
    let dl = compute_h(&sys, &noise, Direction::Downlink).unwrap();
    let ul = compute_h(&sys, &noise, Direction::Uplink).unwrap();
    let owner = |i: usize| if i < 2 { 0 } else if i < 5 { 1 } else { 2 };
    for i in 0..6 {
        for j in 0..6 {
            if owner(i) != owner(j) {
                for m in [sys.z22(), &dl.q, &dl.r_eta, &ul.b, &ul.b_root] {
                    assert_eq!(m[(i, j)], c(0.0, 0.0), "entry ({i},{j})");
                }
            }
        }
    }
}

fn system_strategy() -> impl Strategy<Value = (u64, usize, Vec<usize>)> {
    (any::<u64>(), 1usize..=12, prop::collection::vec(1usize..=4, 1..=3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn d_is_reciprocal((seed, n, users) in system_strategy()) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, n, &users);
        let d = compute_d(&sys).unwrap();
        let d_ul = compute_d(&sys.transposed()).unwrap();
        prop_assert!(rel_err(&d_ul.transpose(), &d) < 1e-12);
    }

    #[test]
    fn consistent_reciprocity_recovers_downlink((seed, n, users) in system_strategy()) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, n, &users);
        let dl = compute_h(&sys, &random_noise(&mut r), Direction::Downlink).unwrap();
        let ul = compute_h(&sys, &random_noise(&mut r), Direction::Uplink).unwrap();
        let h = recip_transform(&ul, dl.downlink_factors()).unwrap();
        prop_assert!(rel_err(&h, &dl.h) < 1e-10);
    }

    #[test]
    fn channel_forms_agree((seed, n, users) in system_strategy()) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, n, &users);
        let dl = compute_h(&sys, &random_noise(&mut r), Direction::Downlink).unwrap();
        prop_assert!(rel_err(&dl.h_via_power_coupling().unwrap(), &dl.h) < 1e-10);
        let m = sys.n_rx() as f64;
        let tr: f64 = dl.r_eta.diagonal().iter().map(|v| v.re).sum();
        prop_assert!((dl.sigma_theta * dl.sigma_theta - tr / m).abs() <= 1e-12 * tr / m);
        for cov in [&dl.b, &dl.q, &dl.r_eta] {
            prop_assert!(hermitian_gap(cov) < 1e-12);
            let (values, _) = hermitian_eigen(cov).unwrap();
            prop_assert!(values.iter().all(|&v| v > 0.0));
        }
        prop_assert!(rel_err(&(&dl.r_eta_root * dl.r_eta_root.adjoint()), &dl.r_eta) < 1e-10);
        prop_assert!(rel_err(&(&dl.q_root * dl.q_root.adjoint()), &dl.q) < 1e-10);
    }

    #[test]
    fn coupled_arrays_break_ordinary_reciprocity(seed in any::<u64>(), n in 2usize..=12, d in 0.2f64..0.5) {
        let mut r = rng(seed);
        let sys = matched_system(&mut r, n, &[1], d);
        let dl = compute_h(&sys, &NoiseConfig::default(), Direction::Downlink).unwrap();
        let ul = compute_h(&sys, &NoiseConfig::default(), Direction::Uplink).unwrap();
        prop_assert!(ordinary_reciprocity_gap(&dl, &ul) > 1e-3);
    }
}

#[test]
fn block_diagonal_helper_layout() {
    let a = uca(2, 0.3);
    let b = uca(3, 0.3);
    let z = block_diagonal(&[a.clone(), b.clone()]);
    assert_eq!(z.view((0, 0), (2, 2)).clone_owned(), a);
    assert_eq!(z.view((2, 2), (3, 3)).clone_owned(), b);
    assert_eq!(z[(0, 4)], c(0.0, 0.0));
}
