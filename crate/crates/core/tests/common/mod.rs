//! Random systems shared by the integration tests.
#![allow(dead_code)]

pub mod oracles;

use coupled_mimo::channel::{ImpedanceSystem, NoiseConfig};
use coupled_mimo::em_arrays::{array_impedance_matrix, block_diagonal, dipole_self_impedance, ArrayGeometry};
use coupled_mimo::montecarlo::{sample_z21, DEFAULT_SIGMA_Z};
use coupled_mimo::numerics::frobenius;
use coupled_mimo::{CMat, CVec};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn cn<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_cmat<R: Rng>(rng: &mut R, m: usize, n: usize) -> CMat {
    CMat::from_fn(m, n, |_, _| cn(rng))
}

pub fn random_cvec<R: Rng>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| cn(rng))
}

/// Random Hermitian matrix with standard normal entries.
pub fn random_hermitian<R: Rng>(rng: &mut R, n: usize) -> CMat {
    let a = random_cmat(rng, n, n);
    (&a + a.adjoint()) * c(0.5, 0.0)
}

pub fn rel_err(a: &CMat, b: &CMat) -> f64 {
    frobenius(&(a - b)) / frobenius(b).max(f64::MIN_POSITIVE)
}

pub fn uca(n: usize, d: f64) -> CMat {
    array_impedance_matrix(&ArrayGeometry::uca(n, d).unwrap()).unwrap()
}

/// Coupled UCAs on both sides with a sampled `Z₂₁` and a random complex
/// termination shared by generators and loads (`Z_G = Z_L`, the setting in
/// which `D` is reciprocal).
pub fn random_system<R: Rng>(rng: &mut R, n: usize, users: &[usize]) -> ImpedanceSystem {
    let d_bs = rng.random_range(0.2..0.6);
    let blocks: Vec<CMat> = users
        .iter()
        .map(|&m| uca(m, rng.random_range(0.2..0.6)))
        .collect();
    let m: usize = users.iter().sum();
    let z21 = sample_z21(m, n, DEFAULT_SIGMA_Z, rng).unwrap();
    let z_t = c(rng.random_range(30.0..120.0), rng.random_range(-20.0..20.0));
    ImpedanceSystem::new(uca(n, d_bs), block_diagonal(&blocks), z21, z_t, z_t, users.to_vec()).unwrap()
}

/// Matched terminations and equal spacing, as in the Monte Carlo scenarios.
pub fn matched_system<R: Rng>(rng: &mut R, n: usize, users: &[usize], d: f64) -> ImpedanceSystem {
    let blocks: Vec<CMat> = users.iter().map(|&m| uca(m, d)).collect();
    let m: usize = users.iter().sum();
    let z21 = sample_z21(m, n, DEFAULT_SIGMA_Z, rng).unwrap();
    let r = c(dipole_self_impedance().re, 0.0);
    ImpedanceSystem::new(uca(n, d), block_diagonal(&blocks), z21, r, r, users.to_vec()).unwrap()
}

/// Default LNA noise with a random correlation coefficient.
pub fn random_noise<R: Rng>(rng: &mut R) -> NoiseConfig {
    let rho = c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
    NoiseConfig::from_lna(
        rng.random_range(100.0..400.0),
        740e3,
        rng.random_range(1.0..20.0),
        rng.random_range(5e-4..5e-3),
        rho,
    )
}

/// Uniform draw of user antenna counts: 1 to 3 users with 1 to 9 antennas each.
pub fn random_users<R: Rng>(rng: &mut R) -> Vec<usize> {
    let k = rng.random_range(1..=3);
    (0..k).map(|_| rng.random_range(1..=9)).collect()
}
