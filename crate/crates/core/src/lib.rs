//! Physically consistent MIMO up- and downlink channels for antenna arrays
//! with mutual coupling.
//!
//! The crate goes from impedance matrices to information-theoretic channels,
//! evaluates three transmit strategies on them ("cap" uses the corrected
//! reciprocity relation, "recip" assumes ordinary reciprocity `H = H_ULᵀ`,
//! "hyp" ignores coupling altogether) and aggregates ergodic rates, radiated
//! power ratios and active-stream statistics over Monte Carlo realizations.
//!
//! Module map:
//! - [`em_arrays`]: half-wave dipole self/mutual impedances and UCA impedance matrices.
//! - [`numerics`]: Hermitian factorizations, water-filling, PSD/trace projection.
//! - [`channel`]: impedance systems, noise model and every derived channel matrix.
//! - [`strategies`]: SU/MU capacities and rates for the three strategies.
//! - [`montecarlo`]: i.i.d. sampling, scenario runner, Gaussian KDE.
//! - [`config`] and [`io`]: scenario files, CSV/JSON writers, channel import.

pub mod channel;
pub mod config;
pub mod em_arrays;
pub mod error;
pub mod io;
pub mod montecarlo;
pub mod numerics;
pub mod strategies;

pub use error::{Error, Result};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMat = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = DVector<Complex64>;

/// Boltzmann constant in J/K.
pub const BOLTZMANN: f64 = 1.380649e-23;
