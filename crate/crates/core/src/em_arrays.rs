//! Impedances of parallel, infinitely thin half-wave dipoles (induced-EMF
//! method with sinusoidal current) and uniform circular arrays built from them.
//!
//! Distances are measured in wavelengths throughout.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::{CMat, Error, Result};

/// Free-space wave impedance in ohms.
pub const ETA0: f64 = 119.9169832 * PI;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Switch-over point between the power series and the continued fraction.
const SERIES_LIMIT: f64 = 8.0;

/// Sine integral `Si(x) = ∫₀ˣ sin(t)/t dt`. Odd in `x`.
pub fn sine_integral(x: f64) -> f64 {
    if x < 0.0 {
        return -sine_integral(-x);
    }
    if x == 0.0 {
        return 0.0;
    }
    if x <= SERIES_LIMIT {
        si_ci_series(x).0
    } else {
        si_ci_continued_fraction(x).0
    }
}

/// Cosine integral `Ci(x) = γ + ln x + ∫₀ˣ (cos t − 1)/t dt` for `x > 0`.
pub fn cosine_integral(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("cosine integral needs x > 0, got {x}")));
    }
    Ok(if x <= SERIES_LIMIT {
        si_ci_series(x).1
    } else {
        si_ci_continued_fraction(x).1
    })
}

/// Both integrals by their Maclaurin series. Terms peak near k ≈ x/2, so at
/// x = 8 the cancellation costs about three decimal digits.
fn si_ci_series(x: f64) -> (f64, f64) {
    let x2 = x * x;
    let mut si = 0.0;
    let mut ci = 0.0;
    // term = (-1)^k x^n / n! for n = 1, 2, 3, ...
    let mut term = 1.0;
    for n in 1..200u32 {
        term *= x / f64::from(n);
        let contrib = term / f64::from(n);
        // signs: n = 1 (+), 2 (-), 3 (-), 4 (+), 5 (+), 6 (-), ...
        let sign = if (n / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if n % 2 == 1 {
            si += sign * contrib;
        } else {
            ci += sign * contrib;
        }
        if contrib < 1e-18 * (si.abs() + ci.abs() + 1.0) && f64::from(n) > x2.sqrt() {
            break;
        }
    }
    (si, EULER_GAMMA + x.ln() + ci)
}

/// Lentz evaluation of the continued fraction for `E₁(ix)`, which yields
/// `Ci(x) + i(Si(x) − π/2)` and converges quickly for x ≳ 2.
fn si_ci_continued_fraction(x: f64) -> (f64, f64) {
    const TINY: f64 = 1e-300;
    let one = Complex64::new(1.0, 0.0);
    let mut b = Complex64::new(1.0, x);
    let mut c = Complex64::new(1.0 / TINY, 0.0);
    let mut d = one / b;
    let mut h = d;
    for i in 2..10_000u32 {
        let a = -f64::from((i - 1) * (i - 1));
        b += 2.0;
        d = one / (d * a + b);
        c = b + a / c;
        let del = c * d;
        h *= del;
        if (del.re - 1.0).abs() + del.im.abs() < 1e-16 {
            break;
        }
    }
    let h = Complex64::new(x.cos(), -x.sin()) * h;
    (FRAC_PI_2 + h.im, -h.re)
}

fn emf_prefactor() -> f64 {
    ETA0 / (4.0 * PI)
}

/// Input impedance of a thin half-wave dipole, ≈ 73.08 + j42.52 Ω.
pub fn dipole_self_impedance() -> Complex64 {
    let two_pi = 2.0 * PI;
    let ci = cosine_integral(two_pi).expect("2π is in the domain");
    let re = emf_prefactor() * (EULER_GAMMA + two_pi.ln() - ci);
    let im = emf_prefactor() * sine_integral(two_pi);
    Complex64::new(re, im)
}

/// Mutual impedance of two side-by-side parallel half-wave dipoles whose
/// centers are `s` wavelengths apart.
pub fn dipole_mutual_impedance(s: f64) -> Result<Complex64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!(
            "dipole separation must be positive, got {s}"
        )));
    }
    let r = (s * s + 0.25).sqrt();
    let u0 = 2.0 * PI * s;
    let u1 = 2.0 * PI * (r + 0.5);
    // r − ½ = s² / (r + ½) avoids cancellation for small s
    let u2 = 2.0 * PI * (s * s / (r + 0.5));
    let re = 2.0 * cosine_integral(u0)? - cosine_integral(u1)? - cosine_integral(u2)?;
    let im = 2.0 * sine_integral(u0) - sine_integral(u1) - sine_integral(u2);
    Ok(emf_prefactor() * Complex64::new(re, -im))
}

/// Element positions of an array, in wavelengths.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    n_elements: usize,
    spacing_wavelengths: f64,
    positions: Vec<[f64; 2]>,
}

impl ArrayGeometry {
    /// Uniform circular array with adjacent-element spacing `spacing` (in λ).
    /// A single element sits at the origin.
    pub fn uca(n_elements: usize, spacing: f64) -> Result<Self> {
        if n_elements == 0 {
            return Err(Error::Geometry("array needs at least one element".into()));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::Geometry(format!(
                "element spacing must be positive, got {spacing}"
            )));
        }
        let positions = if n_elements == 1 {
            vec![[0.0, 0.0]]
        } else {
            let n = n_elements as f64;
            let radius = spacing / (2.0 * (PI / n).sin());
            (0..n_elements)
                .map(|i| {
                    let phi = 2.0 * PI * i as f64 / n;
                    [radius * phi.cos(), radius * phi.sin()]
                })
                .collect()
        };
        Ok(ArrayGeometry {
            n_elements,
            spacing_wavelengths: spacing,
            positions,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn spacing(&self) -> f64 {
        self.spacing_wavelengths
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    /// Circle radius in wavelengths (zero for a single element).
    pub fn radius(&self) -> f64 {
        let [x, y] = self.positions[0];
        x.hypot(y)
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let [xi, yi] = self.positions[i];
        let [xj, yj] = self.positions[j];
        (xi - xj).hypot(yi - yj)
    }
}

/// Impedance matrix of an array of parallel half-wave dipoles. The result is
/// complex symmetric by construction.
pub fn array_impedance_matrix(geom: &ArrayGeometry) -> Result<CMat> {
    let n = geom.n_elements();
    let z_self = dipole_self_impedance();
    let mut z = CMat::from_element(n, n, z_self);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = geom.distance(i, j);
            if s < 1e-12 {
                return Err(Error::Geometry(format!("elements {i} and {j} coincide")));
            }
            let zm = dipole_mutual_impedance(s)?;
            z[(i, j)] = zm;
            z[(j, i)] = zm;
        }
    }
    Ok(z)
}

/// Block-diagonal impedance matrix of several mutually uncoupled arrays.
pub fn block_diagonal(blocks: &[CMat]) -> CMat {
    let dim: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(dim, dim);
    let mut offset = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((offset, offset), (k, k)).copy_from(b);
        offset += k;
    }
    out
}
