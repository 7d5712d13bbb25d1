//! Independent reference computations: quadrature, exhaustive searches.

use std::f64::consts::PI;

use coupled_mimo::em_arrays::ETA0;
use coupled_mimo::CMat;
use num_complex::Complex64;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Adaptive Simpson quadrature with Richardson correction.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    // split into pieces so oscillatory integrands are resolved from the start
    let pieces = ((b - a) / 0.5).ceil().max(1.0) as usize;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            step(f, lo, hi, fa, fm, fb, whole, tol / pieces as f64, 40)
        })
        .sum()
}

fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        t.sin() / t
    }
}

fn cos_kernel(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        (t.cos() - 1.0) / t
    }
}

pub fn si_oracle(x: f64) -> f64 {
    integrate(&sinc, 0.0, x, 1e-14)
}

pub fn ci_oracle(x: f64) -> f64 {
    EULER_GAMMA + x.ln() + integrate(&cos_kernel, 0.0, x, 1e-14)
}

/// Induced-EMF integral of a sinusoidal half-wave current against the near
/// field of a parallel half-wave dipole at lateral distance `s` (wavelengths).
pub fn emf_oracle(s: f64) -> Complex64 {
    let k = 2.0 * PI;
    let field = |z: f64, part: fn(f64) -> f64| {
        let r1 = (s * s + (z - 0.25).powi(2)).sqrt();
        let r2 = (s * s + (z + 0.25).powi(2)).sqrt();
        (k * z).cos() * (part(k * r1) / r1 + part(k * r2) / r2)
    };
    let re = integrate(&|z| field(z, f64::sin), -0.25, 0.25, 1e-12);
    let im = integrate(&|z| field(z, f64::cos), -0.25, 0.25, 1e-12);
    Complex64::new(re, im) * (ETA0 / (4.0 * PI))
}

fn sum_log(gains: &[f64], powers: &[f64]) -> f64 {
    gains.iter().zip(powers).map(|(g, p)| (g * p).ln_1p()).sum()
}

/// Exhaustive search on a grid of spacing `1e-4·P`, then repeated ten-fold
/// zooms around the best point. Three gains nest the two-gain search inside
/// a ternary search over the third power, which is valid because the best
/// two-gain value is concave in the power left over.
pub fn waterfill_grid_oracle(gains: &[f64], total: f64) -> Vec<f64> {
    match gains.len() {
        2 => {
            let (mut lo, mut hi, mut step) = (0.0, total, 1e-4 * total);
            let mut best = 0.0;
            while step > 1e-13 * total {
                let n = ((hi - lo) / step).round() as usize;
                let mut best_val = f64::NEG_INFINITY;
                for i in 0..=n {
                    let p = (lo + i as f64 * step).min(total);
                    let v = sum_log(gains, &[p, total - p]);
                    if v > best_val {
                        best_val = v;
                        best = p;
                    }
                }
                lo = (best - step).max(0.0);
                hi = (best + step).min(total);
                step /= 10.0;
            }
            vec![best, total - best]
        }
        3 => {
            let split = |p2: f64| {
                let mut p = waterfill_grid_oracle(&gains[..2], total - p2);
                p.push(p2);
                (sum_log(gains, &p), p)
            };
            let (mut lo, mut hi) = (0.0, total);
            for _ in 0..80 {
                let a = lo + (hi - lo) / 3.0;
                let b = hi - (hi - lo) / 3.0;
                if split(a).0 < split(b).0 {
                    lo = a;
                } else {
                    hi = b;
                }
            }
            // the optimum often sits on the boundary p2 = 0
            let (v0, p0) = split(0.0);
            let (v, p) = split(0.5 * (lo + hi));
            if v0 >= v { p0 } else { p }
        }
        _ => unreachable!(),
    }
}

/// Best dual-MAC sum rate of two single-antenna users over the grid
/// `{(i, j)·P/2000 : i + j ≤ 2000}`.
pub fn two_user_grid_oracle(h: &CMat, p: f64, sigma: f64) -> f64 {
    // det(I + Ξ^{1/2} H Hᴴ Ξ^{1/2}/σ²) for diagonal Ξ = diag(q1, q2)
    let g = h * h.adjoint() / Complex64::new(sigma * sigma, 0.0);
    let (a, b, d) = (g[(0, 0)].re, g[(1, 1)].re, g[(0, 1)].norm_sqr());
    let steps = 2000;
    let dq = p / steps as f64;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=steps {
        let q1 = i as f64 * dq;
        for j in 0..=(steps - i) {
            let q2 = j as f64 * dq;
            let det = (1.0 + q1 * a) * (1.0 + q2 * b) - q1 * q2 * d;
            best = best.max(det.log2());
        }
    }
    best
}

