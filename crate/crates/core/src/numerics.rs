//! Dense linear-algebra helpers shared by the channel and strategy layers.
//!
//! Eigen-, Cholesky- and LU-decompositions are delegated to `nalgebra`; the
//! water-filling and projection routines are implemented here.

use nalgebra::linalg::{Cholesky, SymmetricEigen, LU};
use num_complex::Complex64;

use crate::{CMat, Error, Result};

/// Relative asymmetry tolerated before a matrix is rejected as non-Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Relative eigenvalue floor below which a "PSD" matrix is rejected.
pub const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    CholeskyLower,
    PrincipalPsd,
}

/// A Hermitian matrix together with a root satisfying `original = root · rootᴴ`.
#[derive(Debug, Clone)]
pub struct HermitianFactorization {
    pub original: CMat,
    pub root: CMat,
    pub kind: FactorKind,
}

impl HermitianFactorization {
    pub fn reconstruct(&self) -> CMat {
        &self.root * self.root.adjoint()
    }
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Returns `(A + Aᴴ)/2`, or an error if `A` is materially non-Hermitian.
pub fn hermitian_part(a: &CMat) -> Result<CMat> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}×{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let adj = a.adjoint();
    let scale = frobenius(a).max(f64::MIN_POSITIVE);
    let asym = frobenius(&(a - &adj)) / scale;
    if asym > HERMITIAN_TOL {
        return Err(Error::NotHermitian(asym));
    }
    Ok((a + adj) * Complex64::new(0.5, 0.0))
}

/// `(A + Aᴴ)/2` without the asymmetry check, for matrices that are Hermitian
/// by construction but carry rounding noise.
pub fn symmetrize(a: &CMat) -> CMat {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Lower-triangular Cholesky factor with real positive diagonal.
pub fn cholesky_lower(a: &CMat) -> Result<HermitianFactorization> {
    let sym = hermitian_part(a)?;
    let chol = Cholesky::new(sym.clone())
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky pivot ≤ 0".into()))?;
    let root = chol.l();
    // complex Cholesky takes complex roots of negative pivots instead of failing
    if root
        .diagonal()
        .iter()
        .any(|d| !(d.re > 0.0) || d.im.abs() > 1e-12 * d.re)
    {
        return Err(Error::NotPositiveDefinite("Cholesky pivot ≤ 0".into()));
    }
    Ok(HermitianFactorization {
        original: sym,
        root,
        kind: FactorKind::CholeskyLower,
    })
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order; column `i` of the returned matrix belongs to value `i`.
pub fn hermitian_eigen(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let sym = hermitian_part(a)?;
    let n = sym.nrows();
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

fn psd_eigen(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let (mut values, vectors) = hermitian_eigen(a)?;
    let floor = -PSD_TOL * frobenius(a).max(f64::MIN_POSITIVE);
    for v in values.iter_mut() {
        if *v < floor {
            return Err(Error::NotPositiveSemidefinite(*v));
        }
        *v = v.max(0.0);
    }
    Ok((values, vectors))
}

fn spectral(vectors: &CMat, values: impl Iterator<Item = f64>) -> CMat {
    let mut scaled = vectors.clone();
    for (j, v) in values.enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    scaled * vectors.adjoint()
}

/// Hermitian PSD square root obtained from the eigendecomposition.
pub fn principal_psd_sqrt(a: &CMat) -> Result<HermitianFactorization> {
    let (values, vectors) = psd_eigen(a)?;
    let root = spectral(&vectors, values.iter().map(|v| v.sqrt()));
    Ok(HermitianFactorization {
        original: hermitian_part(a)?,
        root,
        kind: FactorKind::PrincipalPsd,
    })
}

/// `A^{-1/2}` for a Hermitian positive definite `A`.
pub fn principal_inv_sqrt(a: &CMat) -> Result<CMat> {
    let (values, vectors) = psd_eigen(a)?;
    let largest = values.first().copied().unwrap_or(0.0);
    if values.iter().any(|&v| !(v > 1e-14 * largest)) || !(largest > 0.0) {
        return Err(Error::NotPositiveDefinite(
            "inverse square root of a singular matrix".into(),
        ));
    }
    Ok(spectral(&vectors, values.iter().map(|v| 1.0 / v.sqrt())))
}

/// Solves `A X = B`.
pub fn solve_left(a: &CMat, b: &CMat) -> Result<CMat> {
    if !a.is_square() || a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "cannot solve {}×{} system against {}×{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    LU::new(a.clone())
        .solve(b)
        .ok_or_else(|| Error::Singular("LU solve failed".into()))
}

/// Solves `X A = B`, i.e. returns `B A⁻¹`.
pub fn solve_right(b: &CMat, a: &CMat) -> Result<CMat> {
    Ok(solve_left(&a.transpose(), &b.transpose())?.transpose())
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn solve_lower(l: &CMat, b: &CMat) -> Result<CMat> {
    l.solve_lower_triangular(b)
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))
}

/// `log₂ det(A)` for Hermitian positive definite `A`; rounding-level
/// asymmetry is removed first.
pub fn log2_det_hpd(a: &CMat) -> Result<f64> {
    let chol = cholesky_lower(&symmetrize(a))?;
    Ok(2.0 * chol.root.diagonal().iter().map(|d| d.re.log2()).sum::<f64>())
}

/// `I + A` for square `A`.
pub fn identity_plus(a: &CMat) -> CMat {
    a + CMat::identity(a.nrows(), a.ncols())
}

/// Power allocation maximizing `Σ log₂(1 + gᵢ pᵢ)` subject to `Σ pᵢ = P`.
///
/// Gains are sorted once and the water level is evaluated in closed form for
/// each candidate active set; no iteration on the level is needed.
pub fn waterfill(gains: &[f64], total_power: f64) -> Result<Vec<f64>> {
    if gains.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
        return Err(Error::Domain("gains must be finite and nonnegative".into()));
    }
    if !(total_power >= 0.0) || !total_power.is_finite() {
        return Err(Error::Domain(format!(
            "power budget must be nonnegative, got {total_power}"
        )));
    }
    if gains.iter().all(|&g| g == 0.0) {
        return Err(Error::Domain("all gains are zero".into()));
    }
    let mut powers = vec![0.0; gains.len()];
    if total_power == 0.0 {
        return Ok(powers);
    }
    let mut order: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    order.sort_by(|&i, &j| gains[j].total_cmp(&gains[i]));

    let mut inv_sum = 0.0;
    let mut level = 0.0;
    let mut active = 0;
    for (k, &i) in order.iter().enumerate() {
        let inv = 1.0 / gains[i];
        let candidate = (total_power + inv_sum + inv) / (k + 1) as f64;
        if candidate <= inv {
            break;
        }
        inv_sum += inv;
        level = candidate;
        active = k + 1;
    }
    for &i in &order[..active] {
        powers[i] = (level - 1.0 / gains[i]).max(0.0);
    }
    Ok(powers)
}

/// Euclidean projection of `v` onto `{λ ≥ 0, Σλ ≤ budget}`.
pub fn project_capped_simplex(v: &[f64], budget: f64) -> Vec<f64> {
    let clipped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= budget {
        return clipped;
    }
    // Find τ > 0 with Σ max(vᵢ − τ, 0) = budget.
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    let mut tau = 0.0;
    for (k, &x) in sorted.iter().enumerate() {
        prefix += x;
        let t = (prefix - budget) / (k + 1) as f64;
        if k + 1 == sorted.len() || sorted[k + 1] <= t {
            tau = t;
            break;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Frobenius projection of a Hermitian matrix onto `{S ⪰ 0, tr(S) ≤ P}`.
pub fn project_psd_trace(x: &CMat, budget: f64) -> Result<CMat> {
    let (values, vectors) = hermitian_eigen(x)?;
    let projected = project_capped_simplex(&values, budget);
    Ok(spectral(&vectors, projected.into_iter()))
}

/// Projection onto block-diagonal matrices with PSD blocks and total trace at
/// most `budget`. Blocks are eigendecomposed separately and the pooled
/// eigenvalues are projected jointly; off-block entries of `x` are dropped.
pub fn project_block_psd_trace(x: &CMat, partition: &[usize], budget: f64) -> Result<CMat> {
    let dim: usize = partition.iter().sum();
    if x.nrows() != dim || x.ncols() != dim {
        return Err(Error::Dimension(format!(
            "partition covers {dim} rows, matrix is {}×{}",
            x.nrows(),
            x.ncols()
        )));
    }
    let mut decomps = Vec::with_capacity(partition.len());
    let mut pooled = Vec::with_capacity(dim);
    let mut offset = 0;
    for &k in partition {
        let block = x.view((offset, offset), (k, k)).clone_owned();
        let (values, vectors) = hermitian_eigen(&block)?;
        pooled.extend_from_slice(&values);
        decomps.push((offset, vectors));
        offset += k;
    }
    let projected = project_capped_simplex(&pooled, budget);
    let mut out = CMat::zeros(dim, dim);
    let mut cursor = 0;
    for (offset, vectors) in decomps {
        let k = vectors.nrows();
        let block = spectral(&vectors, projected[cursor..cursor + k].iter().copied());
        out.view_mut((offset, offset), (k, k)).copy_from(&block);
        cursor += k;
    }
    Ok(out)
}

/// Keeps only the diagonal blocks of `x` given by `partition`.
pub fn block_diagonal_part(x: &CMat, partition: &[usize]) -> CMat {
    let mut out = CMat::zeros(x.nrows(), x.ncols());
    let mut offset = 0;
    for &k in partition {
        out.view_mut((offset, offset), (k, k))
            .copy_from(&x.view((offset, offset), (k, k)));
        offset += k;
    }
    out
}

/// `Re tr(Aᴴ B)`, the real inner product on complex matrices.
pub fn inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}
