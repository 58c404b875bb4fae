//! Hankelization, its adjoint, and the nuclear-norm proximal operator.
//!
//! A length-`n` vector `v` maps to the `n1 × n2` matrix `H(v)(p, q) = v(p + q − 1)`
//! (1-based), with `n1 + n2 = n + 1`. A harmonic `v(t) = z^(t−1)` gives a
//! rank-one Hankel matrix, which is what the completion solver exploits.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative cutoff below which singular values count as zero in rank checks.
pub const RANK_TOL: f64 = 1e-14;

/// Row/column split of a Hankel matrix built from a length-`n` vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HankelShape {
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
}

impl HankelShape {
    /// Number of `(p, q)` cells on anti-diagonal `t` (0-based).
    #[inline]
    pub fn count(&self, t: usize) -> usize {
        (t + 1).min(self.n1).min(self.n2).min(self.n - t)
    }
}

/// Near-square split: `n1 = ceil((n+1)/2)`, `n2 = n + 1 − n1`.
pub fn hankel_shape(n: usize) -> Result<HankelShape> {
    if n < 2 {
        return Err(Error::config("hankel length", format!("need n >= 2, got {n}")));
    }
    let n1 = (n + 2) / 2;
    Ok(HankelShape { n, n1, n2: n + 1 - n1 })
}

/// `H(v)` with the near-square shape of [`hankel_shape`].
pub fn hankelize(v: &[Complex64]) -> Result<DMatrix<Complex64>> {
    let shape = hankel_shape(v.len())?;
    Ok(DMatrix::from_fn(shape.n1, shape.n2, |p, q| v[p + q]))
}

/// Adjoint of hankelization: anti-diagonal sums of `x`.
pub fn hankel_adjoint(x: &DMatrix<Complex64>) -> Vec<Complex64> {
    let (n1, n2) = x.shape();
    let mut out = vec![Complex64::new(0.0, 0.0); n1 + n2 - 1];
    for q in 0..n2 {
        for p in 0..n1 {
            out[p + q] += x[(p, q)];
        }
    }
    out
}

/// Anti-diagonal multiplicities, `hankel_adjoint(ones)`.
pub fn hankel_counts(n: usize) -> Result<Vec<usize>> {
    let shape = hankel_shape(n)?;
    Ok((0..n).map(|t| shape.count(t)).collect())
}

fn svd_parts(x: &DMatrix<Complex64>, step: &str) -> Result<(DMatrix<Complex64>, Vec<f64>, DMatrix<Complex64>)> {
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::numerical(step, "non-finite matrix entry"));
    }
    let svd = x
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical(step, "SVD did not converge"))?;
    let u = svd.u.ok_or_else(|| Error::numerical(step, "missing left singular vectors"))?;
    let v_t = svd.v_t.ok_or_else(|| Error::numerical(step, "missing right singular vectors"))?;
    Ok((u, svd.singular_values.iter().copied().collect(), v_t))
}

/// Singular values of `x` in non-increasing order.
pub fn singular_values(x: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::numerical("singular values", "non-finite matrix entry"));
    }
    let sv = x
        .clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical("singular values", "SVD did not converge"))?
        .singular_values;
    let mut out: Vec<f64> = sv.iter().copied().collect();
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

pub fn nuclear_norm(x: &DMatrix<Complex64>) -> Result<f64> {
    Ok(singular_values(x)?.iter().sum())
}

/// Number of singular values above `RANK_TOL · σ_max`.
pub fn numerical_rank(x: &DMatrix<Complex64>) -> Result<usize> {
    let sv = singular_values(x)?;
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > RANK_TOL * top).count())
}

/// Singular value thresholding: `U · max(Σ − τ, 0) · V^H`, the minimizer of
/// `τ‖E‖_* + ½‖X − E‖_F²`.
pub fn svt(x: &DMatrix<Complex64>, tau: f64) -> Result<DMatrix<Complex64>> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::config("tau", format!("threshold must be positive and finite, got {tau}")));
    }
    let (mut u, sigma, v_t) = svd_parts(x, "svt")?;
    for (col, s) in sigma.iter().enumerate() {
        let shrunk = (s - tau).max(0.0);
        u.column_mut(col).scale_mut(shrunk);
    }
    Ok(u * v_t)
}

/// `σ₁ / ‖H(v)‖_F`: equals 1 exactly when `v` is a (nonzero) harmonic.
pub fn harmonicity(v: &[Complex64]) -> Result<f64> {
    let h = hankelize(v)?;
    let fro = h.norm();
    if fro == 0.0 {
        return Ok(0.0);
    }
    Ok(singular_values(&h)?[0] / fro)
}
