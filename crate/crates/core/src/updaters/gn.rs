//! One Gauss-Newton dogleg step on `g`.
//!
//! Complex unknowns are stacked as a real vector `z` with `(re, im)` pairs in
//! the order `vec(A)`, `vec(B)`, `vec(C)` (each column-major). Residuals
//! `model − y` at observed entries are stacked the same way. The data term is
//! linearized, `r(z + p) ≈ r + J p`; every other term of `g` is already an
//! exact quadratic with a diagonal Hessian, so the local model is
//!
//! ```text
//! m(p) = λ‖r + J p‖² + h(z + p),   ∇m(0) = 2λJᵀr + ∇h,   ∇²m = 2λJᵀJ + D.
//! ```
//!
//! Each observed entry touches only one row of A, one row of B and one row
//! of C, so `J` is stored row-sparse with `2F + R` complex coefficients per
//! entry.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::Subproblem;
use crate::btd::{AdmmState, BtdFactors};
use crate::error::{Error, Result};
use crate::tensor::Observations;

/// Real unknown counts up to this size use a dense Cholesky for the Newton
/// point; larger problems use truncated conjugate gradients.
pub const DENSE_LIMIT: usize = 2048;
pub const CG_MAX_ITERS: usize = 50;

pub const INITIAL_RADIUS: f64 = 1.0;
const ACCEPT_RATIO: f64 = 0.1;
const EXPAND_RATIO: f64 = 0.75;
const SHRINK_RATIO: f64 = 0.25;
const EXPAND_FACTOR: f64 = 2.0;
const SHRINK_FACTOR: f64 = 0.25;

/// Complex parameter layout of `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub rows_a: usize,
    pub rows_b: usize,
    pub rows_c: usize,
    pub cols_ab: usize,
    pub cols_c: usize,
}

impl ParamLayout {
    pub fn of(factors: &BtdFactors) -> Self {
        let (rows_a, rows_b, rows_c) = factors.dims();
        Self {
            rows_a,
            rows_b,
            rows_c,
            cols_ab: factors.structure().total_columns(),
            cols_c: factors.structure().blocks(),
        }
    }

    /// Number of complex unknowns.
    pub fn complex_len(&self) -> usize {
        (self.rows_a + self.rows_b) * self.cols_ab + self.rows_c * self.cols_c
    }

    pub fn real_len(&self) -> usize {
        2 * self.complex_len()
    }

    #[inline]
    pub fn a(&self, i: usize, f: usize) -> usize {
        i + self.rows_a * f
    }

    #[inline]
    pub fn b(&self, j: usize, f: usize) -> usize {
        self.rows_a * self.cols_ab + j + self.rows_b * f
    }

    #[inline]
    pub fn c(&self, k: usize, r: usize) -> usize {
        (self.rows_a + self.rows_b) * self.cols_ab + k + self.rows_c * r
    }
}

/// Stacks the factors into the real vector `z`.
pub fn pack(factors: &BtdFactors) -> Vec<f64> {
    let mut z = Vec::with_capacity(ParamLayout::of(factors).real_len());
    for m in [&factors.a, &factors.b, &factors.c] {
        for v in m.iter() {
            z.push(v.re);
            z.push(v.im);
        }
    }
    z
}

/// Inverse of [`pack`], reusing the block structure of `like`.
pub fn unpack(z: &[f64], like: &BtdFactors) -> Result<BtdFactors> {
    let layout = ParamLayout::of(like);
    if z.len() != layout.real_len() {
        return Err(Error::Shape(format!("expected {} unknowns, got {}", layout.real_len(), z.len())));
    }
    let at = |p: usize| Complex64::new(z[2 * p], z[2 * p + 1]);
    let a = DMatrix::from_fn(layout.rows_a, layout.cols_ab, |i, f| at(layout.a(i, f)));
    let b = DMatrix::from_fn(layout.rows_b, layout.cols_ab, |j, f| at(layout.b(j, f)));
    let c = DMatrix::from_fn(layout.rows_c, layout.cols_c, |k, r| at(layout.c(k, r)));
    BtdFactors::new(a, b, c, like.structure().clone())
}

/// Stacked residual `[re, im]` of `model − y` over observed entries.
pub fn residual(obs: &Observations, factors: &BtdFactors) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * obs.len());
    for e in obs.entries() {
        let d = factors.entry(e.i, e.j, e.k) - e.value;
        out.push(d.re);
        out.push(d.im);
    }
    out
}

/// Jacobian of the stacked residual, one sparse complex row per observed entry.
///
/// The residual is holomorphic in the complex unknowns, so a complex
/// derivative `d` at unknown `p` expands to the real 2×2 block
/// `[[Re d, −Im d], [Im d, Re d]]` at rows `(2e, 2e+1)`, columns `(2p, 2p+1)`.
#[derive(Debug, Clone)]
pub struct SparseJacobian {
    ncols: usize,
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl SparseJacobian {
    pub fn nrows(&self) -> usize {
        2 * self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Nonzeros as real `(row, col, value)` triplets.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (e, row) in self.rows.iter().enumerate() {
            for &(p, d) in row {
                out.push((2 * e, 2 * p, d.re));
                out.push((2 * e, 2 * p + 1, -d.im));
                out.push((2 * e + 1, 2 * p, d.im));
                out.push((2 * e + 1, 2 * p + 1, d.re));
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// `J p`.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.nrows());
        for row in &self.rows {
            let mut acc = Complex64::new(0.0, 0.0);
            for &(q, d) in row {
                acc += d * Complex64::new(p[2 * q], p[2 * q + 1]);
            }
            out.push(acc.re);
            out.push(acc.im);
        }
        out
    }

    /// `Jᵀ v`.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (e, row) in self.rows.iter().enumerate() {
            // Real transpose of the holomorphic block is conj(d) applied to (v_re + i v_im).
            let w = Complex64::new(v[2 * e], v[2 * e + 1]);
            for &(q, d) in row {
                let t = d.conj() * w;
                out[2 * q] += t.re;
                out[2 * q + 1] += t.im;
            }
        }
        out
    }

    /// Dense `JᵀJ`.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.ncols;
        let mut g = DMatrix::zeros(n, n);
        for row in &self.rows {
            for &(p, dp) in row {
                for &(q, dq) in row {
                    // Block (p, q) of JᵀJ is the real form of conj(dp)·dq.
                    let t = dp.conj() * dq;
                    g[(2 * p, 2 * q)] += t.re;
                    g[(2 * p, 2 * q + 1)] -= t.im;
                    g[(2 * p + 1, 2 * q)] += t.im;
                    g[(2 * p + 1, 2 * q + 1)] += t.re;
                }
            }
        }
        g
    }
}

pub fn jacobian(obs: &Observations, factors: &BtdFactors) -> SparseJacobian {
    let layout = ParamLayout::of(factors);
    let s = factors.structure();
    let rows = obs
        .entries()
        .iter()
        .map(|e| {
            let mut row = Vec::with_capacity(2 * layout.cols_ab + layout.cols_c);
            for f in 0..layout.cols_ab {
                let ck = factors.c[(e.k, s.owner(f))];
                row.push((layout.a(e.i, f), factors.b[(e.j, f)] * ck));
                row.push((layout.b(e.j, f), factors.a[(e.i, f)] * ck));
            }
            for r in 0..layout.cols_c {
                let off = s.offset(r);
                let d = (off..off + s.block_len(r))
                    .map(|f| factors.a[(e.i, f)] * factors.b[(e.j, f)])
                    .sum();
                row.push((layout.c(e.k, r), d));
            }
            row
        })
        .collect();
    SparseJacobian {
        ncols: layout.real_len(),
        rows,
    }
}

/// Linearization of `g` at the current factors.
#[derive(Debug, Clone)]
pub struct GnWorkspace {
    pub z: Vec<f64>,
    pub residual: Vec<f64>,
    pub jacobian: SparseJacobian,
    /// Gradient and diagonal Hessian of the non-data part `h`.
    pub grad_h: Vec<f64>,
    pub hess_h: Vec<f64>,
    pub trust_radius: f64,
    pub step: Vec<f64>,
}

impl GnWorkspace {
    pub fn new(obs: &Observations, state: &AdmmState) -> Result<Self> {
        let sub = Subproblem::from_state(obs, state)?;
        let fac = &state.factors;
        let layout = ParamLayout::of(fac);
        let n = layout.real_len();
        let mut grad_h = vec![0.0; n];
        let mut hess_h = vec![0.0; n];
        let mut put = |p: usize, g: Complex64, h: f64| {
            grad_h[2 * p] = g.re;
            grad_h[2 * p + 1] = g.im;
            hess_h[2 * p] = h;
            hess_h[2 * p + 1] = h;
        };
        for f in 0..layout.cols_ab {
            for i in 0..layout.rows_a {
                put(layout.a(i, f), fac.a[(i, f)] * 2.0, 2.0);
            }
            for j in 0..layout.rows_b {
                let w = sub.beta * sub.shape_b.count(j) as f64;
                put(layout.b(j, f), (fac.b[(j, f)] * w - sub.adj_b[f][j] * sub.beta) * 2.0, 2.0 * w);
            }
        }
        for r in 0..layout.cols_c {
            for k in 0..layout.rows_c {
                let w = sub.beta * sub.shape_c.count(k) as f64;
                put(layout.c(k, r), (fac.c[(k, r)] * w - sub.adj_c[r][k] * sub.beta) * 2.0, 2.0 * w);
            }
        }
        let trust_radius = if state.trust_radius > 0.0 && state.trust_radius.is_finite() {
            state.trust_radius
        } else {
            INITIAL_RADIUS
        };
        Ok(Self {
            z: pack(fac),
            residual: residual(obs, fac),
            jacobian: jacobian(obs, fac),
            grad_h,
            hess_h,
            trust_radius,
            step: vec![0.0; n],
        })
    }

    /// `∇m(0) = 2λJᵀr + ∇h`.
    pub fn gradient(&self, lambda: f64) -> Vec<f64> {
        let jt_r = self.jacobian.apply_transpose(&self.residual);
        jt_r.iter().zip(&self.grad_h).map(|(a, b)| 2.0 * lambda * a + b).collect()
    }

    /// `(2λJᵀJ + D) v`.
    pub fn hessian_apply(&self, lambda: f64, v: &[f64]) -> Vec<f64> {
        let jv = self.jacobian.apply(v);
        let jtjv = self.jacobian.apply_transpose(&jv);
        jtjv.iter()
            .zip(&self.hess_h)
            .zip(v)
            .map(|((a, d), x)| 2.0 * lambda * a + d * x)
            .collect()
    }

    /// Decrease of the local model, `m(0) − m(p)`.
    pub fn model_decrease(&self, lambda: f64, p: &[f64]) -> f64 {
        let jp = self.jacobian.apply(p);
        let data: f64 = self
            .residual
            .iter()
            .zip(&jp)
            .map(|(r, d)| r * r - (r + d) * (r + d))
            .sum();
        let quad: f64 = p
            .iter()
            .zip(&self.grad_h)
            .zip(&self.hess_h)
            .map(|((x, g), h)| g * x + 0.5 * h * x * x)
            .sum();
        lambda * data - quad
    }

    /// Newton point `−(2λJᵀJ + D)⁻¹ ∇m(0)`.
    pub fn newton_step(&self, lambda: f64, grad: &[f64]) -> Result<Vec<f64>> {
        let n = grad.len();
        if n <= DENSE_LIMIT {
            let mut h = self.jacobian.gram() * (2.0 * lambda);
            for p in 0..n {
                h[(p, p)] += self.hess_h[p];
            }
            let chol = h
                .cholesky()
                .ok_or_else(|| Error::numerical("Gauss-Newton step", "normal matrix is not positive definite"))?;
            let rhs = DVector::from_iterator(n, grad.iter().map(|g| -g));
            Ok(chol.solve(&rhs).iter().copied().collect())
        } else {
            Ok(self.conjugate_gradient(lambda, grad))
        }
    }

    /// Jacobi-preconditioned CG on the normal system, capped at [`CG_MAX_ITERS`].
    fn conjugate_gradient(&self, lambda: f64, grad: &[f64]) -> Vec<f64> {
        let n = grad.len();
        let mut diag = self.hess_h.clone();
        for row in &self.jacobian.rows {
            for &(q, d) in row {
                let w = 2.0 * lambda * d.norm_sqr();
                diag[2 * q] += w;
                diag[2 * q + 1] += w;
            }
        }
        let mut x = vec![0.0; n];
        let mut r: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut zv: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
        let mut p = zv.clone();
        let mut rz: f64 = dot(&r, &zv);
        let stop = 1e-10 * dot(grad, grad).sqrt();
        for _ in 0..CG_MAX_ITERS {
            let hp = self.hessian_apply(lambda, &p);
            let php = dot(&p, &hp);
            if !(php > 0.0) {
                break;
            }
            let alpha = rz / php;
            for idx in 0..n {
                x[idx] += alpha * p[idx];
                r[idx] -= alpha * hp[idx];
            }
            if dot(&r, &r).sqrt() <= stop {
                break;
            }
            zv = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
            let rz_next = dot(&r, &zv);
            let ratio = rz_next / rz;
            rz = rz_next;
            for idx in 0..n {
                p[idx] = zv[idx] + ratio * p[idx];
            }
        }
        x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Dogleg combination of the Cauchy and Newton points within `radius`.
pub fn dogleg(grad: &[f64], hess_grad: &[f64], newton: &[f64], radius: f64) -> Vec<f64> {
    if norm(newton) <= radius {
        return newton.to_vec();
    }
    let gg = dot(grad, grad);
    let ghg = dot(grad, hess_grad);
    let gnorm = gg.sqrt();
    if gnorm == 0.0 {
        return vec![0.0; grad.len()];
    }
    let cauchy: Vec<f64> = if ghg > 0.0 {
        grad.iter().map(|g| -g * gg / ghg).collect()
    } else {
        grad.iter().map(|g| -g * radius / gnorm).collect()
    };
    let cnorm = norm(&cauchy);
    if cnorm >= radius {
        return grad.iter().map(|g| -g * radius / gnorm).collect();
    }
    // Find τ in [0, 1] with ‖cauchy + τ(newton − cauchy)‖ = radius.
    let diff: Vec<f64> = newton.iter().zip(&cauchy).map(|(n, c)| n - c).collect();
    let a = dot(&diff, &diff);
    let b = 2.0 * dot(&cauchy, &diff);
    let c = cnorm * cnorm - radius * radius;
    let tau = (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
    cauchy.iter().zip(&diff).map(|(c, d)| c + tau * d).collect()
}

/// What one dogleg step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnOutcome {
    pub accepted: bool,
    /// Actual over predicted decrease; NaN when the model predicted none.
    pub ratio: f64,
    pub step_norm: f64,
    pub radius: f64,
}

/// One trust-region dogleg step on `g`, updating factors and radius in place.
pub fn gn_step(obs: &Observations, state: &mut AdmmState, ws: &mut GnWorkspace) -> Result<GnOutcome> {
    let sub = Subproblem::from_state(obs, state)?;
    let lambda = sub.lambda;
    let grad = ws.gradient(lambda);
    let radius = ws.trust_radius;
    if norm(&grad) == 0.0 {
        ws.step.iter_mut().for_each(|x| *x = 0.0);
        return Ok(GnOutcome {
            accepted: false,
            ratio: f64::NAN,
            step_norm: 0.0,
            radius,
        });
    }
    let newton = ws.newton_step(lambda, &grad)?;
    let hg = ws.hessian_apply(lambda, &grad);
    let step = dogleg(&grad, &hg, &newton, radius);
    let step_norm = norm(&step);
    let predicted = ws.model_decrease(lambda, &step);

    let before = sub.objective(&state.factors)?;
    let trial_z: Vec<f64> = ws.z.iter().zip(&step).map(|(z, p)| z + p).collect();
    let trial = unpack(&trial_z, &state.factors).ok();
    let after = match &trial {
        Some(t) => sub.objective(t).unwrap_or(f64::NAN),
        None => f64::NAN,
    };

    let finite = predicted.is_finite() && after.is_finite();
    let ratio = if finite && predicted > 0.0 {
        (before - after) / predicted
    } else {
        f64::NAN
    };
    let accepted = ratio > ACCEPT_RATIO;
    let mut new_radius = radius;
    if !finite || !(ratio >= SHRINK_RATIO) {
        new_radius *= SHRINK_FACTOR;
    } else if ratio > EXPAND_RATIO && step_norm >= radius * (1.0 - 1e-9) {
        new_radius *= EXPAND_FACTOR;
    }
    if accepted {
        state.factors = trial.expect("accepted steps are finite");
        ws.z = trial_z;
    }
    ws.step = step;
    ws.trust_radius = new_radius;
    state.trust_radius = new_radius;
    Ok(GnOutcome {
        accepted,
        ratio,
        step_norm,
        radius: new_radius,
    })
}
