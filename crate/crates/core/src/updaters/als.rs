//! Exact block minimizers of `g` for A, B and C.
//!
//! Each block decomposes over the rows of its factor matrix: a row only
//! meets the observed entries in its own tensor slice, and the Hankel
//! penalty is diagonal per entry. Every row is therefore a small Hermitian
//! positive-definite system solved by Cholesky.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use super::Subproblem;
use crate::btd::AdmmState;
use crate::error::{Error, Result};
use crate::tensor::Observations;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Normal equations `(λ Σ conj(d) dᵀ + ridge·I) x = λ Σ conj(d) y + extra`.
struct RowSystem {
    gram: DMatrix<Complex64>,
    rhs: DVector<Complex64>,
}

impl RowSystem {
    fn new(width: usize) -> Self {
        Self {
            gram: DMatrix::zeros(width, width),
            rhs: DVector::zeros(width),
        }
    }

    #[inline]
    fn accumulate(&mut self, design: &[Complex64], y: Complex64) {
        let w = design.len();
        for q in 0..w {
            let dq = design[q];
            for p in 0..w {
                self.gram[(p, q)] += design[p].conj() * dq;
            }
            self.rhs[q] += dq.conj() * y;
        }
    }

    fn solve(mut self, lambda: f64, ridge: f64, extra: impl Fn(usize) -> Complex64, step: &str) -> Result<Vec<Complex64>> {
        let w = self.rhs.len();
        self.gram *= Complex64::new(lambda, 0.0);
        self.rhs *= Complex64::new(lambda, 0.0);
        for p in 0..w {
            self.gram[(p, p)] += Complex64::new(ridge, 0.0);
            self.rhs[p] += extra(p);
        }
        let chol = self
            .gram
            .cholesky()
            .ok_or_else(|| Error::numerical(step, "row normal matrix is not positive definite"))?;
        Ok(chol.solve(&self.rhs).iter().copied().collect())
    }
}

fn assemble(rows: Vec<Vec<Complex64>>, ncols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows.len(), ncols, |i, f| rows[i][f])
}

/// Minimizer of `λ f1 + ‖A‖²` over `A` with `B`, `C` fixed.
pub fn als_update_a(obs: &Observations, state: &AdmmState) -> Result<DMatrix<Complex64>> {
    let sub = Subproblem::from_state(obs, state)?;
    let fac = &state.factors;
    let s = &fac.structure;
    let width = s.total_columns();
    let rows = (0..fac.a.nrows())
        .into_par_iter()
        .map(|i| {
            let mut sys = RowSystem::new(width);
            let mut design = vec![ZERO; width];
            for &n in obs.in_row_a(i) {
                let e = obs.entries()[n];
                for (f, d) in design.iter_mut().enumerate() {
                    *d = fac.b[(e.j, f)] * fac.c[(e.k, s.owner(f))];
                }
                sys.accumulate(&design, e.value);
            }
            sys.solve(sub.lambda, 1.0, |_| ZERO, "ALS update of A")
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(rows, width))
}

/// Minimizer of `λ f1 + β Σ ‖H(b) − E + M/β‖²` over `B` with `A`, `C` fixed.
pub fn als_update_b(obs: &Observations, state: &AdmmState) -> Result<DMatrix<Complex64>> {
    let sub = Subproblem::from_state(obs, state)?;
    let fac = &state.factors;
    let s = &fac.structure;
    let width = s.total_columns();
    let rows = (0..fac.b.nrows())
        .into_par_iter()
        .map(|j| {
            let mut sys = RowSystem::new(width);
            let mut design = vec![ZERO; width];
            for &n in obs.in_row_b(j) {
                let e = obs.entries()[n];
                for (f, d) in design.iter_mut().enumerate() {
                    *d = fac.a[(e.i, f)] * fac.c[(e.k, s.owner(f))];
                }
                sys.accumulate(&design, e.value);
            }
            let ridge = sub.beta * sub.shape_b.count(j) as f64;
            sys.solve(sub.lambda, ridge, |f| sub.adj_b[f][j] * sub.beta, "ALS update of B")
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(rows, width))
}

/// Minimizer of `λ f1 + β Σ ‖H(c) − F + N/β‖²` over `C` with `A`, `B` fixed.
pub fn als_update_c(obs: &Observations, state: &AdmmState) -> Result<DMatrix<Complex64>> {
    let sub = Subproblem::from_state(obs, state)?;
    let fac = &state.factors;
    let s = &fac.structure;
    let width = s.blocks();
    let rows = (0..fac.c.nrows())
        .into_par_iter()
        .map(|k| {
            let mut sys = RowSystem::new(width);
            let mut design = vec![ZERO; width];
            for &n in obs.in_row_c(k) {
                let e = obs.entries()[n];
                for (r, d) in design.iter_mut().enumerate() {
                    let off = s.offset(r);
                    *d = (off..off + s.block_len(r)).map(|f| fac.a[(e.i, f)] * fac.b[(e.j, f)]).sum();
                }
                sys.accumulate(&design, e.value);
            }
            let ridge = sub.beta * sub.shape_c.count(k) as f64;
            sys.solve(sub.lambda, ridge, |r| sub.adj_c[r][k] * sub.beta, "ALS update of C")
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(rows, width))
}
