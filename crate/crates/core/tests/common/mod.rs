#![allow(dead_code)]

use hbtc_core::hankel::hankel_shape;
use hbtc_core::{AdmmState, BlockStructure, BtdFactors, Complex64, ComplexTensor3, ObservationMask};
use nalgebra::DMatrix;
use rand::Rng;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn rand_c<R: Rng>(rng: &mut R) -> Complex64 {
    c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

pub fn rand_mat<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(rows, cols, |_, _| rand_c(rng))
}

pub fn rand_factors<R: Rng>(rng: &mut R, dims: (usize, usize, usize), s: &BlockStructure) -> BtdFactors {
    BtdFactors::new(
        rand_mat(rng, dims.0, s.total_columns()),
        rand_mat(rng, dims.1, s.total_columns()),
        rand_mat(rng, dims.2, s.blocks()),
        s.clone(),
    )
    .unwrap()
}

/// Random data, mask (at least one observed entry), factors, auxiliaries
/// and multipliers.
pub fn rand_problem<R: Rng>(
    rng: &mut R,
    dims: (usize, usize, usize),
    s: &BlockStructure,
    lambda: f64,
    beta: f64,
) -> (ComplexTensor3, ObservationMask, AdmmState) {
    let y = ComplexTensor3::from_fn(dims, |_, _, _| rand_c(rng)).unwrap();
    let mut mask = ObservationMask::from_fn(dims, |_, _, _| rng.random_bool(0.5)).unwrap();
    if mask.observed_count() == 0 {
        mask = ObservationMask::full(dims).unwrap();
    }
    let sb = hankel_shape(dims.1).unwrap();
    let sc = hankel_shape(dims.2).unwrap();
    let f = s.total_columns();
    let r = s.blocks();
    let state = AdmmState {
        factors: rand_factors(rng, dims, s),
        e: (0..f).map(|_| rand_mat(rng, sb.n1, sb.n2)).collect(),
        m: (0..f).map(|_| rand_mat(rng, sb.n1, sb.n2)).collect(),
        f_aux: (0..r).map(|_| rand_mat(rng, sc.n1, sc.n2)).collect(),
        n: (0..r).map(|_| rand_mat(rng, sc.n1, sc.n2)).collect(),
        beta,
        lambda,
        iteration: 0,
        trust_radius: 1.0,
    };
    (y, mask, state)
}

/// Hankel matrix with `n/2 + 1` rows, built by its defining rule.
pub fn hankel_ref(v: &[Complex64]) -> DMatrix<Complex64> {
    let n1 = v.len() / 2 + 1;
    let n2 = v.len() + 1 - n1;
    DMatrix::from_fn(n1, n2, |p, q| v[p + q])
}

pub fn col(m: &DMatrix<Complex64>, f: usize) -> Vec<Complex64> {
    m.column(f).iter().copied().collect()
}

/// Model entry by the defining triple sum.
pub fn entry_ref(f: &BtdFactors, i: usize, j: usize, k: usize) -> Complex64 {
    let s = f.structure();
    let mut acc = c(0.0, 0.0);
    for r in 0..s.blocks() {
        for l in 0..s.block_len(r) {
            let q = s.offset(r) + l;
            acc += f.a()[(i, q)] * f.b()[(j, q)] * f.c()[(k, r)];
        }
    }
    acc
}

/// `g` summed term by term, independent of the library's evaluators.
pub fn g_ref(y: &ComplexTensor3, mask: &ObservationMask, state: &AdmmState, f: &BtdFactors) -> f64 {
    let (ni, nj, nk) = y.dims();
    let mut data = 0.0;
    for k in 0..nk {
        for j in 0..nj {
            for i in 0..ni {
                if mask.is_observed(i, j, k) {
                    data += (y.get(i, j, k) - entry_ref(f, i, j, k)).norm_sqr();
                }
            }
        }
    }
    let inv = c(1.0 / state.beta, 0.0);
    let mut pen = 0.0;
    for (q, (e, m)) in state.e.iter().zip(&state.m).enumerate() {
        pen += (hankel_ref(&col(f.b(), q)) - (e - m * inv)).norm_squared();
    }
    for (r, (x, n)) in state.f_aux.iter().zip(&state.n).enumerate() {
        pen += (hankel_ref(&col(f.c(), r)) - (x - n * inv)).norm_squared();
    }
    state.lambda * data + f.a().norm_squared() + state.beta * pen
}

pub fn max_abs_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}
