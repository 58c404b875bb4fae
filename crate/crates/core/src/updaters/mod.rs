//! Factor-matrix step of the ADMM iteration.
//!
//! With auxiliaries and multipliers frozen, the factors minimize
//!
//! ```text
//! g(A,B,C) = λ f1 + ‖A‖² + β Σ ‖H(b_{r,l}) − E_{r,l} + M_{r,l}/β‖² + β Σ ‖H(c_r) − F_r + N_r/β‖²
//! ```
//!
//! either by one alternating least-squares sweep ([`als`]) or by one
//! Gauss-Newton dogleg step ([`gn`]).
//!
//! The Hankel penalty is separable over vector entries:
//! `‖H(b) − X‖² = Σ_t count(t)·|b(t) − s(t)/count(t)|² + const`, with
//! `s = hankel_adjoint(X)`. Both backends rely on this.

pub mod als;
pub mod gn;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::btd::{AdmmState, BtdFactors};
use crate::error::{Error, Result};
use crate::hankel::{hankel_adjoint, hankel_shape, hankelize, HankelShape};
use crate::tensor::Observations;

pub use als::{als_update_a, als_update_b, als_update_c};
pub use gn::{gn_step, GnOutcome, GnWorkspace};

/// Solver used for the factor step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    Als,
    Gn,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "als" => Ok(Backend::Als),
            "gn" | "nls" => Ok(Backend::Gn),
            other => Err(Error::config("backend", format!("expected `als` or `gn`, got `{other}`"))),
        }
    }
}

/// The quadratic-plus-data subproblem `g` at fixed auxiliaries.
#[derive(Debug, Clone)]
pub struct Subproblem<'a> {
    pub(crate) obs: &'a Observations,
    pub(crate) lambda: f64,
    pub(crate) beta: f64,
    pub(crate) shape_b: HankelShape,
    pub(crate) shape_c: HankelShape,
    /// `E − M/β` per B column.
    pub(crate) target_b: Vec<DMatrix<Complex64>>,
    pub(crate) target_c: Vec<DMatrix<Complex64>>,
    /// `hankel_adjoint(target)` per column.
    pub(crate) adj_b: Vec<Vec<Complex64>>,
    pub(crate) adj_c: Vec<Vec<Complex64>>,
}

impl<'a> Subproblem<'a> {
    pub fn from_state(obs: &'a Observations, state: &AdmmState) -> Result<Self> {
        state.validate()?;
        let (_, nj, nk) = state.factors.dims();
        if obs.dims() != state.factors.dims() {
            return Err(Error::Shape(format!(
                "observations are {:?}, factors are {:?}",
                obs.dims(),
                state.factors.dims()
            )));
        }
        let beta = state.beta;
        let shift = |aux: &[DMatrix<Complex64>], mult: &[DMatrix<Complex64>]| -> Vec<DMatrix<Complex64>> {
            aux.iter().zip(mult).map(|(x, m)| x - m / Complex64::new(beta, 0.0)).collect()
        };
        let target_b = shift(&state.e, &state.m);
        let target_c = shift(&state.f_aux, &state.n);
        Ok(Self {
            obs,
            lambda: state.lambda,
            beta,
            shape_b: hankel_shape(nj)?,
            shape_c: hankel_shape(nk)?,
            adj_b: target_b.iter().map(hankel_adjoint).collect(),
            adj_c: target_c.iter().map(hankel_adjoint).collect(),
            target_b,
            target_c,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    fn hankel_penalty(&self, m: &DMatrix<Complex64>, targets: &[DMatrix<Complex64>]) -> Result<f64> {
        let mut total = 0.0;
        for (col, target) in targets.iter().enumerate() {
            let v: Vec<Complex64> = m.column(col).iter().copied().collect();
            total += (hankelize(&v)? - target).norm_squared();
        }
        Ok(self.beta * total)
    }

    /// Exact value of `g` at `factors`.
    pub fn objective(&self, factors: &BtdFactors) -> Result<f64> {
        let data = self.lambda * factors.observed_sq_error(self.obs);
        Ok(data
            + factors.a.norm_squared()
            + self.hankel_penalty(&factors.b, &self.target_b)?
            + self.hankel_penalty(&factors.c, &self.target_c)?)
    }
}

/// Evaluates `g` for the state's current factors and auxiliaries.
pub fn subproblem_objective(obs: &Observations, state: &AdmmState) -> Result<f64> {
    Subproblem::from_state(obs, state)?.objective(&state.factors)
}

/// Applies exactly one factor update: a full ALS sweep (A, then B, then C)
/// or one dogleg step. Returns the dogleg outcome for the GN backend.
pub fn update_factors(obs: &Observations, state: &mut AdmmState, backend: Backend) -> Result<Option<GnOutcome>> {
    let outcome = match backend {
        Backend::Als => {
            let a = als_update_a(obs, state)?;
            state.factors.a = a;
            let b = als_update_b(obs, state)?;
            state.factors.b = b;
            let c = als_update_c(obs, state)?;
            state.factors.c = c;
            None
        }
        Backend::Gn => {
            let mut ws = GnWorkspace::new(obs, state)?;
            Some(gn_step(obs, state, &mut ws)?)
        }
    };
    if !state.factors.is_finite() {
        return Err(Error::numerical("factor update", "non-finite factor entries"));
    }
    Ok(outcome)
}
