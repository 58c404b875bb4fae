//! Outer ADMM loop.
//!
//! Each iteration runs, in order:
//! (a) one factor update ([`update_factors`]);
//! (b) `E ← svt(H(b) + M/β, τ)`, `F ← svt(H(c) + N/β, τ)` with `τ = 1/(2β)`;
//! (c) `M ← M + β(H(b) − E)`, `N ← N + β(H(c) − F)`;
//! (d) `β ← ρ·β`.
//!
//! Stopping uses the relative change of the reconstructed tensor rather than
//! of the factors, which can rotate inside a block without changing the model.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::btd::{eval_f2, lagrangian_with_f1, AdmmState, BlockStructure, BtdFactors};
use crate::error::{Error, Result};
use crate::hankel::{hankel_shape, hankelize, svt};
use crate::tensor::{ComplexTensor3, ObservationMask, Observations};
use crate::updaters::{gn, update_factors, Backend};

/// RNG stream reserved for solver initialization.
const INIT_STREAM: u64 = 4;

/// Threshold applied in the auxiliary prox step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvtThreshold {
    /// `1/(2β)`: exact prox of `‖E‖_* + β‖X − E‖²`.
    HalfInverseBeta,
    /// `1/β`, kept for comparison runs.
    InverseBeta,
}

impl SvtThreshold {
    pub fn tau(self, beta: f64) -> f64 {
        match self {
            SvtThreshold::HalfInverseBeta => 0.5 / beta,
            SvtThreshold::InverseBeta => 1.0 / beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Random,
    Provided(BtdFactors),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub beta0: f64,
    pub rho_penalty: f64,
    pub max_iterations: usize,
    pub tol_rel_change: f64,
    pub backend: Backend,
    pub seed: u64,
    pub init: Init,
    pub svt_threshold: SvtThreshold,
    /// Replace observed entries of the output by the data.
    pub overwrite_observed: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            beta0: 1e-3,
            rho_penalty: 1.05,
            max_iterations: 500,
            tol_rel_change: 1e-8,
            backend: Backend::Als,
            seed: 0,
            init: Init::Random,
            svt_threshold: SvtThreshold::HalfInverseBeta,
            overwrite_observed: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::config("lambda", format!("must be finite and non-negative, got {}", self.lambda)));
        }
        if !(self.beta0 > 0.0) || !self.beta0.is_finite() {
            return Err(Error::config("beta0", format!("must be positive, got {}", self.beta0)));
        }
        if !(self.rho_penalty > 1.0 && self.rho_penalty <= 1.1) {
            return Err(Error::config("rho", format!("must lie in (1.0, 1.1], got {}", self.rho_penalty)));
        }
        if !(self.tol_rel_change >= 0.0) {
            return Err(Error::config("tol", format!("must be non-negative, got {}", self.tol_rel_change)));
        }
        Ok(())
    }
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub f1: f64,
    pub f2: f64,
    pub f_lag: f64,
    pub beta: f64,
    pub rel_change: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub completed: ComplexTensor3,
    pub factors: BtdFactors,
    pub iterations_run: usize,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub state: AdmmState,
    pub elapsed_secs: f64,
}

pub const TRACE_HEADER: [&str; 6] = ["iter", "f1", "f2", "f_lag", "beta", "rel_change"];

impl SolveReport {
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_trace_csv(&self.trace, writer)
    }
}

pub fn write_trace_csv<W: Write>(trace: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for row in trace {
        w.write_record([
            row.iter.to_string(),
            row.f1.to_string(),
            row.f2.to_string(),
            row.f_lag.to_string(),
            row.beta.to_string(),
            row.rel_change.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn standard_complex(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn random_harmonics(rng: &mut ChaCha8Rng, len: usize, cols: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::zeros(len, cols);
    for col in 0..cols {
        let z = Complex64::from_polar(1.0, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
        let mut p = Complex64::new(1.0, 0.0);
        for t in 0..len {
            m[(t, col)] = p;
            p *= z;
        }
    }
    m
}

fn columns_of(m: &DMatrix<Complex64>) -> Vec<Vec<Complex64>> {
    (0..m.ncols()).map(|c| m.column(c).iter().copied().collect()).collect()
}

fn check_structure(dims: (usize, usize, usize), structure: &BlockStructure) -> Result<()> {
    let (_, nj, nk) = dims;
    if nj < 2 || nk < 2 {
        return Err(Error::config("dims", format!("modes 2 and 3 need length >= 2 for hankelization, got {dims:?}")));
    }
    if structure.total_columns() > nj * nk {
        return Err(Error::config(
            "blocks",
            format!("F = {} exceeds J·K = {}", structure.total_columns(), nj * nk),
        ));
    }
    Ok(())
}

/// State with auxiliaries equal to the Hankel matrices of the starting factors
/// and zero multipliers.
pub fn state_from_factors(factors: BtdFactors, lambda: f64, beta: f64) -> Result<AdmmState> {
    let e = columns_of(factors.b()).iter().map(|v| hankelize(v)).collect::<Result<Vec<_>>>()?;
    let f_aux = columns_of(factors.c()).iter().map(|v| hankelize(v)).collect::<Result<Vec<_>>>()?;
    let zeros = |xs: &[DMatrix<Complex64>]| xs.iter().map(|x| DMatrix::zeros(x.nrows(), x.ncols())).collect();
    Ok(AdmmState {
        m: zeros(&e),
        n: zeros(&f_aux),
        e,
        f_aux,
        factors,
        beta,
        lambda,
        iteration: 0,
        trust_radius: gn::INITIAL_RADIUS,
    })
}

/// Starting point: Gaussian `A` scaled to the observed data level, random
/// unit-modulus harmonics for `B` and `C`.
pub fn init_state(y: &ComplexTensor3, mask: &ObservationMask, structure: &BlockStructure, config: &SolverConfig) -> Result<AdmmState> {
    config.validate()?;
    if y.dims() != mask.dims() {
        return Err(Error::Shape(format!("data {:?} vs mask {:?}", y.dims(), mask.dims())));
    }
    check_structure(y.dims(), structure)?;
    let factors = match &config.init {
        Init::Provided(f) => {
            if f.dims() != y.dims() || f.structure() != structure {
                return Err(Error::config("init", "provided factors do not match the data or block structure"));
            }
            f.clone()
        }
        Init::Random => {
            let (ni, nj, nk) = y.dims();
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(INIT_STREAM);
            let observed = mask.observed_count().max(1) as f64;
            let observed_norm = crate::tensor::hadamard(&mask.to_tensor(), y)?.frobenius_norm();
            let scale = observed_norm / observed.sqrt();
            let a = DMatrix::from_fn(ni, structure.total_columns(), |_, _| standard_complex(&mut rng) * scale);
            let b = random_harmonics(&mut rng, nj, structure.total_columns());
            let c = random_harmonics(&mut rng, nk, structure.blocks());
            BtdFactors::new(a, b, c, structure.clone())?
        }
    };
    state_from_factors(factors, config.lambda, config.beta0)
}

fn step_error(iteration: usize, step: &str, err: Error) -> Error {
    match err {
        Error::Numerical { step: inner, reason } => {
            Error::numerical(format!("iteration {iteration}, step {step} ({inner})"), reason)
        }
        other => other,
    }
}

/// One pass of steps (a)–(d). Returns the dogleg outcome of step (a) for the
/// GN backend.
pub fn admm_iterate(obs: &Observations, state: &mut AdmmState, config: &SolverConfig) -> Result<Option<gn::GnOutcome>> {
    let it = state.iteration + 1;
    let outcome = update_factors(obs, state, config.backend).map_err(|e| step_error(it, "(a) factor update", e))?;

    let beta = state.beta;
    let tau = config.svt_threshold.tau(beta);
    let inv_beta = Complex64::new(1.0 / beta, 0.0);
    let beta_c = Complex64::new(beta, 0.0);
    let update = |cols: Vec<Vec<Complex64>>, aux: &mut [DMatrix<Complex64>], mult: &mut [DMatrix<Complex64>]| -> Result<()> {
        for ((v, x), m) in cols.iter().zip(aux.iter_mut()).zip(mult.iter_mut()) {
            let h = hankelize(v)?;
            *x = svt(&(&h + &*m * inv_beta), tau)?;
            *m += (h - &*x) * beta_c;
        }
        Ok(())
    };
    update(columns_of(state.factors.b()), &mut state.e, &mut state.m).map_err(|e| step_error(it, "(b)-(c) B auxiliaries", e))?;
    update(columns_of(state.factors.c()), &mut state.f_aux, &mut state.n).map_err(|e| step_error(it, "(b)-(c) C auxiliaries", e))?;

    state.beta *= config.rho_penalty;
    state.iteration = it;
    Ok(outcome)
}

/// Runs ADMM from [`init_state`] until `max_iterations` or until the
/// reconstruction changes by less than `tol_rel_change`.
pub fn solve(y: &ComplexTensor3, mask: &ObservationMask, structure: &BlockStructure, config: &SolverConfig) -> Result<SolveReport> {
    if mask.observed_count() == 0 {
        return Err(Error::config("mask", "no observed entries"));
    }
    let start = Instant::now();
    let obs = Observations::new(y, mask)?;
    let mut state = init_state(y, mask, structure, config)?;
    let mut previous = state.factors.reconstruct();
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_iterations {
        let outcome = admm_iterate(&obs, &mut state, config)?;
        let current = state.factors.reconstruct();
        let rel_change = current.distance(&previous)? / previous.frobenius_norm().max(f64::MIN_POSITIVE);
        let f1 = state.factors.observed_sq_error(&obs);
        trace.push(TraceRow {
            iter: state.iteration,
            f1,
            f2: eval_f2(&state.factors)?,
            f_lag: lagrangian_with_f1(f1, &state)?,
            beta: state.beta,
            rel_change,
        });
        previous = current;
        // A rejected dogleg step leaves the factors untouched; that is not
        // convergence.
        let rejected = outcome.is_some_and(|o| !o.accepted);
        if rel_change < config.tol_rel_change && !rejected {
            converged = true;
            break;
        }
    }
    let completed = if config.overwrite_observed {
        ComplexTensor3::from_fn(y.dims(), |i, j, k| {
            if mask.is_observed(i, j, k) {
                y.get(i, j, k)
            } else {
                previous.get(i, j, k)
            }
        })?
    } else {
        previous
    };
    Ok(SolveReport {
        completed,
        factors: state.factors.clone(),
        iterations_run: trace.len(),
        trace,
        converged,
        state,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Checks that `dims` can host `structure` under the solver's Hankel model.
pub fn check_problem(dims: (usize, usize, usize), structure: &BlockStructure) -> Result<()> {
    hankel_shape(dims.1)?;
    hankel_shape(dims.2)?;
    check_structure(dims, structure)
}
