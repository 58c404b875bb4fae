//! Completion of third-order complex tensors with a block term model whose
//! second- and third-mode factors are harmonic (Vandermonde) columns.
//!
//! The solver alternates a factor update (ALS sweep or Gauss-Newton dogleg
//! step) with nuclear-norm prox steps on hankelized factor columns.
//!
//! Indices are 0-based in code. Tensors are stored column-major with the
//! first index fastest.

pub mod admm;
pub mod btd;
pub mod error;
pub mod hankel;
pub mod io;
pub mod sweep;
pub mod synth;
pub mod tensor;
pub mod updaters;

pub use admm::{solve, Init, SolveReport, SolverConfig, SvtThreshold, TraceRow};
pub use btd::{reconstruct, AdmmState, BlockStructure, BtdFactors};
pub use error::{Error, Result};
pub use sweep::{run_sweep, Method, SweepResult, SweepSpec, SweptVariable};
pub use synth::{generate, rlne, GenConfig, GroundTruth, Scenario};
pub use tensor::{ComplexTensor3, ObservationMask, Observations};
pub use updaters::Backend;

pub use num_complex::Complex64;
