//! Multilinear rank-(Lr, Lr, 1) block term model.
//!
//! The tensor is `T = Σ_r (A_r B_rᵀ) ∘ c_r`. Columns of `A` and `B` are laid
//! out block-major: block `r` occupies columns `offset(r) .. offset(r) + L_r`,
//! so column `col(r, l) = l + Σ_{i<r} L_i` (0-based here).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hankel::{hankelize, nuclear_norm};
use crate::tensor::{masked_sq_error, ComplexTensor3, Dims, ObservationMask, Observations};

/// Block sizes `[L_1, …, L_R]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockStructure {
    lengths: Vec<usize>,
    offsets: Vec<usize>,
    owner: Vec<usize>,
}

impl BlockStructure {
    pub fn new(lengths: Vec<usize>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::config("L", "need at least one block"));
        }
        if let Some(r) = lengths.iter().position(|&l| l == 0) {
            return Err(Error::config("L", format!("block {} has L_r = 0", r + 1)));
        }
        let mut offsets = Vec::with_capacity(lengths.len());
        let mut owner = Vec::new();
        let mut acc = 0;
        for (r, &l) in lengths.iter().enumerate() {
            offsets.push(acc);
            owner.extend(std::iter::repeat_n(r, l));
            acc += l;
        }
        Ok(Self { lengths, offsets, owner })
    }

    /// `R` blocks of equal size `l`.
    pub fn uniform(blocks: usize, l: usize) -> Result<Self> {
        Self::new(vec![l; blocks])
    }

    /// The rank-F CPD special case: every block has `L_r = 1`.
    pub fn cpd(rank: usize) -> Result<Self> {
        Self::uniform(rank, 1)
    }

    pub fn blocks(&self) -> usize {
        self.lengths.len()
    }

    pub fn total_columns(&self) -> usize {
        self.owner.len()
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn block_len(&self, r: usize) -> usize {
        self.lengths[r]
    }

    pub fn offset(&self, r: usize) -> usize {
        self.offsets[r]
    }

    pub fn col(&self, r: usize, l: usize) -> usize {
        self.offsets[r] + l
    }

    /// Block index that owns column `f` of `A`/`B`.
    #[inline]
    pub fn owner(&self, f: usize) -> usize {
        self.owner[f]
    }
}

/// Factor matrices `A (I×F)`, `B (J×F)`, `C (K×R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BtdFactors {
    pub(crate) a: DMatrix<Complex64>,
    pub(crate) b: DMatrix<Complex64>,
    pub(crate) c: DMatrix<Complex64>,
    pub(crate) structure: BlockStructure,
}

fn all_finite(m: &DMatrix<Complex64>) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

impl BtdFactors {
    pub fn new(
        a: DMatrix<Complex64>,
        b: DMatrix<Complex64>,
        c: DMatrix<Complex64>,
        structure: BlockStructure,
    ) -> Result<Self> {
        let f = structure.total_columns();
        if a.ncols() != f || b.ncols() != f {
            return Err(Error::Shape(format!(
                "A and B need {f} columns, got {} and {}",
                a.ncols(),
                b.ncols()
            )));
        }
        if c.ncols() != structure.blocks() {
            return Err(Error::Shape(format!(
                "C needs {} columns, got {}",
                structure.blocks(),
                c.ncols()
            )));
        }
        if a.nrows() == 0 || b.nrows() == 0 || c.nrows() == 0 {
            return Err(Error::Shape("factor matrices need at least one row".into()));
        }
        if !(all_finite(&a) && all_finite(&b) && all_finite(&c)) {
            return Err(Error::Domain("factor entries must be finite".into()));
        }
        Ok(Self { a, b, c, structure })
    }

    pub fn a(&self) -> &DMatrix<Complex64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<Complex64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<Complex64> {
        &self.c
    }

    pub fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    pub fn dims(&self) -> Dims {
        (self.a.nrows(), self.b.nrows(), self.c.nrows())
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.a) && all_finite(&self.b) && all_finite(&self.c)
    }

    /// Model value at one position (0-based).
    #[inline]
    pub fn entry(&self, i: usize, j: usize, k: usize) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for f in 0..self.structure.total_columns() {
            acc += self.a[(i, f)] * self.b[(j, f)] * self.c[(k, self.structure.owner(f))];
        }
        acc
    }

    /// `Σ_r (A_r B_rᵀ) ∘ c_r` as a dense tensor.
    pub fn reconstruct(&self) -> ComplexTensor3 {
        let (ni, nj, nk) = self.dims();
        let slabs: Vec<DMatrix<Complex64>> = (0..self.structure.blocks())
            .map(|r| {
                let off = self.structure.offset(r);
                let l = self.structure.block_len(r);
                self.a.columns(off, l) * self.b.columns(off, l).transpose()
            })
            .collect();
        let mut data = vec![Complex64::new(0.0, 0.0); ni * nj * nk];
        for k in 0..nk {
            let slice = &mut data[k * ni * nj..(k + 1) * ni * nj];
            for (r, slab) in slabs.iter().enumerate() {
                let ck = self.c[(k, r)];
                // slab is column-major I×J, same layout as a frontal slice.
                for (dst, src) in slice.iter_mut().zip(slab.iter()) {
                    *dst += ck * src;
                }
            }
        }
        ComplexTensor3::from_vec((ni, nj, nk), data).expect("finite factors give a finite tensor")
    }

    /// `λ`-free data misfit over an indexed observation set.
    pub fn observed_sq_error(&self, obs: &Observations) -> f64 {
        obs.entries()
            .iter()
            .map(|e| (e.value - self.entry(e.i, e.j, e.k)).norm_sqr())
            .sum()
    }

    fn check_against(&self, dims: Dims) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::Shape(format!(
                "factors describe {:?}, data is {dims:?}",
                self.dims()
            )));
        }
        Ok(())
    }
}

pub fn reconstruct(factors: &BtdFactors) -> ComplexTensor3 {
    factors.reconstruct()
}

/// Masked least-squares misfit `f1 = ‖Y − W ∗ T̂‖_F²`.
pub fn eval_f1(y: &ComplexTensor3, mask: &ObservationMask, factors: &BtdFactors) -> Result<f64> {
    factors.check_against(y.dims())?;
    masked_sq_error(y, mask, &factors.reconstruct())
}

fn column(m: &DMatrix<Complex64>, f: usize) -> Vec<Complex64> {
    m.column(f).iter().copied().collect()
}

/// Sum of Hankel nuclear norms over the columns of `B`.
pub fn hankel_nuclear_b(factors: &BtdFactors) -> Result<f64> {
    (0..factors.b.ncols())
        .map(|f| nuclear_norm(&hankelize(&column(&factors.b, f))?))
        .sum()
}

pub fn hankel_nuclear_c(factors: &BtdFactors) -> Result<f64> {
    (0..factors.c.ncols())
        .map(|r| nuclear_norm(&hankelize(&column(&factors.c, r))?))
        .sum()
}

/// Structure penalty `f2 = Σ‖H(b_{r,l})‖_* + Σ‖H(c_r)‖_* + ‖A‖_F²`.
pub fn eval_f2(factors: &BtdFactors) -> Result<f64> {
    Ok(hankel_nuclear_b(factors)? + hankel_nuclear_c(factors)? + factors.a.norm_squared())
}

/// Full ADMM iterate: factors, Hankel auxiliaries, multipliers and penalty.
///
/// `e[f]`/`m[f]` pair with column `f` of `B`; `f_aux[r]`/`n[r]` with column
/// `r` of `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub factors: BtdFactors,
    pub e: Vec<DMatrix<Complex64>>,
    pub f_aux: Vec<DMatrix<Complex64>>,
    pub m: Vec<DMatrix<Complex64>>,
    pub n: Vec<DMatrix<Complex64>>,
    pub beta: f64,
    pub lambda: f64,
    pub iteration: usize,
    /// Dogleg radius carried across outer iterations by the Gauss-Newton backend.
    pub trust_radius: f64,
}

impl AdmmState {
    pub fn validate(&self) -> Result<()> {
        let f = self.factors.structure.total_columns();
        let r = self.factors.structure.blocks();
        if self.e.len() != f || self.m.len() != f {
            return Err(Error::Shape(format!(
                "expected {f} E/M matrices, got {}/{}",
                self.e.len(),
                self.m.len()
            )));
        }
        if self.f_aux.len() != r || self.n.len() != r {
            return Err(Error::Shape(format!(
                "expected {r} F/N matrices, got {}/{}",
                self.f_aux.len(),
                self.n.len()
            )));
        }
        let (_, nj, nk) = self.factors.dims();
        let sb = crate::hankel::hankel_shape(nj)?;
        let sc = crate::hankel::hankel_shape(nk)?;
        let bad_b = self.e.iter().chain(&self.m).any(|x| x.shape() != (sb.n1, sb.n2));
        let bad_c = self.f_aux.iter().chain(&self.n).any(|x| x.shape() != (sc.n1, sc.n2));
        if bad_b || bad_c {
            return Err(Error::Shape("auxiliary matrix shape does not match the Hankel shape".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::config("beta", "penalty must be positive"));
        }
        Ok(())
    }

    /// Largest `‖H(b) − E‖_F / (1 + ‖E‖_F)` over all B columns.
    pub fn constraint_residual_b(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for (f, e) in self.e.iter().enumerate() {
            let h = hankelize(&column(&self.factors.b, f))?;
            worst = worst.max((h - e).norm() / (1.0 + e.norm()));
        }
        Ok(worst)
    }

    pub fn constraint_residual_c(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for (r, fr) in self.f_aux.iter().enumerate() {
            let h = hankelize(&column(&self.factors.c, r))?;
            worst = worst.max((h - fr).norm() / (1.0 + fr.norm()));
        }
        Ok(worst)
    }
}

/// `Re Σ conj(x)·y`.
pub(crate) fn real_inner(x: &DMatrix<Complex64>, y: &DMatrix<Complex64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a.conj() * b).re).sum()
}

/// Augmented Lagrangian
/// `λf1 + ‖A‖² + Σ[⟨M, H(b)−E⟩ + β‖H(b)−E‖²] + Σ[⟨N, H(c)−F⟩ + β‖H(c)−F‖²]`.
pub fn eval_lagrangian(y: &ComplexTensor3, mask: &ObservationMask, state: &AdmmState) -> Result<f64> {
    state.validate()?;
    let f1 = eval_f1(y, mask, &state.factors)?;
    lagrangian_with_f1(f1, state)
}

pub(crate) fn lagrangian_with_f1(f1: f64, state: &AdmmState) -> Result<f64> {
    let beta = state.beta;
    let mut total = state.lambda * f1 + state.factors.a.norm_squared();
    for (f, (e, m)) in state.e.iter().zip(&state.m).enumerate() {
        let gap = hankelize(&column(&state.factors.b, f))? - e;
        total += real_inner(m, &gap) + beta * gap.norm_squared();
    }
    for (r, (fr, n)) in state.f_aux.iter().zip(&state.n).enumerate() {
        let gap = hankelize(&column(&state.factors.c, r))? - fr;
        total += real_inner(n, &gap) + beta * gap.norm_squared();
    }
    Ok(total)
}
