//! Dense third-order complex tensors and binary observation masks.
//!
//! Storage is column-major in the first index: entry `(i, j, k)` (0-based)
//! lives at offset `i + I*(j + J*k)`. Documentation elsewhere in the crate
//! uses 1-based indices, matching the usual mathematical convention.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tensor dimensions `(I, J, K)`.
pub type Dims = (usize, usize, usize);

#[inline]
fn offset(dims: Dims, i: usize, j: usize, k: usize) -> usize {
    i + dims.0 * (j + dims.1 * k)
}

fn check_dims(dims: Dims) -> Result<()> {
    if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
        return Err(Error::Shape(format!("dimensions must be positive, got {dims:?}")));
    }
    Ok(())
}

/// Dense complex tensor of order three.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor3 {
    dims: Dims,
    data: Vec<Complex64>,
}

impl ComplexTensor3 {
    pub fn zeros(dims: Dims) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            dims,
            data: vec![Complex64::new(0.0, 0.0); dims.0 * dims.1 * dims.2],
        })
    }

    /// Builds a tensor from entries in storage order. Rejects wrong lengths and
    /// non-finite values.
    pub fn from_vec(dims: Dims, data: Vec<Complex64>) -> Result<Self> {
        check_dims(dims)?;
        let expected = dims.0 * dims.1 * dims.2;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} entries for {dims:?}, got {}",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("tensor entries must be finite".into()));
        }
        Ok(Self { dims, data })
    }

    /// Builds a tensor by evaluating `f(i, j, k)` (0-based) for every entry.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> Complex64) -> Result<Self> {
        check_dims(dims)?;
        let mut data = Vec::with_capacity(dims.0 * dims.1 * dims.2);
        for k in 0..dims.2 {
            for j in 0..dims.1 {
                for i in 0..dims.0 {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::from_vec(dims, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> Complex64 {
        self.data[offset(self.dims, i, j, k)]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn scale(&self, alpha: Complex64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|z| z * alpha).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        same_dims(self.dims, other.dims)?;
        Ok(Self {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Frobenius distance `‖self − other‖_F`.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        same_dims(self.dims, other.dims)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }
}

fn same_dims(a: Dims, b: Dims) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("dimension mismatch: {a:?} vs {b:?}")));
    }
    Ok(())
}

/// Binary tensor `W` marking which entries of a tensor were observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationMask {
    dims: Dims,
    data: Vec<bool>,
    observed: usize,
}

impl ObservationMask {
    pub fn from_vec(dims: Dims, data: Vec<bool>) -> Result<Self> {
        check_dims(dims)?;
        let expected = dims.0 * dims.1 * dims.2;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} mask entries for {dims:?}, got {}",
                data.len()
            )));
        }
        let observed = data.iter().filter(|&&w| w).count();
        Ok(Self { dims, data, observed })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> bool) -> Result<Self> {
        check_dims(dims)?;
        let mut data = Vec::with_capacity(dims.0 * dims.1 * dims.2);
        for k in 0..dims.2 {
            for j in 0..dims.1 {
                for i in 0..dims.0 {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::from_vec(dims, data)
    }

    pub fn full(dims: Dims) -> Result<Self> {
        Self::from_fn(dims, |_, _, _| true)
    }

    pub fn empty(dims: Dims) -> Result<Self> {
        Self::from_fn(dims, |_, _, _| false)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize, k: usize) -> bool {
        self.data[offset(self.dims, i, j, k)]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn observed_count(&self) -> usize {
        self.observed
    }

    /// Proportion of observed entries, `Σ w / (IJK)`.
    pub fn sampling_ratio(&self) -> f64 {
        self.observed as f64 / self.data.len() as f64
    }

    pub fn complement(&self) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|w| !w).collect(),
            observed: self.data.len() - self.observed,
        }
    }

    /// The mask as a 0/1 complex tensor.
    pub fn to_tensor(&self) -> ComplexTensor3 {
        ComplexTensor3 {
            dims: self.dims,
            data: self
                .data
                .iter()
                .map(|&w| Complex64::new(if w { 1.0 } else { 0.0 }, 0.0))
                .collect(),
        }
    }

    /// Observed positions `(i, j, k)` in storage order.
    pub fn observed_positions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let (ni, nj, _) = self.dims;
        self.data.iter().enumerate().filter(|(_, &w)| w).map(move |(n, _)| {
            let i = n % ni;
            let j = (n / ni) % nj;
            let k = n / (ni * nj);
            (i, j, k)
        })
    }
}

/// Entrywise product `P ∗ Q`.
pub fn hadamard(p: &ComplexTensor3, q: &ComplexTensor3) -> Result<ComplexTensor3> {
    p.zip_with(q, |a, b| a * b)
}

/// Rank-one tensor `a ∘ b ∘ c` with entries `a(i)·b(j)·c(k)`.
pub fn outer_rank1(a: &[Complex64], b: &[Complex64], c: &[Complex64]) -> Result<ComplexTensor3> {
    ComplexTensor3::from_fn((a.len(), b.len(), c.len()), |i, j, k| a[i] * b[j] * c[k])
}

/// `Σ_{w=1} |Y − T̂|²` over observed entries.
pub fn masked_sq_error(y: &ComplexTensor3, mask: &ObservationMask, estimate: &ComplexTensor3) -> Result<f64> {
    same_dims(y.dims, mask.dims)?;
    same_dims(y.dims, estimate.dims)?;
    Ok(y.data
        .iter()
        .zip(&estimate.data)
        .zip(&mask.data)
        .filter(|(_, &w)| w)
        .map(|((a, b), _)| (a - b).norm_sqr())
        .sum())
}

/// One observed entry of the data tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedEntry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub value: Complex64,
}

/// Observed entries of `Y` with per-mode index lists, so that row-wise
/// least-squares solves only touch the entries they depend on.
#[derive(Debug, Clone)]
pub struct Observations {
    dims: Dims,
    entries: Vec<ObservedEntry>,
    by_i: Vec<Vec<usize>>,
    by_j: Vec<Vec<usize>>,
    by_k: Vec<Vec<usize>>,
}

impl Observations {
    pub fn new(y: &ComplexTensor3, mask: &ObservationMask) -> Result<Self> {
        same_dims(y.dims, mask.dims)?;
        let (ni, nj, nk) = y.dims;
        let mut entries = Vec::with_capacity(mask.observed_count());
        let mut by_i = vec![Vec::new(); ni];
        let mut by_j = vec![Vec::new(); nj];
        let mut by_k = vec![Vec::new(); nk];
        for (i, j, k) in mask.observed_positions() {
            let n = entries.len();
            by_i[i].push(n);
            by_j[j].push(n);
            by_k[k].push(n);
            entries.push(ObservedEntry {
                i,
                j,
                k,
                value: y.get(i, j, k),
            });
        }
        Ok(Self {
            dims: y.dims,
            entries,
            by_i,
            by_j,
            by_k,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn entries(&self) -> &[ObservedEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Indices into [`entries`](Self::entries) observed in mode-1 slice `i`.
    pub fn in_row_a(&self, i: usize) -> &[usize] {
        &self.by_i[i]
    }

    pub fn in_row_b(&self, j: usize) -> &[usize] {
        &self.by_j[j]
    }

    pub fn in_row_c(&self, k: usize) -> &[usize] {
        &self.by_k[k]
    }
}
