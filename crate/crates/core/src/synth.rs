//! Synthetic ground truth and error metrics.
//!
//! Every generator draws from its own ChaCha stream of the configured seed,
//! so changing e.g. the sampling ratio leaves the factors and noise of a
//! trial unchanged.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::btd::{BlockStructure, BtdFactors};
use crate::error::{Error, Result};
use crate::hankel::harmonicity;
use crate::tensor::{ComplexTensor3, Dims, ObservationMask};

const FACTOR_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const MASK_STREAM: u64 = 3;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard circular complex Gaussian, `E|z|² = 1`.
pub(crate) fn complex_gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn uniform_phase<R: Rng>(rng: &mut R) -> f64 {
    rng.random_range(-PI..PI)
}

/// `[1, z, z², …]` with `z = e^{iω}`.
pub fn harmonic(omega: f64, len: usize) -> Vec<Complex64> {
    (0..len).map(|t| Complex64::from_polar(1.0, omega * t as f64)).collect()
}

fn set_column(m: &mut DMatrix<Complex64>, col: usize, v: &[Complex64]) {
    for (t, z) in v.iter().enumerate() {
        m[(t, col)] = *z;
    }
}

/// Parameters of the clustered channel stand-in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsiParams {
    /// Half-width of the per-cluster angular spread, degrees.
    pub angle_spread_deg: f64,
    /// Range of cluster center angles, `±max_angle_deg`.
    pub max_angle_deg: f64,
    /// Half-width of the per-cluster Doppler spread, radians per sample.
    pub doppler_spread: f64,
}

impl Default for CsiParams {
    fn default() -> Self {
        Self { angle_spread_deg: 5.0, max_angle_deg: 60.0, doppler_spread: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    Generic,
    CsiLike(CsiParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub dims: Dims,
    pub structure: BlockStructure,
    /// `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub sample_ratio: f64,
    pub seed: u64,
    pub scenario: Scenario,
}

impl Default for GenConfig {
    /// 20×20×20, three blocks of length 3, 15% sampling, 20 dB.
    fn default() -> Self {
        Self {
            dims: (20, 20, 20),
            structure: BlockStructure::uniform(3, 3).expect("valid structure"),
            snr_db: 20.0,
            sample_ratio: 0.15,
            seed: 0,
            scenario: Scenario::Generic,
        }
    }
}

impl GenConfig {
    /// 32 antennas × 16 snapshots × 100 subcarriers, 7 clusters of 3 paths,
    /// 5% sampling, 25 dB.
    pub fn csi_default() -> Self {
        Self {
            dims: (32, 16, 100),
            structure: BlockStructure::uniform(7, 3).expect("valid structure"),
            snr_db: 25.0,
            sample_ratio: 0.05,
            seed: 0,
            scenario: Scenario::CsiLike(CsiParams::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (ni, nj, nk) = self.dims;
        if ni == 0 || nj < 2 || nk < 2 {
            return Err(Error::config("dims", format!("need I >= 1, J >= 2, K >= 2, got {:?}", self.dims)));
        }
        if !(self.sample_ratio > 0.0 && self.sample_ratio <= 1.0) {
            return Err(Error::config("sample_ratio", format!("must lie in (0, 1], got {}", self.sample_ratio)));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::config("snr_db", format!("must be finite or +inf, got {}", self.snr_db)));
        }
        if let Scenario::CsiLike(p) = self.scenario {
            if !(p.angle_spread_deg >= 0.0 && p.max_angle_deg >= 0.0 && p.doppler_spread >= 0.0)
                || p.max_angle_deg + p.angle_spread_deg > 90.0
            {
                return Err(Error::config("csi", format!("invalid spread parameters {p:?}")));
            }
        }
        Ok(())
    }
}

/// Angles and Doppler generators behind a clustered instance, radians.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiGeometry {
    pub cluster_angles: Vec<f64>,
    pub path_angles: Vec<f64>,
    pub cluster_dopplers: Vec<f64>,
    pub path_dopplers: Vec<f64>,
    pub cluster_delays: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub clean: ComplexTensor3,
    pub noisy: ComplexTensor3,
    pub mask: ObservationMask,
    pub factors: BtdFactors,
    pub csi: Option<CsiGeometry>,
}

/// Random block term tensor: Gaussian `A`, harmonic `B` and `C` columns with
/// generators uniform on the unit circle.
pub fn gen_btd_tensor(config: &GenConfig) -> Result<(ComplexTensor3, BtdFactors)> {
    config.validate()?;
    let (ni, nj, nk) = config.dims;
    let s = &config.structure;
    let mut rng = stream_rng(config.seed, FACTOR_STREAM);
    let a = DMatrix::from_fn(ni, s.total_columns(), |_, _| complex_gaussian(&mut rng));
    let mut b = DMatrix::zeros(nj, s.total_columns());
    for f in 0..s.total_columns() {
        set_column(&mut b, f, &harmonic(uniform_phase(&mut rng), nj));
    }
    let mut c = DMatrix::zeros(nk, s.blocks());
    for r in 0..s.blocks() {
        set_column(&mut c, r, &harmonic(uniform_phase(&mut rng), nk));
    }
    let factors = BtdFactors::new(a, b, c, s.clone())?;
    Ok((factors.reconstruct(), factors))
}

/// Norm-matched additive noise: the returned tensor satisfies
/// `‖noisy − clean‖ / ‖clean‖ = 10^(−snr_db/20)`.
pub fn add_noise(clean: &ComplexTensor3, snr_db: f64, seed: u64) -> Result<ComplexTensor3> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::config("snr_db", format!("must be finite or +inf, got {snr_db}")));
    }
    if snr_db == f64::INFINITY {
        return Ok(clean.clone());
    }
    let mut rng = stream_rng(seed, NOISE_STREAM);
    let noise = ComplexTensor3::from_fn(clean.dims(), |_, _, _| complex_gaussian(&mut rng))?;
    let ratio = 10f64.powf(-snr_db / 20.0);
    let scale = ratio * clean.frobenius_norm() / noise.frobenius_norm();
    clean.add(&noise.scale(Complex64::new(scale, 0.0)))
}

/// Mask with exactly `round(ratio·I·J·K)` observed entries drawn uniformly
/// without replacement.
pub fn gen_mask(dims: Dims, sample_ratio: f64, seed: u64) -> Result<ObservationMask> {
    if !(sample_ratio > 0.0 && sample_ratio <= 1.0) {
        return Err(Error::config("sample_ratio", format!("must lie in (0, 1], got {sample_ratio}")));
    }
    let total = dims.0 * dims.1 * dims.2;
    let count = (sample_ratio * total as f64).round() as usize;
    if count == 0 {
        return Err(Error::config("sample_ratio", format!("{sample_ratio} of {total} entries rounds to zero")));
    }
    let mut rng = stream_rng(seed, MASK_STREAM);
    let mut data = vec![false; total];
    for idx in rand::seq::index::sample(&mut rng, total, count) {
        data[idx] = true;
    }
    ObservationMask::from_vec(dims, data)
}

/// Clustered channel stand-in: antenna × time × subcarrier.
///
/// Each block is a cluster with its own center angle, Doppler and delay.
/// Each path `l` of cluster `r` gets a complex gain times a uniform linear
/// array steering vector at `center ± angle_spread`, and a time harmonic at
/// `doppler_center ± doppler_spread`. The cluster's delay gives the
/// subcarrier harmonic shared by all its paths.
pub fn gen_csi_like(config: &GenConfig) -> Result<GroundTruth> {
    config.validate()?;
    let params = match config.scenario {
        Scenario::CsiLike(p) => p,
        Scenario::Generic => return Err(Error::config("scenario", "expected the CSI-like scenario")),
    };
    let (ni, nj, nk) = config.dims;
    let s = &config.structure;
    let mut rng = stream_rng(config.seed, FACTOR_STREAM);
    let mut a = DMatrix::zeros(ni, s.total_columns());
    let mut b = DMatrix::zeros(nj, s.total_columns());
    let mut c = DMatrix::zeros(nk, s.blocks());
    let mut geo = CsiGeometry {
        cluster_angles: Vec::new(),
        path_angles: Vec::new(),
        cluster_dopplers: Vec::new(),
        path_dopplers: Vec::new(),
        cluster_delays: Vec::new(),
    };
    let max_angle = params.max_angle_deg.to_radians();
    let spread = params.angle_spread_deg.to_radians();
    for r in 0..s.blocks() {
        let center = if max_angle > 0.0 { rng.random_range(-max_angle..=max_angle) } else { 0.0 };
        let doppler = uniform_phase(&mut rng);
        let delay = uniform_phase(&mut rng);
        geo.cluster_angles.push(center);
        geo.cluster_dopplers.push(doppler);
        geo.cluster_delays.push(delay);
        set_column(&mut c, r, &harmonic(delay, nk));
        for l in 0..s.block_len(r) {
            let f = s.col(r, l);
            let theta = center + if spread > 0.0 { rng.random_range(-spread..=spread) } else { 0.0 };
            let nu = doppler
                + if params.doppler_spread > 0.0 {
                    rng.random_range(-params.doppler_spread..=params.doppler_spread)
                } else {
                    0.0
                };
            let gain = complex_gaussian(&mut rng);
            let steering = harmonic(PI * theta.sin(), ni);
            for (m, z) in steering.iter().enumerate() {
                a[(m, f)] = gain * z;
            }
            set_column(&mut b, f, &harmonic(nu, nj));
            geo.path_angles.push(theta);
            geo.path_dopplers.push(nu);
        }
    }
    let factors = BtdFactors::new(a, b, c, s.clone())?;
    let clean = factors.reconstruct();
    let noisy = add_noise(&clean, config.snr_db, config.seed)?;
    let mask = gen_mask(config.dims, config.sample_ratio, config.seed)?;
    Ok(GroundTruth { clean, noisy, mask, factors, csi: Some(geo) })
}

/// Ground truth for either scenario, with noise and mask applied.
pub fn generate(config: &GenConfig) -> Result<GroundTruth> {
    match config.scenario {
        Scenario::CsiLike(_) => gen_csi_like(config),
        Scenario::Generic => {
            let (clean, factors) = gen_btd_tensor(config)?;
            let noisy = add_noise(&clean, config.snr_db, config.seed)?;
            let mask = gen_mask(config.dims, config.sample_ratio, config.seed)?;
            Ok(GroundTruth { clean, noisy, mask, factors, csi: None })
        }
    }
}

/// `min(‖estimate − clean‖ / ‖clean‖, 1)`.
pub fn rlne(estimate: &ComplexTensor3, clean: &ComplexTensor3) -> Result<f64> {
    let denom = clean.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::Domain("relative error against a zero tensor".into()));
    }
    Ok((estimate.distance(clean)? / denom).min(1.0))
}

/// Mean of `σ1/‖H(v)‖_F` over all columns of `B` and `C`; 1 when every
/// column is an exact harmonic.
pub fn harmonicity_score(factors: &BtdFactors) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for m in [factors.b(), factors.c()] {
        for col in 0..m.ncols() {
            let v: Vec<Complex64> = m.column(col).iter().copied().collect();
            total += harmonicity(&v)?;
            count += 1;
        }
    }
    Ok(total / count as f64)
}
