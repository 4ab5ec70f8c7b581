//! Conditional probability paths and flow-matching targets.
//!
//! Lattice parameters follow a straight Gaussian path from a data-fitted
//! prior; fractional coordinates follow the shortest straight path on the
//! flat 3-torus. Both target fields depend only on the endpoints and are
//! constant in time.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crystal::Lattice6;
use crate::math::{self, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("flow time {0} outside [0, 1]")]
    TimeOutOfRange(f64),
    #[error("invalid path configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Canonical representative of `x` modulo 1, always in [0, 1).
///
/// Equals `x - floor(x)` except where rounding would produce exactly 1.0
/// (tiny negative inputs), which maps to 0.0.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x - math::floor(x);
    if r >= 1.0 { 0.0 } else { r }
}

/// Shortest signed displacement from `f0` to `f1` on the circle, in
/// [-0.5, 0.5). An exactly antipodal pair resolves to -0.5.
#[inline]
pub fn torus_velocity(f0: f64, f1: f64) -> f64 {
    wrap(f1 - f0 - 0.5) - 0.5
}

pub fn torus_velocity3(f0: &Vec3, f1: &Vec3) -> Vec3 {
    [torus_velocity(f0[0], f1[0]), torus_velocity(f0[1], f1[1]), torus_velocity(f0[2], f1[2])]
}

pub fn lattice_velocity(l0: &[f64; 6], l1: &[f64; 6]) -> [f64; 6] {
    core::array::from_fn(|k| l1[k] - l0[k])
}

/// Flow time, validated to lie in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct FlowTime(f64);

impl FlowTime {
    pub fn new(t: f64) -> Result<Self, FlowError> {
        if (0.0..=1.0).contains(&t) { Ok(Self(t)) } else { Err(FlowError::TimeOutOfRange(t)) }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// How training times are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TimeDistribution {
    Uniform,
    Beta { a: f64, b: f64 },
}

impl TimeDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Uniform => rng.random::<f64>(),
            Self::Beta { a, b } => Beta::new(a, b).map(|d| d.sample(rng)).unwrap_or_else(|_| rng.random()),
        }
    }
}

/// Per-dimension mean and standard deviation of training lattices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeStats {
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

impl LatticeStats {
    /// Floor applied to each standard deviation (Å or degrees) so that a
    /// constant parameter, such as the right angles of a cubic corpus,
    /// still yields a proper prior.
    pub const MIN_STD: f64 = 0.1;

    pub fn from_lattices<'a, I: IntoIterator<Item = &'a Lattice6>>(lattices: I) -> Option<Self> {
        let mut n = 0usize;
        let mut sum = [0.0; 6];
        let mut sq = [0.0; 6];
        for l in lattices {
            let v = l.to_array();
            for k in 0..6 {
                sum[k] += v[k];
                sq[k] += v[k] * v[k];
            }
            n += 1;
        }
        if n == 0 {
            return None;
        }
        let nf = n as f64;
        let mean: [f64; 6] = core::array::from_fn(|k| sum[k] / nf);
        let std = core::array::from_fn(|k| math::sqrt((sq[k] / nf - mean[k] * mean[k]).max(0.0)).max(Self::MIN_STD));
        Some(Self { mean, std })
    }

    pub fn zscore(&self, l: &[f64; 6]) -> [f64; 6] {
        core::array::from_fn(|k| (l[k] - self.mean[k]) / self.std[k])
    }
}

impl Default for LatticeStats {
    fn default() -> Self {
        Self { mean: [5.0, 5.0, 5.0, 90.0, 90.0, 90.0], std: [1.0; 6] }
    }
}

/// Path and loss settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    /// Standard deviation of the lattice path around its mean.
    pub sigma_l: f64,
    /// Lattice prior mean.
    pub mu0: [f64; 6],
    /// Lattice prior standard deviation.
    pub sigma0: [f64; 6],
    /// Weight of the lattice term in the loss.
    pub lambda_l: f64,
    pub time: TimeDistribution,
}

impl PathConfig {
    pub fn from_stats(stats: &LatticeStats) -> Self {
        Self { mu0: stats.mean, sigma0: stats.std, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.sigma_l >= 0.0) {
            return Err(FlowError::InvalidConfig("sigma_l must be non-negative"));
        }
        if self.sigma0.iter().any(|s| !(*s >= 0.0)) {
            return Err(FlowError::InvalidConfig("sigma0 entries must be non-negative"));
        }
        if !(self.lambda_l >= 0.0) {
            return Err(FlowError::InvalidConfig("lambda_l must be non-negative"));
        }
        Ok(())
    }
}

impl Default for PathConfig {
    fn default() -> Self {
        let stats = LatticeStats::default();
        Self { sigma_l: 0.0, mu0: stats.mean, sigma0: stats.std, lambda_l: 1.0, time: TimeDistribution::Uniform }
    }
}

/// Velocity for coordinates (one row per atom) and lattice parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityTarget {
    pub ul: [f64; 6],
    pub uf: Vec<Vec3>,
}

impl VelocityTarget {
    pub fn zeros(n_atoms: usize) -> Self {
        Self { ul: [0.0; 6], uf: alloc::vec![[0.0; 3]; n_atoms] }
    }

    /// Conditional target for the pair of endpoints.
    pub fn between(f0: &[Vec3], f1: &[Vec3], l0: &[f64; 6], l1: &[f64; 6]) -> Self {
        Self {
            ul: lattice_velocity(l0, l1),
            uf: f0.iter().zip(f1).map(|(a, b)| torus_velocity3(a, b)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.ul.iter().all(|x| x.is_finite()) && self.uf.iter().flatten().all(|x| x.is_finite())
    }
}

/// Point on the conditional path at time `t`:
/// `L_t ~ N(t·l1 + (1-t)·l0, sigma_l²)` and `F_t = wrap(f0 + t·u(f0, f1))`.
pub fn interpolate_state<R: Rng + ?Sized>(
    f0: &[Vec3],
    f1: &[Vec3],
    l0: &[f64; 6],
    l1: &[f64; 6],
    t: f64,
    cfg: &PathConfig,
    rng: &mut R,
) -> (Vec<Vec3>, [f64; 6]) {
    let ft = f0
        .iter()
        .zip(f1)
        .map(|(a, b)| core::array::from_fn(|k| wrap(a[k] + t * torus_velocity(a[k], b[k]))))
        .collect();
    let lt = core::array::from_fn(|k| {
        let mean = t * l1[k] + (1.0 - t) * l0[k];
        if cfg.sigma_l > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            mean + cfg.sigma_l * z
        } else {
            mean
        }
    });
    (ft, lt)
}

/// Uniform coordinates on the torus and a Gaussian lattice `mu0 + sigma0 ⊙ z`.
pub fn sample_prior<R: Rng + ?Sized>(n_atoms: usize, cfg: &PathConfig, rng: &mut R) -> (Vec<Vec3>, [f64; 6]) {
    let f0 = (0..n_atoms).map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]).collect();
    let l0 = core::array::from_fn(|k| {
        let z: f64 = StandardNormal.sample(rng);
        cfg.mu0[k] + cfg.sigma0[k] * z
    });
    (f0, l0)
}

/// Squared-error flow-matching loss with uniform time weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct FmLoss {
    pub total: f64,
    pub coord: f64,
    pub lattice: f64,
    /// d total / d pred.
    pub grad: VelocityTarget,
}

/// `mean_i |uF_pred,i − uF_tgt,i|² + λ·|uL_pred − uL_tgt|²`: the coordinate
/// block is averaged over atoms, the lattice block is a single 6-vector.
pub fn fm_loss(pred: &VelocityTarget, target: &VelocityTarget, lambda_l: f64) -> Result<FmLoss, FlowError> {
    if pred.uf.len() != target.uf.len() {
        return Err(FlowError::ShapeMismatch("coordinate blocks differ in atom count"));
    }
    let nf = pred.uf.len() as f64;
    let mut grad = VelocityTarget::zeros(pred.uf.len());
    let mut coord = 0.0;
    if nf > 0.0 {
        for ((p, t), g) in pred.uf.iter().zip(&target.uf).zip(grad.uf.iter_mut()) {
            for k in 0..3 {
                let d = p[k] - t[k];
                coord += d * d;
                g[k] = 2.0 * d / nf;
            }
        }
        coord /= nf;
    }
    let mut lattice = 0.0;
    for k in 0..6 {
        let d = pred.ul[k] - target.ul[k];
        lattice += d * d;
        grad.ul[k] = lambda_l * 2.0 * d;
    }
    Ok(FmLoss { total: coord + lambda_l * lattice, coord, lattice, grad })
}
