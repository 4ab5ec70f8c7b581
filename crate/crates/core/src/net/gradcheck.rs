//! Central finite-difference check of [`backward`](super::backward).

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{forward, loss_and_grad, ConditionEmbedding, NetInput};
use super::{init_params, ModelParams, NetError, NetworkConfig};
use crate::flow::{fm_loss, LatticeStats, VelocityTarget};
use crate::math::{Matrix, Vec3};
use crate::rng;

/// One example of a gradient-check batch.
#[derive(Debug, Clone)]
pub struct CheckExample {
    pub species: Vec<u8>,
    pub frac: Vec<Vec3>,
    pub lattice: [f64; 6],
    pub t: f64,
    pub buckets: Vec<usize>,
    pub target: VelocityTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorReport {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
}

/// Relative errors are `|a − n| / max(|a|, |n|, FLOOR)`; the floor keeps
/// entries whose true gradient is zero from dividing round-off by zero.
pub const FLOOR: f64 = 1e-7;

/// Mean loss over the batch. Embeddings are looked up from the table in
/// `params`, so token rows are differentiated like any other weight.
pub fn batch_loss(params: &ModelParams, cfg: &NetworkConfig, stats: &LatticeStats, batch: &[CheckExample], lambda_l: f64) -> Result<f64, NetError> {
    let mut total = 0.0;
    for ex in batch {
        let cond = embed(params, &ex.buckets, cfg.attn_dim);
        let input = NetInput { species: &ex.species, frac: &ex.frac, lattice: ex.lattice, t: ex.t, cond: &cond };
        let pred = forward(params, cfg, stats, &input)?;
        total += fm_loss(&pred, &ex.target, lambda_l).map_err(|e| NetError::ShapeMismatch(alloc::format!("{e}")))?.total;
    }
    Ok(total / batch.len() as f64)
}

fn embed(params: &ModelParams, buckets: &[usize], attn_dim: usize) -> ConditionEmbedding {
    let mut tokens = Matrix::zeros(buckets.len(), attn_dim);
    for (s, &b) in buckets.iter().enumerate() {
        tokens.row_mut(s).copy_from_slice(params.token_emb.row(b));
    }
    ConditionEmbedding { tokens, buckets: buckets.to_vec() }
}

pub fn batch_grad(params: &ModelParams, cfg: &NetworkConfig, stats: &LatticeStats, batch: &[CheckExample], lambda_l: f64) -> Result<ModelParams, NetError> {
    let mut acc = params.zeros_like();
    for ex in batch {
        let cond = embed(params, &ex.buckets, cfg.attn_dim);
        let input = NetInput { species: &ex.species, frac: &ex.frac, lattice: ex.lattice, t: ex.t, cond: &cond };
        let (_, g) = loss_and_grad(params, cfg, stats, &input, &ex.target, lambda_l)?;
        acc.add_scaled(&g, 1.0 / batch.len() as f64);
    }
    Ok(acc)
}

/// Random batch of `n_examples` cells with `n_atoms` atoms each.
pub fn toy_batch(cfg: &NetworkConfig, stats: &LatticeStats, seed: u64, n_examples: usize, n_atoms: usize) -> Vec<CheckExample> {
    let mut r = rng::seeded(rng::derive_seed(seed, 0x6c, 1));
    let species_pool = [3u8, 8, 11, 17, 26];
    (0..n_examples)
        .map(|_| {
            let species: Vec<u8> = (0..n_atoms).map(|_| species_pool[r.random_range(0..species_pool.len())]).collect();
            let frac: Vec<Vec3> = (0..n_atoms).map(|_| core::array::from_fn(|_| r.random())).collect();
            let lattice = core::array::from_fn(|k| stats.mean[k] + stats.std[k] * (r.random::<f64>() * 2.0 - 1.0));
            let buckets = (0..3).map(|_| r.random_range(0..cfg.n_buckets)).collect();
            let target = VelocityTarget {
                ul: core::array::from_fn(|k| stats.std[k] * (r.random::<f64>() * 2.0 - 1.0)),
                uf: (0..n_atoms).map(|_| core::array::from_fn(|_| r.random::<f64>() - 0.5)).collect(),
            };
            CheckExample { species, frac, lattice, t: r.random::<f64>(), buckets, target }
        })
        .collect()
}

/// Compares `analytic` against central differences of [`batch_loss`] for
/// every entry of every tensor. Rows of the atom and token tables that the
/// batch never reads cannot affect the loss; for those only `analytic == 0`
/// is checked.
pub fn compare(
    params: &ModelParams,
    analytic: &ModelParams,
    cfg: &NetworkConfig,
    stats: &LatticeStats,
    batch: &[CheckExample],
    lambda_l: f64,
    eps: f64,
) -> Result<Vec<TensorReport>, NetError> {
    let used_z: Vec<usize> = batch.iter().flat_map(|e| e.species.iter().map(|&z| z as usize - 1)).collect();
    let used_b: Vec<usize> = batch.iter().flat_map(|e| e.buckets.iter().copied()).collect();
    let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    let grads = analytic.tensors();
    let mut work = params.clone();
    let mut reports = Vec::with_capacity(names.len());
    for (ti, name) in names.iter().enumerate() {
        let (rows, cols) = (grads[ti].rows, grads[ti].cols);
        let mut rep = TensorReport { name: name.clone(), max_rel_err: 0.0, max_abs_err: 0.0, checked: 0 };
        for idx in 0..rows * cols {
            let row = idx / cols;
            let a = grads[ti].data[idx];
            let live = match name.as_str() {
                "atom_emb" => used_z.contains(&row),
                "token_emb" => used_b.contains(&row),
                _ => true,
            };
            let numeric = if live {
                let orig = work.tensors()[ti].data[idx];
                work.tensors_mut()[ti].data[idx] = orig + eps;
                let up = batch_loss(&work, cfg, stats, batch, lambda_l)?;
                work.tensors_mut()[ti].data[idx] = orig - eps;
                let down = batch_loss(&work, cfg, stats, batch, lambda_l)?;
                work.tensors_mut()[ti].data[idx] = orig;
                (up - down) / (2.0 * eps)
            } else {
                0.0
            };
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(FLOOR);
            rep.max_abs_err = rep.max_abs_err.max(abs);
            rep.max_rel_err = rep.max_rel_err.max(rel);
            rep.checked += 1;
        }
        reports.push(rep);
    }
    Ok(reports)
}

/// Full check on a fresh network: builds a `n_examples × n_atoms` batch from
/// `seed`, optionally corrupts the analytic gradient of one tensor (to prove
/// the check can fail), and reports per-tensor errors.
pub fn run(cfg: &NetworkConfig, seed: u64, n_examples: usize, n_atoms: usize, eps: f64, corrupt: Option<&str>) -> Result<Vec<TensorReport>, NetError> {
    let stats = LatticeStats { mean: [4.5, 5.0, 5.5, 88.0, 92.0, 95.0], std: [0.4, 0.5, 0.3, 3.0, 2.0, 4.0] };
    let params = init_params(cfg, seed);
    let batch = toy_batch(cfg, &stats, seed, n_examples, n_atoms);
    let lambda_l = 1.0;
    let mut analytic = batch_grad(&params, cfg, &stats, &batch, lambda_l)?;
    if let Some(target) = corrupt {
        let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
        if let Some(ti) = names.iter().position(|n| n == target) {
            for x in analytic.tensors_mut()[ti].data.iter_mut() {
                *x = *x * 1.05 + 1e-3;
            }
        }
    }
    compare(&params, &analytic, cfg, &stats, &batch, lambda_l, eps)
}
