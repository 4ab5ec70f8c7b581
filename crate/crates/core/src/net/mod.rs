//! The conditioned vector-field network.
//!
//! Atoms exchange messages over all pairs in the cell. Edge features are
//! Fourier features of wrapped fractional differences, so every output is
//! invariant to a global fractional translation and node outputs permute with
//! the atoms. Lattice parameters (z-scored) and the flow time enter as a
//! global feature. After every message-passing layer a cross-attention block
//! lets atoms read the embedded description tokens.
//!
//! Gradients are hand-written for this fixed architecture; see
//! [`model::backward`] and [`gradcheck`].

mod adam;
pub mod gradcheck;
pub mod model;

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elements::MAX_Z;
use crate::math::{self, Matrix};
use crate::rng;

pub use adam::{AdamConfig, AdamState};
pub use model::{backward, cross_attention, edge_features, forward, loss_and_grad, time_embed, ConditionEmbedding, NetInput};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("invalid network configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_layers: usize,
    pub hidden_dim: usize,
    /// Fourier frequencies per axis for edge features.
    pub n_fourier_freq: usize,
    /// Sinusoid pairs in the time embedding.
    pub n_time_freq: usize,
    pub attn_dim: usize,
    /// Rows of the hashed token table.
    pub n_buckets: usize,
    pub max_z: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { n_layers: 3, hidden_dim: 64, n_fourier_freq: 8, n_time_freq: 8, attn_dim: 64, n_buckets: 1024, max_z: MAX_Z as usize }
    }
}

impl NetworkConfig {
    /// A small network used for gradient checks.
    pub fn tiny() -> Self {
        Self { n_layers: 2, hidden_dim: 6, n_fourier_freq: 2, n_time_freq: 2, attn_dim: 5, n_buckets: 16, max_z: MAX_Z as usize }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let dims = [self.n_layers, self.hidden_dim, self.n_fourier_freq, self.n_time_freq, self.attn_dim, self.n_buckets, self.max_z];
        if dims.contains(&0) {
            return Err(NetError::InvalidConfig("all dimensions must be positive"));
        }
        if self.max_z > MAX_Z as usize {
            return Err(NetError::InvalidConfig("max_z above the element table"));
        }
        Ok(())
    }

    pub fn edge_dim(&self) -> usize {
        6 * self.n_fourier_freq
    }

    /// z-scored lattice (6) + raw time (1) + time embedding.
    pub fn global_dim(&self) -> usize {
        7 + 2 * self.n_time_freq
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub query: Matrix,
    pub key: Matrix,
    pub value: Matrix,
    pub out: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub msg_self: Matrix,
    pub msg_nbr: Matrix,
    pub msg_edge: Matrix,
    pub msg_global: Matrix,
    pub msg_bias: Matrix,
    pub msg_out: Matrix,
    pub msg_out_bias: Matrix,
    pub upd_self: Matrix,
    pub upd_agg: Matrix,
    pub upd_global: Matrix,
    pub upd_bias: Matrix,
    pub attn: AttentionParams,
}

/// Every learnable tensor. Gradients and optimizer moments use the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub atom_emb: Matrix,
    pub token_emb: Matrix,
    pub layers: Vec<LayerParams>,
    pub head_coord: Matrix,
    pub head_coord_bias: Matrix,
    pub head_lattice: Matrix,
    pub head_lattice_bias: Matrix,
}

macro_rules! layer_fields {
    ($m:ident) => {
        $m!(msg_self, msg_nbr, msg_edge, msg_global, msg_bias, msg_out, msg_out_bias, upd_self, upd_agg, upd_global, upd_bias)
    };
}

impl ModelParams {
    /// All-zero parameters with the shapes implied by `cfg`.
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        let (h, a, e, g) = (cfg.hidden_dim, cfg.attn_dim, cfg.edge_dim(), cfg.global_dim());
        let z = Matrix::zeros;
        let layer = || LayerParams {
            msg_self: z(h, h),
            msg_nbr: z(h, h),
            msg_edge: z(e, h),
            msg_global: z(g, h),
            msg_bias: z(1, h),
            msg_out: z(h, h),
            msg_out_bias: z(1, h),
            upd_self: z(h, h),
            upd_agg: z(h, h),
            upd_global: z(g, h),
            upd_bias: z(1, h),
            attn: AttentionParams { query: z(h, a), key: z(a, a), value: z(a, a), out: z(a, h) },
        };
        Self {
            atom_emb: z(cfg.max_z, h),
            token_emb: z(cfg.n_buckets, a),
            layers: (0..cfg.n_layers).map(|_| layer()).collect(),
            head_coord: z(h, 3),
            head_coord_bias: z(1, 3),
            head_lattice: z(h, 6),
            head_lattice_bias: z(1, 6),
        }
    }

    /// Named tensors in a fixed order.
    pub fn named(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = Vec::new();
        out.push(("atom_emb".into(), &self.atom_emb));
        out.push(("token_emb".into(), &self.token_emb));
        for (l, layer) in self.layers.iter().enumerate() {
            macro_rules! push {
                ($($f:ident),*) => { $( out.push((alloc::format!("layer{l}.{}", stringify!($f)), &layer.$f)); )* };
            }
            layer_fields!(push);
            out.push((alloc::format!("layer{l}.attn.query"), &layer.attn.query));
            out.push((alloc::format!("layer{l}.attn.key"), &layer.attn.key));
            out.push((alloc::format!("layer{l}.attn.value"), &layer.attn.value));
            out.push((alloc::format!("layer{l}.attn.out"), &layer.attn.out));
        }
        out.push(("head_coord".into(), &self.head_coord));
        out.push(("head_coord_bias".into(), &self.head_coord_bias));
        out.push(("head_lattice".into(), &self.head_lattice));
        out.push(("head_lattice_bias".into(), &self.head_lattice_bias));
        out
    }

    /// Mutable tensors in the same order as [`ModelParams::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::new();
        out.push(&mut self.atom_emb);
        out.push(&mut self.token_emb);
        for layer in self.layers.iter_mut() {
            macro_rules! push {
                ($($f:ident),*) => { $( out.push(&mut layer.$f); )* };
            }
            layer_fields!(push);
            out.push(&mut layer.attn.query);
            out.push(&mut layer.attn.key);
            out.push(&mut layer.attn.value);
            out.push(&mut layer.attn.out);
        }
        out.push(&mut self.head_coord);
        out.push(&mut self.head_coord_bias);
        out.push(&mut self.head_lattice);
        out.push(&mut self.head_lattice_bias);
        out
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        self.named().into_iter().map(|(_, m)| m).collect()
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|m| m.data.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x = 0.0);
        }
        z
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|m| m.is_finite())
    }

    /// `self += scale · other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        let src = other.tensors();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.data.iter_mut().zip(&s.data) {
                *d += scale * v;
            }
        }
    }

    /// Whether every tensor shape agrees with `cfg`.
    pub fn matches(&self, cfg: &NetworkConfig) -> bool {
        let want = Self::zeros(cfg);
        let a = self.tensors();
        let b = want.tensors();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.rows == y.rows && x.cols == y.cols)
    }
}

/// Weights are drawn from N(0, 1/fan_in), where fan_in counts every input
/// feeding the same pre-activation (so the four message inputs share one
/// fan-in). Biases start at zero and embedding tables at N(0, 1). The output
/// projection of attention is scaled down by 10 so a fresh network starts
/// close to its unconditional form.
pub fn init_params(cfg: &NetworkConfig, seed: u64) -> ModelParams {
    let mut p = ModelParams::zeros(cfg);
    let mut rng = rng::seeded(rng::derive_seed(seed, 0x1417, 0));
    let (h, a, e, g) = (cfg.hidden_dim as f64, cfg.attn_dim as f64, cfg.edge_dim() as f64, cfg.global_dim() as f64);
    fill(&mut p.atom_emb, 1.0, &mut rng);
    fill(&mut p.token_emb, 1.0, &mut rng);
    let msg_fan = 2.0 * h + e + g;
    let upd_fan = 2.0 * h + g;
    for layer in p.layers.iter_mut() {
        let s = 1.0 / math::sqrt(msg_fan);
        fill(&mut layer.msg_self, s, &mut rng);
        fill(&mut layer.msg_nbr, s, &mut rng);
        fill(&mut layer.msg_edge, s, &mut rng);
        fill(&mut layer.msg_global, s, &mut rng);
        fill(&mut layer.msg_out, 1.0 / math::sqrt(h), &mut rng);
        let s = 1.0 / math::sqrt(upd_fan);
        fill(&mut layer.upd_self, s, &mut rng);
        fill(&mut layer.upd_agg, s, &mut rng);
        fill(&mut layer.upd_global, s, &mut rng);
        fill(&mut layer.attn.query, 1.0 / math::sqrt(h), &mut rng);
        fill(&mut layer.attn.key, 1.0 / math::sqrt(a), &mut rng);
        fill(&mut layer.attn.value, 1.0 / math::sqrt(a), &mut rng);
        fill(&mut layer.attn.out, 0.1 / math::sqrt(a), &mut rng);
    }
    fill(&mut p.head_coord, 1.0 / math::sqrt(h), &mut rng);
    fill(&mut p.head_lattice, 1.0 / math::sqrt(h), &mut rng);
    p
}

fn fill<R: Rng>(m: &mut Matrix, std: f64, rng: &mut R) {
    let normal = Normal::new(0.0, std).expect("positive std");
    for x in m.data.iter_mut() {
        *x = normal.sample(rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded() {
        let cfg = NetworkConfig::tiny();
        let a = init_params(&cfg, 1);
        let b = init_params(&cfg, 1);
        let c = init_params(&cfg, 2);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.matches(&cfg));
        assert!(!a.matches(&NetworkConfig::default()));
        assert_eq!(a.named().len(), a.tensors().len());
    }

    #[test]
    fn named_and_mut_orders_agree() {
        let cfg = NetworkConfig::tiny();
        let mut p = init_params(&cfg, 3);
        let shapes: Vec<(usize, usize)> = p.tensors().iter().map(|m| (m.rows, m.cols)).collect();
        let shapes_mut: Vec<(usize, usize)> = p.tensors_mut().iter().map(|m| (m.rows, m.cols)).collect();
        assert_eq!(shapes, shapes_mut);
        let names: alloc::collections::BTreeSet<String> = p.named().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), shapes.len());
    }

    #[test]
    fn config_validation() {
        assert!(NetworkConfig::default().validate().is_ok());
        let bad = NetworkConfig { hidden_dim: 0, ..NetworkConfig::default() };
        assert!(bad.validate().is_err());
        let bad = NetworkConfig { max_z: 101, ..NetworkConfig::default() };
        assert!(bad.validate().is_err());
    }
}
