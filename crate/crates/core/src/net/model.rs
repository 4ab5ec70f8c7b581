//! Forward pass, reverse-mode gradients and the feature maps they share.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{AttentionParams, LayerParams, ModelParams, NetError, NetworkConfig};
use crate::flow::{fm_loss, FmLoss, LatticeStats, VelocityTarget};
use crate::math::{self, axpy_row, axpy_row_t, outer_acc, silu, silu_grad, Matrix, Vec3};

/// Embedded description tokens, one row per token. `buckets` records the
/// hashed-table row each token came from so gradients can flow back into the
/// table; it is empty for embeddings supplied directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEmbedding {
    pub tokens: Matrix,
    pub buckets: Vec<usize>,
}

impl ConditionEmbedding {
    pub fn empty(attn_dim: usize) -> Self {
        Self { tokens: Matrix::zeros(0, attn_dim), buckets: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.tokens.rows
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows == 0
    }
}

/// One network evaluation: a cell state at flow time `t` plus its condition.
#[derive(Debug, Clone, Copy)]
pub struct NetInput<'a> {
    pub species: &'a [u8],
    pub frac: &'a [Vec3],
    pub lattice: [f64; 6],
    pub t: f64,
    pub cond: &'a ConditionEmbedding,
}

/// `[sin(2π fₖ t)]ₖ ++ [cos(2π fₖ t)]ₖ` with fₖ = 2ᵏ, k = 0..n.
pub fn time_embed(t: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; 2 * n];
    let mut f = 1.0;
    for k in 0..n {
        let x = 2.0 * PI * f * t;
        out[k] = math::sin(x);
        out[n + k] = math::cos(x);
        f *= 2.0;
    }
    out
}

/// Fourier features of the fractional difference `f_j − f_i`: a sine block
/// then a cosine block, each laid out axis-major with k = 1..=K.
pub fn edge_features(fi: &Vec3, fj: &Vec3, k_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; 6 * k_max];
    write_edge_features(fi, fj, k_max, &mut out);
    out
}

fn write_edge_features(fi: &Vec3, fj: &Vec3, k_max: usize, out: &mut [f64]) {
    let half = 3 * k_max;
    for axis in 0..3 {
        let d = fj[axis] - fi[axis];
        for k in 1..=k_max {
            let x = 2.0 * PI * k as f64 * d;
            out[axis * k_max + k - 1] = math::sin(x);
            out[half + axis * k_max + k - 1] = math::cos(x);
        }
    }
}

fn global_features(cfg: &NetworkConfig, stats: &LatticeStats, lattice: &[f64; 6], t: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(cfg.global_dim());
    g.extend_from_slice(&stats.zscore(lattice));
    g.push(t);
    g.extend(time_embed(t, cfg.n_time_freq));
    g
}

struct AttnCache {
    q: Matrix,
    k: Matrix,
    v: Matrix,
    p: Matrix,
    o: Matrix,
}

struct LayerCache {
    h_in: Matrix,
    pre: Matrix,
    act: Matrix,
    q: Matrix,
    agg: Matrix,
    r: Matrix,
    h1: Matrix,
    attn: Option<AttnCache>,
}

/// Intermediate values kept by the forward pass for [`backward`].
pub struct ForwardCache {
    g: Vec<f64>,
    edges: Matrix,
    layers: Vec<LayerCache>,
    h_final: Matrix,
    pooled: Vec<f64>,
}

fn check_input(cfg: &NetworkConfig, params: &ModelParams, input: &NetInput<'_>) -> Result<(), NetError> {
    if input.species.len() != input.frac.len() {
        return Err(NetError::ShapeMismatch(format!("{} species but {} coordinate rows", input.species.len(), input.frac.len())));
    }
    if input.species.is_empty() {
        return Err(NetError::ShapeMismatch("no atoms".into()));
    }
    if let Some(z) = input.species.iter().find(|&&z| z == 0 || z as usize > cfg.max_z) {
        return Err(NetError::ShapeMismatch(format!("atomic number {z} outside 1..={}", cfg.max_z)));
    }
    if input.cond.tokens.cols != cfg.attn_dim {
        return Err(NetError::ShapeMismatch(format!("condition width {} but attn_dim {}", input.cond.tokens.cols, cfg.attn_dim)));
    }
    if !params.matches(cfg) {
        return Err(NetError::ShapeMismatch("parameters do not match the network configuration".into()));
    }
    Ok(())
}

/// Scaled dot-product attention from nodes (queries) to tokens (keys and
/// values), projected back and added to the node states. With no tokens the
/// input is returned unchanged.
pub fn cross_attention(attn: &AttentionParams, nodes: &Matrix, tokens: &Matrix) -> Matrix {
    match attention_forward(attn, nodes, tokens) {
        Some((out, _)) => out,
        None => nodes.clone(),
    }
}

fn attention_forward(attn: &AttentionParams, nodes: &Matrix, tokens: &Matrix) -> Option<(Matrix, AttnCache)> {
    let (n, t, a) = (nodes.rows, tokens.rows, attn.key.cols);
    if t == 0 {
        return None;
    }
    let scale = 1.0 / math::sqrt(a as f64);
    let mut q = Matrix::zeros(n, a);
    for i in 0..n {
        axpy_row(nodes.row(i), &attn.query, q.row_mut(i));
    }
    let mut k = Matrix::zeros(t, a);
    let mut v = Matrix::zeros(t, a);
    for s in 0..t {
        axpy_row(tokens.row(s), &attn.key, k.row_mut(s));
        axpy_row(tokens.row(s), &attn.value, v.row_mut(s));
    }
    let mut p = Matrix::zeros(n, t);
    for i in 0..n {
        let qi = q.row(i);
        let row = p.row_mut(i);
        for s in 0..t {
            row[s] = scale * qi.iter().zip(k.row(s)).map(|(x, y)| x * y).sum::<f64>();
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for x in row.iter_mut() {
            *x = math::exp(*x - max);
            z += *x;
        }
        for x in row.iter_mut() {
            *x /= z;
        }
    }
    let mut o = Matrix::zeros(n, a);
    for i in 0..n {
        let oi = o.row_mut(i);
        for s in 0..t {
            let w = p.get(i, s);
            for (x, y) in oi.iter_mut().zip(v.row(s)) {
                *x += w * y;
            }
        }
    }
    let mut out = nodes.clone();
    for i in 0..n {
        axpy_row(o.row(i), &attn.out, out.row_mut(i));
    }
    Some((out, AttnCache { q, k, v, p, o }))
}

fn layer_forward(
    layer: &LayerParams,
    h: &Matrix,
    g: &[f64],
    edges: &Matrix,
    cond: &ConditionEmbedding,
) -> (Matrix, LayerCache) {
    let (n, hd) = (h.rows, h.cols);
    let mut ps = Matrix::zeros(n, hd);
    let mut pn = Matrix::zeros(n, hd);
    for i in 0..n {
        axpy_row(h.row(i), &layer.msg_self, ps.row_mut(i));
        axpy_row(h.row(i), &layer.msg_nbr, pn.row_mut(i));
    }
    let mut c = layer.msg_bias.row(0).to_vec();
    axpy_row(g, &layer.msg_global, &mut c);

    let mut pre = Matrix::zeros(n * n, hd);
    let mut act = Matrix::zeros(n * n, hd);
    let mut q = Matrix::zeros(n * n, hd);
    let mut agg = Matrix::zeros(n, hd);
    let inv_deg = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.0 };
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let e = i * n + j;
            {
                let row = pre.row_mut(e);
                for d in 0..hd {
                    row[d] = ps.get(i, d) + pn.get(j, d) + c[d];
                }
                axpy_row(edges.row(e), &layer.msg_edge, row);
            }
            {
                let (pr, ar) = (pre.row(e), act.row_mut(e));
                for d in 0..hd {
                    ar[d] = silu(pr[d]);
                }
            }
            {
                let qr = q.row_mut(e);
                qr.copy_from_slice(layer.msg_out_bias.row(0));
                axpy_row(act.row(e), &layer.msg_out, qr);
            }
            let qr = q.row(e);
            let ag = agg.row_mut(i);
            for d in 0..hd {
                ag[d] += inv_deg * silu(qr[d]);
            }
        }
    }

    let mut r = Matrix::zeros(n, hd);
    let mut h1 = h.clone();
    let mut gterm = layer.upd_bias.row(0).to_vec();
    axpy_row(g, &layer.upd_global, &mut gterm);
    for i in 0..n {
        let ri = r.row_mut(i);
        ri.copy_from_slice(&gterm);
        axpy_row(h.row(i), &layer.upd_self, ri);
        axpy_row(agg.row(i), &layer.upd_agg, ri);
        let ri = r.row(i).to_vec();
        for (x, rv) in h1.row_mut(i).iter_mut().zip(ri) {
            *x += silu(rv);
        }
    }

    let (h2, attn) = match attention_forward(&layer.attn, &h1, &cond.tokens) {
        Some((out, cache)) => (out, Some(cache)),
        None => (h1.clone(), None),
    };
    (h2, LayerCache { h_in: h.clone(), pre, act, q, agg, r, h1, attn })
}

/// Predicted coordinate and lattice velocities.
pub fn forward(
    params: &ModelParams,
    cfg: &NetworkConfig,
    stats: &LatticeStats,
    input: &NetInput<'_>,
) -> Result<VelocityTarget, NetError> {
    forward_cached(params, cfg, stats, input).map(|(out, _)| out)
}

pub fn forward_cached(
    params: &ModelParams,
    cfg: &NetworkConfig,
    stats: &LatticeStats,
    input: &NetInput<'_>,
) -> Result<(VelocityTarget, ForwardCache), NetError> {
    check_input(cfg, params, input)?;
    let n = input.species.len();
    let hd = cfg.hidden_dim;
    let g = global_features(cfg, stats, &input.lattice, input.t);

    let mut edges = Matrix::zeros(n * n, cfg.edge_dim());
    for i in 0..n {
        for j in 0..n {
            if i != j {
                write_edge_features(&input.frac[i], &input.frac[j], cfg.n_fourier_freq, edges.row_mut(i * n + j));
            }
        }
    }

    let mut h = Matrix::zeros(n, hd);
    for (i, &z) in input.species.iter().enumerate() {
        h.row_mut(i).copy_from_slice(params.atom_emb.row(z as usize - 1));
    }
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for layer in &params.layers {
        let (next, cache) = layer_forward(layer, &h, &g, &edges, input.cond);
        layers.push(cache);
        h = next;
    }

    let mut uf = vec![[0.0; 3]; n];
    let mut pooled = vec![0.0; hd];
    for i in 0..n {
        let mut o = params.head_coord_bias.row(0).to_vec();
        axpy_row(h.row(i), &params.head_coord, &mut o);
        uf[i] = [o[0], o[1], o[2]];
        for (p, x) in pooled.iter_mut().zip(h.row(i)) {
            *p += x / n as f64;
        }
    }
    let mut raw = params.head_lattice_bias.row(0).to_vec();
    axpy_row(&pooled, &params.head_lattice, &mut raw);
    let ul = core::array::from_fn(|k| raw[k] * stats.std[k]);

    Ok((VelocityTarget { ul, uf }, ForwardCache { g, edges, layers, h_final: h, pooled }))
}

fn attention_backward(attn: &AttentionParams, grads: &mut AttentionParams, h1: &Matrix, tokens: &Matrix, cache: &AttnCache, dh2: &Matrix, dh1: &mut Matrix, dtok: &mut Matrix) {
    let (n, t, a) = (h1.rows, tokens.rows, attn.key.cols);
    let scale = 1.0 / math::sqrt(a as f64);
    // out = h1 + o · Wo
    let mut d_o = Matrix::zeros(n, a);
    for i in 0..n {
        outer_acc(cache.o.row(i), dh2.row(i), &mut grads.out);
        axpy_row_t(dh2.row(i), &attn.out, d_o.row_mut(i));
    }
    // o = p · v
    let mut dp = Matrix::zeros(n, t);
    let mut dv = Matrix::zeros(t, a);
    for i in 0..n {
        for s in 0..t {
            let w = cache.p.get(i, s);
            let mut acc = 0.0;
            for (dvx, (&dox, &vx)) in dv.row_mut(s).iter_mut().zip(d_o.row(i).iter().zip(cache.v.row(s))) {
                acc += dox * vx;
                *dvx += w * dox;
            }
            dp.set(i, s, acc);
        }
    }
    // softmax rows, then the scaled scores
    let mut dq = Matrix::zeros(n, a);
    let mut dk = Matrix::zeros(t, a);
    for i in 0..n {
        let pr = cache.p.row(i);
        let dpr = dp.row(i);
        let dot: f64 = pr.iter().zip(dpr).map(|(x, y)| x * y).sum();
        for s in 0..t {
            let ds = pr[s] * (dpr[s] - dot) * scale;
            if ds == 0.0 {
                continue;
            }
            for (x, y) in dq.row_mut(i).iter_mut().zip(cache.k.row(s)) {
                *x += ds * y;
            }
            for (x, y) in dk.row_mut(s).iter_mut().zip(cache.q.row(i)) {
                *x += ds * y;
            }
        }
    }
    for i in 0..n {
        outer_acc(h1.row(i), dq.row(i), &mut grads.query);
        axpy_row_t(dq.row(i), &attn.query, dh1.row_mut(i));
    }
    for s in 0..t {
        outer_acc(tokens.row(s), dk.row(s), &mut grads.key);
        outer_acc(tokens.row(s), dv.row(s), &mut grads.value);
        axpy_row_t(dk.row(s), &attn.key, dtok.row_mut(s));
        axpy_row_t(dv.row(s), &attn.value, dtok.row_mut(s));
    }
}

fn layer_backward(
    layer: &LayerParams,
    grads: &mut LayerParams,
    cache: &LayerCache,
    g: &[f64],
    edges: &Matrix,
    cond: &ConditionEmbedding,
    dh2: Matrix,
    dtok: &mut Matrix,
) -> Matrix {
    let (n, hd) = (cache.h_in.rows, cache.h_in.cols);
    let mut dh1 = dh2.clone();
    if let Some(ac) = &cache.attn {
        attention_backward(&layer.attn, &mut grads.attn, &cache.h1, &cond.tokens, ac, &dh2, &mut dh1, dtok);
    }

    // h1 = h + silu(r)
    let mut dh = dh1.clone();
    let mut dagg = Matrix::zeros(n, hd);
    let mut dr_sum = vec![0.0; hd];
    for i in 0..n {
        let dr: Vec<f64> = dh1.row(i).iter().zip(cache.r.row(i)).map(|(d, r)| d * silu_grad(*r)).collect();
        outer_acc(cache.h_in.row(i), &dr, &mut grads.upd_self);
        outer_acc(cache.agg.row(i), &dr, &mut grads.upd_agg);
        axpy_row_t(&dr, &layer.upd_self, dh.row_mut(i));
        axpy_row_t(&dr, &layer.upd_agg, dagg.row_mut(i));
        for (s, d) in dr_sum.iter_mut().zip(&dr) {
            *s += d;
        }
    }
    outer_acc(g, &dr_sum, &mut grads.upd_global);
    for (b, d) in grads.upd_bias.data.iter_mut().zip(&dr_sum) {
        *b += d;
    }

    // messages
    if n > 1 {
        let inv_deg = 1.0 / (n - 1) as f64;
        let mut dps = Matrix::zeros(n, hd);
        let mut dpn = Matrix::zeros(n, hd);
        let mut dc = vec![0.0; hd];
        let mut dq = vec![0.0; hd];
        let mut dpre = vec![0.0; hd];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let e = i * n + j;
                let qr = cache.q.row(e);
                for d in 0..hd {
                    dq[d] = dagg.get(i, d) * inv_deg * silu_grad(qr[d]);
                }
                outer_acc(cache.act.row(e), &dq, &mut grads.msg_out);
                for (b, x) in grads.msg_out_bias.data.iter_mut().zip(&dq) {
                    *b += x;
                }
                dpre.iter_mut().for_each(|x| *x = 0.0);
                axpy_row_t(&dq, &layer.msg_out, &mut dpre);
                for (x, p) in dpre.iter_mut().zip(cache.pre.row(e)) {
                    *x *= silu_grad(*p);
                }
                outer_acc(edges.row(e), &dpre, &mut grads.msg_edge);
                for d in 0..hd {
                    dps.data[i * hd + d] += dpre[d];
                    dpn.data[j * hd + d] += dpre[d];
                    dc[d] += dpre[d];
                }
            }
        }
        outer_acc(g, &dc, &mut grads.msg_global);
        for (b, x) in grads.msg_bias.data.iter_mut().zip(&dc) {
            *b += x;
        }
        for i in 0..n {
            outer_acc(cache.h_in.row(i), dps.row(i), &mut grads.msg_self);
            outer_acc(cache.h_in.row(i), dpn.row(i), &mut grads.msg_nbr);
            axpy_row_t(dps.row(i), &layer.msg_self, dh.row_mut(i));
            axpy_row_t(dpn.row(i), &layer.msg_nbr, dh.row_mut(i));
        }
    }
    dh
}

/// Gradients of a scalar loss with respect to every parameter, given the
/// loss gradient `d_out` with respect to the network outputs.
pub fn backward(
    params: &ModelParams,
    cfg: &NetworkConfig,
    stats: &LatticeStats,
    input: &NetInput<'_>,
    cache: &ForwardCache,
    d_out: &VelocityTarget,
) -> Result<ModelParams, NetError> {
    let n = input.species.len();
    if d_out.uf.len() != n {
        return Err(NetError::ShapeMismatch(format!("upstream gradient has {} rows for {n} atoms", d_out.uf.len())));
    }
    let hd = cfg.hidden_dim;
    let mut grads = params.zeros_like();

    let mut dh = Matrix::zeros(n, hd);
    for i in 0..n {
        let duf = &d_out.uf[i];
        outer_acc(cache.h_final.row(i), duf, &mut grads.head_coord);
        for k in 0..3 {
            grads.head_coord_bias.data[k] += duf[k];
        }
        axpy_row_t(duf, &params.head_coord, dh.row_mut(i));
    }
    let draw: [f64; 6] = core::array::from_fn(|k| d_out.ul[k] * stats.std[k]);
    outer_acc(&cache.pooled, &draw, &mut grads.head_lattice);
    for k in 0..6 {
        grads.head_lattice_bias.data[k] += draw[k];
    }
    let mut dpooled = vec![0.0; hd];
    axpy_row_t(&draw, &params.head_lattice, &mut dpooled);
    for i in 0..n {
        for (x, p) in dh.row_mut(i).iter_mut().zip(&dpooled) {
            *x += p / n as f64;
        }
    }

    let mut dtok = Matrix::zeros(input.cond.len(), cfg.attn_dim);
    for l in (0..params.layers.len()).rev() {
        dh = layer_backward(&params.layers[l], &mut grads.layers[l], &cache.layers[l], &cache.g, &cache.edges, input.cond, dh, &mut dtok);
    }

    for (i, &z) in input.species.iter().enumerate() {
        let row = grads.atom_emb.row_mut(z as usize - 1);
        for (x, d) in row.iter_mut().zip(dh.row(i)) {
            *x += d;
        }
    }
    if input.cond.buckets.len() == input.cond.len() {
        for (s, &b) in input.cond.buckets.iter().enumerate() {
            let row = grads.token_emb.row_mut(b);
            for (x, d) in row.iter_mut().zip(dtok.row(s)) {
                *x += d;
            }
        }
    }

    for (name, m) in grads.named() {
        if !m.is_finite() {
            return Err(NetError::NonFiniteGradient(name));
        }
    }
    Ok(grads)
}

/// Flow-matching loss of one example and its parameter gradient.
pub fn loss_and_grad(
    params: &ModelParams,
    cfg: &NetworkConfig,
    stats: &LatticeStats,
    input: &NetInput<'_>,
    target: &VelocityTarget,
    lambda_l: f64,
) -> Result<(FmLoss, ModelParams), NetError> {
    let (pred, cache) = forward_cached(params, cfg, stats, input)?;
    let loss = fm_loss(&pred, target, lambda_l).map_err(|e| NetError::ShapeMismatch(format!("{e}")))?;
    let grads = backward(params, cfg, stats, input, &cache, &loss.grad)?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_params;
    use crate::rng;
    use rand::Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn time_embedding_values() {
        let e = time_embed(0.0, 4);
        assert!(e[..4].iter().all(|x| *x == 0.0));
        assert!(e[4..].iter().all(|x| *x == 1.0));
        assert_eq!(time_embed(0.37, 4), time_embed(0.37, 4));
        let (a, b) = (time_embed(0.0, 4), time_embed(1.0, 4));
        for (x, y) in a.iter().zip(&b) {
            assert!(close(*x, *y, 1e-12));
        }
    }

    #[test]
    fn edge_feature_values() {
        let f = edge_features(&[0.3, 0.1, 0.9], &[0.3, 0.1, 0.9], 3);
        assert!(f[..9].iter().all(|x| *x == 0.0));
        assert!(f[9..].iter().all(|x| *x == 1.0));
        let f = edge_features(&[0.0, 0.0, 0.0], &[0.25, 0.0, 0.0], 2);
        assert!(close(f[0], 1.0, 1e-15));
        assert!(close(f[6], 0.0, 1e-15));

        let mut r = rng::seeded(4);
        for _ in 0..100 {
            let fi: Vec3 = core::array::from_fn(|_| r.random());
            let fj: Vec3 = core::array::from_fn(|_| r.random());
            let tau: f64 = r.random();
            let wrap = crate::flow::wrap;
            let a = edge_features(&fi, &fj, 8);
            let b = edge_features(&fi.map(|x| wrap(x + tau)), &fj.map(|x| wrap(x + tau)), 8);
            let c = edge_features(&fi.map(|x| x + 3.0), &fj.map(|x| x - 2.0), 8);
            for ((x, y), z) in a.iter().zip(&b).zip(&c) {
                assert!(close(*x, *y, 1e-12));
                assert!(close(*x, *z, 1e-12));
            }
        }
    }

    fn random_tokens(t: usize, a: usize, seed: u64) -> Matrix {
        let mut r = rng::seeded(seed);
        Matrix::from_vec(t, a, (0..t * a).map(|_| r.random::<f64>() * 2.0 - 1.0).collect())
    }

    #[test]
    fn attention_without_tokens_is_identity() {
        let cfg = NetworkConfig::tiny();
        let p = init_params(&cfg, 0);
        let nodes = random_tokens(3, cfg.hidden_dim, 1);
        let out = cross_attention(&p.layers[0].attn, &nodes, &Matrix::zeros(0, cfg.attn_dim));
        assert_eq!(out, nodes);
    }

    #[test]
    fn single_token_update_is_projected_value() {
        let cfg = NetworkConfig::tiny();
        let p = init_params(&cfg, 0);
        let attn = &p.layers[0].attn;
        let nodes = random_tokens(4, cfg.hidden_dim, 2);
        let tok = random_tokens(1, cfg.attn_dim, 3);
        let out = cross_attention(attn, &nodes, &tok);
        // softmax over one token is 1, so every node receives (tok·Wv)·Wo
        let mut v = vec![0.0; cfg.attn_dim];
        axpy_row(tok.row(0), &attn.value, &mut v);
        let mut upd = vec![0.0; cfg.hidden_dim];
        axpy_row(&v, &attn.out, &mut upd);
        for i in 0..4 {
            for d in 0..cfg.hidden_dim {
                assert!(close(out.get(i, d) - nodes.get(i, d), upd[d], 1e-12));
            }
        }
    }

    #[test]
    fn duplicated_token_does_not_change_attention() {
        let cfg = NetworkConfig::tiny();
        let p = init_params(&cfg, 5);
        let attn = &p.layers[1].attn;
        let nodes = random_tokens(3, cfg.hidden_dim, 6);
        let one = random_tokens(1, cfg.attn_dim, 7);
        let mut two = Matrix::zeros(2, cfg.attn_dim);
        two.row_mut(0).copy_from_slice(one.row(0));
        two.row_mut(1).copy_from_slice(one.row(0));
        let a = cross_attention(attn, &nodes, &one);
        let b = cross_attention(attn, &nodes, &two);
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!(close(*x, *y, 1e-9));
        }
    }

    #[test]
    fn shape_errors() {
        let cfg = NetworkConfig::tiny();
        let p = init_params(&cfg, 0);
        let cond = ConditionEmbedding::empty(cfg.attn_dim);
        let stats = LatticeStats::default();
        let bad = NetInput { species: &[11, 17], frac: &[[0.0; 3]], lattice: [5.0, 5.0, 5.0, 90.0, 90.0, 90.0], t: 0.5, cond: &cond };
        assert!(matches!(forward(&p, &cfg, &stats, &bad), Err(NetError::ShapeMismatch(_))));
        let wide = ConditionEmbedding::empty(cfg.attn_dim + 1);
        let bad = NetInput { species: &[11], frac: &[[0.0; 3]], lattice: [5.0, 5.0, 5.0, 90.0, 90.0, 90.0], t: 0.5, cond: &wide };
        assert!(forward(&p, &cfg, &stats, &bad).is_err());
        let other = init_params(&NetworkConfig::default(), 0);
        let ok = NetInput { species: &[11], frac: &[[0.0; 3]], lattice: [5.0, 5.0, 5.0, 90.0, 90.0, 90.0], t: 0.5, cond: &cond };
        assert!(forward(&other, &cfg, &stats, &ok).is_err());
        assert!(forward(&p, &cfg, &stats, &ok).unwrap().is_finite());
    }
}
