//! Flow-matching training: example preparation, per-example gradients and
//! Adam updates. Batches are split into a fixed number of shards whose
//! gradients are summed in shard order, so results do not depend on how the
//! shards are scheduled.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::conditioning::{describe_composition, describe_structure, text_buckets, embed_buckets, DescriptionMode};
use crate::crystal::{CrystalError, CrystalStructure};
use crate::flow::{interpolate_state, sample_prior, VelocityTarget};
use crate::math::Vec3;
use crate::net::{loss_and_grad, AdamConfig, AdamState, ModelParams, NetError, NetInput};
use crate::rng;
use crate::sampler::FlowModel;
use crate::spacegroup::SpaceGroup;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
    /// Probability of training on the composition-only template instead of
    /// the structure-derived description.
    pub text_dropout: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-3, batch_size: 32, max_steps: 2000, seed: 0, text_dropout: 0.5, grad_clip: 0.0 }
    }
}

/// Number of shards a batch is split into.
pub const SHARDS: usize = 8;

/// One training structure with both of its text conditions pre-tokenized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub species: Vec<u8>,
    pub frac: Vec<Vec3>,
    pub lattice: [f64; 6],
    pub oracle_buckets: Vec<usize>,
    pub conditional_buckets: Vec<usize>,
}

impl TrainingExample {
    /// `description` overrides the structure-derived text when given.
    pub fn new(s: &CrystalStructure, sg: SpaceGroup, description: Option<&str>, n_buckets: usize) -> Result<Self, CrystalError> {
        let oracle: String = match description {
            Some(d) => d.into(),
            None => describe_structure(s, sg, DescriptionMode::Oracle)?.text,
        };
        let conditional = describe_composition(&s.composition, sg).text;
        Ok(Self {
            species: s.composition.species().to_vec(),
            frac: s.frac.clone(),
            lattice: s.lattice.to_array(),
            oracle_buckets: text_buckets(&oracle, n_buckets),
            conditional_buckets: text_buckets(&conditional, n_buckets),
        })
    }
}

/// Loss components summed over examples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossSums {
    pub total: f64,
    pub coord: f64,
    pub lattice: f64,
    pub count: usize,
}

impl LossSums {
    fn add(&mut self, o: &LossSums) {
        self.total += o.total;
        self.coord += o.coord;
        self.lattice += o.lattice;
        self.count += o.count;
    }
}

/// Per-step log line: batch-mean losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub loss: f64,
    pub loss_f: f64,
    pub loss_l: f64,
}

/// Loss and gradient of batch slot `slot` at `step`. The example, time,
/// prior draw and text choice all come from a seed derived from
/// `(seed, step, slot)`.
pub fn slot_gradient(
    model: &FlowModel,
    examples: &[TrainingExample],
    cfg: &TrainConfig,
    step: u64,
    slot: usize,
) -> Result<(LossSums, ModelParams), NetError> {
    let mut r = rng::seeded(rng::derive_seed(cfg.seed, step, slot as u64));
    let ex = &examples[r.random_range(0..examples.len())];
    let t = model.path.time.sample(&mut r);
    let (f0, l0) = sample_prior(ex.species.len(), &model.path, &mut r);
    let (ft, lt) = interpolate_state(&f0, &ex.frac, &l0, &ex.lattice, t, &model.path, &mut r);
    let target = VelocityTarget::between(&f0, &ex.frac, &l0, &ex.lattice);
    let buckets = if r.random::<f64>() < cfg.text_dropout { &ex.conditional_buckets } else { &ex.oracle_buckets };
    let cond = embed_buckets(buckets, &model.params.token_emb);
    let input = NetInput { species: &ex.species, frac: &ft, lattice: lt, t, cond: &cond };
    let (loss, grads) = loss_and_grad(&model.params, &model.net, &model.stats, &input, &target, model.path.lambda_l)?;
    Ok((LossSums { total: loss.total, coord: loss.coord, lattice: loss.lattice, count: 1 }, grads))
}

/// Slots of the batch belonging to `shard`.
pub fn shard_range(batch_size: usize, shard: usize) -> Range<usize> {
    let per = batch_size.div_ceil(SHARDS);
    (shard * per).min(batch_size)..((shard + 1) * per).min(batch_size)
}

/// Summed loss and gradient over one shard, slots in order.
pub fn shard_gradient(
    model: &FlowModel,
    examples: &[TrainingExample],
    cfg: &TrainConfig,
    step: u64,
    shard: usize,
) -> Result<(LossSums, ModelParams), NetError> {
    let mut sums = LossSums::default();
    let mut grad = model.params.zeros_like();
    for slot in shard_range(cfg.batch_size, shard) {
        let (l, g) = slot_gradient(model, examples, cfg, step, slot)?;
        sums.add(&l);
        grad.add_scaled(&g, 1.0);
    }
    Ok((sums, grad))
}

/// Model plus optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    pub model: FlowModel,
    pub adam: AdamState,
    pub config: TrainConfig,
    pub step: u64,
}

impl Trainer {
    pub fn new(model: FlowModel, config: TrainConfig) -> Self {
        let adam = AdamState::new(&model.params, AdamConfig::default());
        Self { model, adam, config, step: 0 }
    }

    /// Combines shard results in the given (shard) order and takes one Adam
    /// step on the batch-mean gradient.
    pub fn apply_shards(&mut self, shards: Vec<(LossSums, ModelParams)>) -> Result<StepLog, NetError> {
        let mut sums = LossSums::default();
        let mut grad = self.model.params.zeros_like();
        for (l, g) in &shards {
            sums.add(l);
            grad.add_scaled(g, 1.0);
        }
        let n = sums.count.max(1) as f64;
        let mut mean = self.model.params.zeros_like();
        mean.add_scaled(&grad, 1.0 / n);
        if !mean.is_finite() {
            return Err(NetError::NonFiniteGradient(String::from("batch mean")));
        }
        if self.config.grad_clip > 0.0 {
            let norm = crate::math::sqrt(mean.tensors().iter().flat_map(|m| m.data.iter()).map(|x| x * x).sum());
            if norm > self.config.grad_clip {
                let mut clipped = self.model.params.zeros_like();
                clipped.add_scaled(&mean, self.config.grad_clip / norm);
                mean = clipped;
            }
        }
        self.adam.step(&mut self.model.params, &mean, self.config.lr);
        let log = StepLog { step: self.step, loss: sums.total / n, loss_f: sums.coord / n, loss_l: sums.lattice / n };
        self.step += 1;
        Ok(log)
    }

    /// One step computing every shard on the current thread.
    pub fn step_sequential(&mut self, examples: &[TrainingExample]) -> Result<StepLog, NetError> {
        let shards = (0..SHARDS)
            .map(|s| shard_gradient(&self.model, examples, &self.config, self.step, s))
            .collect::<Result<Vec<_>, _>>()?;
        self.apply_shards(shards)
    }
}
