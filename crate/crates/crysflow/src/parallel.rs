//! Thread-pool execution of training shards and sampling. Results never
//! depend on the thread count: shards are combined in shard order and each
//! sample owns its seed.

use crysflow_core::conditioning::SpaceGroupDatabase;
use crysflow_core::net::NetError;
use crysflow_core::rng::record_seed;
use crysflow_core::sampler::{sample_csp, Conditioning, GenerationRecord, SampleError};
use crysflow_core::train::{shard_gradient, StepLog, Trainer, TrainingExample, SHARDS};
use crysflow_core::{Composition, CrystalStructure, FlowModel, SamplerConfig, SpaceGroup};
use rayon::prelude::*;

/// Thread count from `CRYSFLOW_THREADS`, else rayon's default.
pub fn thread_count() -> usize {
    std::env::var("CRYSFLOW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

pub fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build().expect("thread pool")
}

/// One training step with shards computed in parallel.
pub fn train_step(trainer: &mut Trainer, examples: &[TrainingExample], pool: &rayon::ThreadPool) -> Result<StepLog, NetError> {
    let shards = pool.install(|| {
        (0..SHARDS)
            .into_par_iter()
            .map(|s| shard_gradient(&trainer.model, examples, &trainer.config, trainer.step, s))
            .collect::<Result<Vec<_>, _>>()
    })?;
    trainer.apply_shards(shards)
}

/// CSP for each composition, in input order. Composition `i` uses seed
/// `cfg.seed ⊕ (first_index + i)`.
/// `oracle` optionally supplies a reference structure and space group per
/// index for oracle-mode conditioning.
pub fn csp_batch(
    model: &FlowModel,
    compositions: &[Composition],
    db: &SpaceGroupDatabase,
    oracle: Option<&[(CrystalStructure, SpaceGroup)]>,
    cfg: &SamplerConfig,
    first_index: usize,
    pool: &rayon::ThreadPool,
) -> Vec<Result<GenerationRecord, SampleError>> {
    pool.install(|| {
        compositions
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let cond = match oracle {
                    Some(refs) => Conditioning::Oracle { reference: &refs[i].0, space_group: refs[i].1 },
                    None => Conditioning::Retrieved(db),
                };
                sample_csp(model, c, cond, cfg, record_seed(cfg.seed, first_index + i))
            })
            .collect()
    })
}
