//! Euler integration of a velocity field from a prior sample, and the CSP
//! and ab initio generation pipelines built on it.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditioning::{
    describe_composition, describe_structure, describe_with_retries, embed_buckets, predict_space_group, text_buckets,
    ConditioningError, DescriptionMode, SpaceGroupDatabase,
};
use crate::crystal::{reduced_formula, Composition, CrystalError, CrystalStructure, Lattice6};
use crate::flow::{sample_prior, wrap, LatticeStats, PathConfig, VelocityTarget};
use crate::math::Vec3;
use crate::net::{forward, ConditionEmbedding, ModelParams, NetError, NetInput, NetworkConfig};
use crate::rng;
use crate::spacegroup::SpaceGroup;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("non-finite state at step {0}")]
    NonFiniteState(usize),
    #[error("final lattice is invalid: {0}")]
    InvalidLattice(CrystalError),
    #[error("invalid sampler config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Conditioning(#[from] ConditioningError),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_steps: usize,
    pub step_size: f64,
    /// Multiplier on the coordinate velocity during sampling; the lattice
    /// velocity is never scaled.
    pub anneal_gamma: f64,
    pub seed: u64,
    /// Accept `n_steps · step_size ≠ 1`.
    pub partial_transport: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { n_steps: 100, step_size: 0.01, anneal_gamma: 5.0, seed: 0, partial_transport: false }
    }
}

impl SamplerConfig {
    /// `n` steps of size `1/n`.
    pub fn with_steps(self, n: usize) -> Self {
        Self { n_steps: n, step_size: 1.0 / n as f64, ..self }
    }

    pub fn validate(&self) -> Result<(), SampleError> {
        if self.n_steps == 0 {
            return Err(SampleError::InvalidConfig("n_steps must be at least 1"));
        }
        if !(self.step_size > 0.0) {
            return Err(SampleError::InvalidConfig("step_size must be positive"));
        }
        if !self.anneal_gamma.is_finite() {
            return Err(SampleError::InvalidConfig("anneal_gamma must be finite"));
        }
        if !self.partial_transport && (self.n_steps as f64 * self.step_size - 1.0).abs() > 1e-9 {
            return Err(SampleError::InvalidConfig("n_steps · step_size must equal 1"));
        }
        Ok(())
    }
}

/// Velocity at a state `(F, L)` and time `t`.
pub trait VectorField {
    fn velocity(&self, species: &[u8], frac: &[Vec3], lattice: &[f64; 6], t: f64) -> Result<VelocityTarget, SampleError>;
}

/// Constant field: the conditional target between two fixed endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleField(pub VelocityTarget);

impl VectorField for OracleField {
    fn velocity(&self, _: &[u8], _: &[Vec3], _: &[f64; 6], _: f64) -> Result<VelocityTarget, SampleError> {
        Ok(self.0.clone())
    }
}

/// Trained network, configs and training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowModel {
    pub net: NetworkConfig,
    pub path: PathConfig,
    pub stats: LatticeStats,
    pub params: ModelParams,
}

impl FlowModel {
    pub fn embed_text(&self, text: &str) -> ConditionEmbedding {
        embed_buckets(&text_buckets(text, self.net.n_buckets), &self.params.token_emb)
    }
}

/// The network evaluated under a fixed text condition.
pub struct NetworkField<'a> {
    pub model: &'a FlowModel,
    pub cond: &'a ConditionEmbedding,
}

impl VectorField for NetworkField<'_> {
    fn velocity(&self, species: &[u8], frac: &[Vec3], lattice: &[f64; 6], t: f64) -> Result<VelocityTarget, SampleError> {
        let input = NetInput { species, frac, lattice: *lattice, t, cond: self.cond };
        Ok(forward(&self.model.params, &self.model.net, &self.model.stats, &input)?)
    }
}

/// Explicit Euler from `(f0, l0)`: at step `k` the field is evaluated at
/// `t = k·h`, then `L += h·uL` and `F = wrap(F + h·γ·uF)`.
pub fn euler_integrate<V: VectorField + ?Sized>(
    field: &V,
    composition: &Composition,
    f0: &[Vec3],
    l0: &[f64; 6],
    cfg: &SamplerConfig,
) -> Result<CrystalStructure, SampleError> {
    cfg.validate()?;
    let species = composition.species();
    let h = cfg.step_size;
    let mut frac: Vec<Vec3> = f0.iter().map(|f| f.map(wrap)).collect();
    let mut lattice = *l0;
    for k in 0..cfg.n_steps {
        let t = (k as f64 * h).min(1.0);
        let u = field.velocity(species, &frac, &lattice, t)?;
        if !u.is_finite() {
            return Err(SampleError::NonFiniteState(k));
        }
        for (l, v) in lattice.iter_mut().zip(&u.ul) {
            *l += h * v;
        }
        for (f, v) in frac.iter_mut().zip(&u.uf) {
            for d in 0..3 {
                f[d] = wrap(f[d] + h * cfg.anneal_gamma * v[d]);
            }
        }
        if lattice.iter().any(|x| !x.is_finite()) {
            return Err(SampleError::NonFiniteState(k));
        }
    }
    let lattice = Lattice6::from_array(lattice).map_err(SampleError::InvalidLattice)?;
    CrystalStructure::new(composition.clone(), lattice, frac).map_err(SampleError::InvalidLattice)
}

/// Where the text condition of a CSP query comes from.
#[derive(Debug, Clone, Copy)]
pub enum Conditioning<'a> {
    /// Space group retrieved from the database; conditional template.
    Retrieved(&'a SpaceGroupDatabase),
    /// Description of a known reference structure.
    Oracle { reference: &'a CrystalStructure, space_group: SpaceGroup },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub structure: CrystalStructure,
    pub description: String,
    pub mode: DescriptionMode,
    pub space_group: SpaceGroup,
    pub seed: u64,
    /// Descriptions rejected before one validated.
    pub rejected_descriptions: usize,
}

/// Chooses the space group and description for `composition`.
pub fn condition_text(composition: &Composition, cond: Conditioning<'_>) -> Result<(SpaceGroup, String, DescriptionMode, usize), SampleError> {
    match cond {
        Conditioning::Retrieved(db) => {
            let (sg, _) = predict_space_group(composition, db)?;
            let (d, rejected) = describe_with_retries(composition, sg, |_| Some(describe_composition(composition, sg)));
            Ok((sg, d.text, DescriptionMode::Conditional, rejected))
        }
        Conditioning::Oracle { reference, space_group } => {
            let d = describe_structure(reference, space_group, DescriptionMode::Oracle)
                .map_err(|e| SampleError::Conditioning(e.into()))?;
            Ok((space_group, d.text, DescriptionMode::Oracle, 0))
        }
    }
}

/// Structure for a fixed composition: condition, embed, draw a prior
/// sample from `seed` and integrate the network field.
pub fn sample_csp(
    model: &FlowModel,
    composition: &Composition,
    cond: Conditioning<'_>,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<GenerationRecord, SampleError> {
    let (space_group, text, mode, rejected) = condition_text(composition, cond)?;
    let emb = model.embed_text(&text);
    let mut r = rng::seeded(seed);
    let (f0, l0) = sample_prior(composition.n_atoms(), &model.path, &mut r);
    let field = NetworkField { model, cond: &emb };
    let structure = euler_integrate(&field, composition, &f0, &l0, cfg)?;
    Ok(GenerationRecord { structure, description: text, mode, space_group, seed, rejected_descriptions: rejected })
}

/// Compositions for ab initio generation.
#[derive(Debug, Clone, PartialEq)]
pub enum CompositionSource {
    /// Used in order, cycling when more records are requested.
    List(Vec<Composition>),
    /// Uniform draws from an empirical pool.
    Empirical(Vec<Composition>),
}

impl CompositionSource {
    pub fn draw(&self, n: usize, seed: u64) -> Vec<Composition> {
        match self {
            Self::List(v) if v.is_empty() => Vec::new(),
            Self::List(v) => (0..n).map(|i| v[i % v.len()].clone()).collect(),
            Self::Empirical(v) if v.is_empty() => Vec::new(),
            Self::Empirical(v) => {
                let mut r = rng::seeded(rng::derive_seed(seed, 0xC0, 0));
                (0..n).map(|_| v[r.random_range(0..v.len())].clone()).collect()
            }
        }
    }
}

/// `n` records, each running the CSP pipeline on a drawn composition with
/// seed `cfg.seed ⊕ index`.
pub fn sample_ab_initio(
    model: &FlowModel,
    source: &CompositionSource,
    db: &SpaceGroupDatabase,
    n: usize,
    cfg: &SamplerConfig,
) -> Result<Vec<GenerationRecord>, SampleError> {
    source
        .draw(n, cfg.seed)
        .iter()
        .enumerate()
        .map(|(i, c)| sample_csp(model, c, Conditioning::Retrieved(db), cfg, rng::record_seed(cfg.seed, i)))
        .collect()
}

/// Keeps records whose reduced formula is not in `known`, in order, and
/// counts the rest.
pub fn rejection_filter(records: Vec<GenerationRecord>, known: &BTreeSet<String>) -> (Vec<GenerationRecord>, usize) {
    let before = records.len();
    let kept: Vec<GenerationRecord> =
        records.into_iter().filter(|r| !known.contains(&reduced_formula(&r.structure.composition))).collect();
    let rejected = before - kept.len();
    (kept, rejected)
}

/// Reduced formulas of a set of compositions.
pub fn formula_set<'a, I: IntoIterator<Item = &'a Composition>>(compositions: I) -> BTreeSet<String> {
    compositions.into_iter().map(reduced_formula).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_params;
    use crate::synth;
    use alloc::vec;

    fn tiny_model(seed: u64) -> FlowModel {
        let net = NetworkConfig::tiny();
        let stats = LatticeStats::default();
        FlowModel { params: init_params(&net, seed), net, path: PathConfig::from_stats(&stats), stats }
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::default().validate().is_ok());
        assert!(SamplerConfig::default().with_steps(7).validate().is_ok());
        let bad = SamplerConfig { n_steps: 50, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(SamplerConfig { partial_transport: true, ..bad }.validate().is_ok());
        assert!(SamplerConfig { n_steps: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn oracle_field_transports_exactly() {
        let mut r = rng::seeded(9);
        let target = synth::random_structure(&mut r, 5, &[8, 11]);
        let (f0, l0) = sample_prior(5, &PathConfig::default(), &mut r);
        let l1 = target.lattice.to_array();
        let field = OracleField(VelocityTarget::between(&f0, &target.frac, &l0, &l1));
        for n in [1, 10, 100, 1000] {
            let cfg = SamplerConfig { anneal_gamma: 1.0, ..Default::default() }.with_steps(n);
            let s = euler_integrate(&field, &target.composition, &f0, &l0, &cfg).unwrap();
            for (a, b) in s.lattice.to_array().iter().zip(&l1) {
                assert!((a - b).abs() < 1e-9);
            }
            for (a, b) in s.frac.iter().zip(&target.frac) {
                for d in 0..3 {
                    let diff = (a[d] - b[d]).abs();
                    assert!(diff.min(1.0 - diff) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn zero_field_returns_wrapped_start() {
        let c = Composition::from_formula("NaCl").unwrap();
        let f0 = vec![[1.25, -0.5, 0.0], [0.5, 0.5, 0.5]];
        let l0 = [4.0, 4.0, 4.0, 90.0, 90.0, 90.0];
        let s = euler_integrate(&OracleField(VelocityTarget::zeros(2)), &c, &f0, &l0, &SamplerConfig::default()).unwrap();
        assert_eq!(s.frac, vec![[0.25, 0.5, 0.0], [0.5, 0.5, 0.5]]);
        assert_eq!(s.lattice.to_array(), l0);
    }

    #[test]
    fn non_finite_field_is_reported() {
        let c = Composition::from_formula("Na").unwrap();
        let mut u = VelocityTarget::zeros(1);
        u.ul[0] = f64::NAN;
        let err = euler_integrate(&OracleField(u), &c, &[[0.0; 3]], &[4.0, 4.0, 4.0, 90.0, 90.0, 90.0], &SamplerConfig::default());
        assert_eq!(err, Err(SampleError::NonFiniteState(0)));
    }

    #[test]
    fn csp_is_deterministic_and_keeps_composition() {
        let model = tiny_model(1);
        let mut db = SpaceGroupDatabase::default();
        db.push(&Composition::from_formula("NaCl").unwrap(), SpaceGroup::new(225).unwrap());
        let c = Composition::from_formula("Na4Cl4").unwrap();
        let cfg = SamplerConfig::default();
        let a = sample_csp(&model, &c, Conditioning::Retrieved(&db), &cfg, 5).unwrap();
        let b = sample_csp(&model, &c, Conditioning::Retrieved(&db), &cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.structure.composition, c);
        assert_eq!(a.space_group.number(), 225);
        let one = Composition::from_formula("Na").unwrap();
        let r = sample_csp(&model, &one, Conditioning::Retrieved(&db), &cfg, 5).unwrap();
        assert_eq!(r.structure.n_atoms(), 1);
        let empty = SpaceGroupDatabase::default();
        assert!(matches!(
            sample_csp(&model, &c, Conditioning::Retrieved(&empty), &cfg, 5),
            Err(SampleError::Conditioning(ConditioningError::EmptyDatabase))
        ));
        let reference = synth::rock_salt(11, 17, 5.64);
        let o = sample_csp(&model, &c, Conditioning::Oracle { reference: &reference, space_group: SpaceGroup::new(225).unwrap() }, &cfg, 5).unwrap();
        assert_eq!(o.mode, DescriptionMode::Oracle);
        assert!(o.description.contains("bond"));
    }

    #[test]
    fn ab_initio_sources() {
        let model = tiny_model(2);
        let mut db = SpaceGroupDatabase::default();
        db.push(&Composition::from_formula("NaCl").unwrap(), SpaceGroup::new(225).unwrap());
        let cfg = SamplerConfig::default().with_steps(5);
        let list = CompositionSource::List(vec![Composition::from_formula("NaCl").unwrap(), Composition::from_formula("KBr").unwrap()]);
        assert!(sample_ab_initio(&model, &list, &db, 0, &cfg).unwrap().is_empty());
        let recs = sample_ab_initio(&model, &list, &db, 2, &cfg).unwrap();
        assert_eq!(reduced_formula(&recs[0].structure.composition), "NaCl");
        assert_eq!(reduced_formula(&recs[1].structure.composition), "KBr");
        let pool = CompositionSource::Empirical(synth::ROCK_SALT_PAIRS.iter().map(|&(c, a, _)| Composition::new(vec![c, a]).unwrap()).collect());
        assert_eq!(pool.draw(20, 3), pool.draw(20, 3));
    }

    #[test]
    fn rejection_examples() {
        let rec = |f: &str| GenerationRecord {
            structure: CrystalStructure::new(Composition::from_formula(f).unwrap(), Lattice6::cubic(5.0), vec![[0.0; 3]; Composition::from_formula(f).unwrap().n_atoms()]).unwrap(),
            description: String::new(),
            mode: DescriptionMode::Conditional,
            space_group: SpaceGroup::new(1).unwrap(),
            seed: 0,
            rejected_descriptions: 0,
        };
        let known = formula_set(&[Composition::from_formula("NaCl").unwrap()]);
        let (kept, rej) = rejection_filter(vec![rec("Na2Cl2"), rec("KBr")], &known);
        assert_eq!(rej, 1);
        assert_eq!(kept.len(), 1);
        assert_eq!(reduced_formula(&kept[0].structure.composition), "KBr");
        let (kept, rej) = rejection_filter(vec![rec("KBr"), rec("LiF")], &known);
        assert_eq!((kept.len(), rej), (2, 0));
        let (kept, rej) = rejection_filter(vec![rec("NaCl")], &known);
        assert_eq!((kept.len(), rej), (0, 1));
    }
}
