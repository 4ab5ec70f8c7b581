//! Core algorithms for text-conditioned flow matching over crystal structures.
//!
//! A crystal is a composition, six lattice parameters and fractional
//! coordinates on the unit 3-torus. Generation runs in stages: a space group
//! is retrieved for the composition, a templated description is produced and
//! embedded, and a conditioned vector-field network is integrated from a prior
//! sample to a structure.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, parallel
//! execution and the command line live in the `crysflow` companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod conditioning;
pub mod crystal;
pub mod elements;
pub mod flow;
pub mod math;
pub mod metrics;
pub mod net;
pub mod rng;
pub mod sampler;
pub mod spacegroup;
pub mod synth;
pub mod train;

pub use conditioning::{
    ConditionEmbedding, Description, DescriptionMode, SpaceGroupDatabase, SpaceGroupEntry,
};
pub use crystal::{Composition, CrystalError, CrystalStructure, Lattice6, LatticeMatrix};
pub use flow::{PathConfig, TimeDistribution, VelocityTarget};
pub use metrics::{MatchConfig, MetricsReport};
pub use net::{ModelParams, NetworkConfig};
pub use sampler::{FlowModel, GenerationRecord, SamplerConfig};
pub use spacegroup::SpaceGroup;
