//! Synthetic toy corpora: rock-salt and cesium-chloride prototypes with
//! lattice and positional jitter, plus random valid structures for property
//! tests.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::crystal::{Composition, CrystalStructure, Lattice6};
use crate::math::{self, Vec3};
use crate::rng;
use crate::spacegroup::SpaceGroup;

/// Cation, anion and conventional rock-salt lattice constant in Å.
pub const ROCK_SALT_PAIRS: [(u8, u8, f64); 8] = [
    (3, 9, 4.03),   // LiF
    (12, 8, 4.21),  // MgO
    (11, 9, 4.63),  // NaF
    (20, 8, 4.81),  // CaO
    (3, 17, 5.13),  // LiCl
    (19, 9, 5.35),  // KF
    (47, 17, 5.55), // AgCl
    (11, 17, 5.64), // NaCl
];

pub const ROCK_SALT_SG: u16 = 225;
pub const CESIUM_CHLORIDE_SG: u16 = 221;

const FCC: [Vec3; 4] = [[0.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]];

fn build(species: Vec<u8>, lattice: Lattice6, frac: Vec<Vec3>) -> CrystalStructure {
    CrystalStructure::new(Composition::new(species).expect("valid species"), lattice, frac).expect("valid prototype")
}

/// Conventional 8-atom rock-salt cell: four cations then four anions.
pub fn rock_salt(cation: u8, anion: u8, a: f64) -> CrystalStructure {
    let mut frac: Vec<Vec3> = FCC.to_vec();
    frac.extend(FCC.iter().map(|f| [crate::flow::wrap(f[0] + 0.5), f[1], f[2]]));
    let species = [cation; 4].into_iter().chain([anion; 4]).collect();
    build(species, Lattice6::cubic(a), frac)
}

/// Two-atom primitive rock-salt cell (rhombohedral, 60° angles) for a
/// conventional constant `a`.
pub fn rock_salt_primitive(cation: u8, anion: u8, a: f64) -> CrystalStructure {
    let p = a / core::f64::consts::SQRT_2;
    let lattice = Lattice6::new(p, p, p, 60.0, 60.0, 60.0).expect("valid rhombohedral cell");
    build(alloc::vec![cation, anion], lattice, alloc::vec![[0.0; 3], [0.5; 3]])
}

/// Two-atom cesium-chloride cell.
pub fn cesium_chloride(cation: u8, anion: u8, a: f64) -> CrystalStructure {
    build(alloc::vec![cation, anion], Lattice6::cubic(a), alloc::vec![[0.0; 3], [0.5; 3]])
}

/// A structure and its space group.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub structure: CrystalStructure,
    pub space_group: SpaceGroup,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterConfig {
    /// Relative jitter of each cell length, uniform in ±this.
    pub lattice: f64,
    /// Absolute jitter of each fractional coordinate, uniform in ±this.
    pub frac: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self { lattice: 0.02, frac: 0.01 }
    }
}

/// Independent length and coordinate jitter; angles are kept.
pub fn jitter<R: rand::Rng + ?Sized>(s: &CrystalStructure, cfg: JitterConfig, rng: &mut R) -> CrystalStructure {
    let mut u = |w: f64| if w > 0.0 { rng.random_range(-w..w) } else { 0.0 };
    let l = s.lattice;
    let lattice = Lattice6 {
        a: l.a * (1.0 + u(cfg.lattice)),
        b: l.b * (1.0 + u(cfg.lattice)),
        c: l.c * (1.0 + u(cfg.lattice)),
        ..l
    };
    let frac = s.frac.iter().map(|f| [f[0] + u(cfg.frac), f[1] + u(cfg.frac), f[2] + u(cfg.frac)]).collect();
    CrystalStructure::new(s.composition.clone(), lattice, frac).expect("jitter keeps the cell valid")
}

/// `n` jittered primitive rock-salt cells cycling through
/// [`ROCK_SALT_PAIRS`].
pub fn rock_salt_corpus(n: usize, jitter_cfg: JitterConfig, seed: u64) -> Vec<Labeled> {
    let sg = SpaceGroup::new(ROCK_SALT_SG).expect("valid");
    (0..n)
        .map(|i| {
            let (c, a, lc) = ROCK_SALT_PAIRS[i % ROCK_SALT_PAIRS.len()];
            let mut r = rng::seeded(rng::derive_seed(seed, 1, i as u64));
            Labeled { structure: jitter(&rock_salt_primitive(c, a, lc), jitter_cfg, &mut r), space_group: sg }
        })
        .collect()
}

/// Two prototypes per composition: primitive rock-salt (Fm-3m) and
/// cesium-chloride (Pm-3m) cells with the same nearest-neighbour distance.
/// Both prototypes have two atoms at the same fractional positions, so they
/// differ only in the cell.
pub fn two_prototype_corpus(n: usize, jitter_cfg: JitterConfig, seed: u64) -> Vec<Labeled> {
    let rs = SpaceGroup::new(ROCK_SALT_SG).expect("valid");
    let cs = SpaceGroup::new(CESIUM_CHLORIDE_SG).expect("valid");
    (0..n)
        .map(|i| {
            let (c, a, lc) = ROCK_SALT_PAIRS[(i / 2) % ROCK_SALT_PAIRS.len()];
            let mut r = rng::seeded(rng::derive_seed(seed, 2, i as u64));
            let (proto, sg) = if i % 2 == 0 {
                (rock_salt_primitive(c, a, lc), rs)
            } else {
                (cesium_chloride(c, a, lc / math::sqrt(3.0)), cs)
            };
            Labeled { structure: jitter(&proto, jitter_cfg, &mut r), space_group: sg }
        })
        .collect()
}

/// Seeded shuffle, then the first `train_fraction` of items go to training.
pub fn split<T: Clone>(items: &[T], train_fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let n_train = math::round(items.len() as f64 * train_fraction) as usize;
    let pick = |ids: &[usize]| ids.iter().map(|&i| items[i].clone()).collect();
    (pick(&idx[..n_train]), pick(&idx[n_train..]))
}

/// Random nondegenerate cell with lengths in [3, 8] Å and angles in
/// [60, 120]°.
pub fn random_lattice<R: rand::Rng + ?Sized>(rng: &mut R) -> Lattice6 {
    loop {
        let mut len = || rng.random_range(3.0..8.0);
        let (a, b, c) = (len(), len(), len());
        let mut ang = || rng.random_range(60.0..120.0);
        let (al, be, ga) = (ang(), ang(), ang());
        if let Ok(l) = Lattice6::new(a, b, c, al, be, ga) {
            if l.volume_factor() > 0.3 {
                return l;
            }
        }
    }
}

/// Random structure with `n_atoms` atoms drawn from `pool`.
pub fn random_structure<R: rand::Rng + ?Sized>(rng: &mut R, n_atoms: usize, pool: &[u8]) -> CrystalStructure {
    let lattice = random_lattice(rng);
    let species = (0..n_atoms).map(|_| pool[rng.random_range(0..pool.len())]).collect();
    let frac = (0..n_atoms).map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]).collect();
    build(species, lattice, frac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::{min_image_distance, reduced_formula};

    #[test]
    fn rock_salt_geometry() {
        let s = rock_salt(11, 17, 5.64);
        assert_eq!(reduced_formula(&s.composition), "NaCl");
        let m = s.matrix().unwrap().0;
        let d = min_image_distance(&m, &math::sub3(&s.frac[0], &s.frac[4]));
        assert!((d - 2.82).abs() < 1e-12);
    }

    #[test]
    fn prototypes_share_nearest_neighbour_distance() {
        let (c, a, lc) = ROCK_SALT_PAIRS[7];
        let rs = rock_salt_primitive(c, a, lc);
        let cs = cesium_chloride(c, a, lc / math::sqrt(3.0));
        let d = |s: &CrystalStructure| min_image_distance(&s.matrix().unwrap().0, &math::sub3(&s.frac[1], &s.frac[0]));
        assert!((d(&rs) - lc / 2.0).abs() < 1e-9);
        assert!((d(&cs) - lc / 2.0).abs() < 1e-9);
    }

    #[test]
    fn corpus_is_deterministic_and_jittered() {
        let a = rock_salt_corpus(40, JitterConfig::default(), 3);
        assert_eq!(a, rock_salt_corpus(40, JitterConfig::default(), 3));
        for (i, item) in a.iter().enumerate() {
            let (_, _, lc) = ROCK_SALT_PAIRS[i % 8];
            for len in [item.structure.lattice.a, item.structure.lattice.b, item.structure.lattice.c] {
                assert!((len * core::f64::consts::SQRT_2 / lc - 1.0).abs() <= 0.02);
            }
        }
        let (train, test) = split(&a, 0.8, 1);
        assert_eq!((train.len(), test.len()), (32, 8));
    }
}
