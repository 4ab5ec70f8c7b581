//! Periodic structure matching: Niggli-reduced lattice gate, then a
//! translation search anchored on atoms of the rarest species with an
//! optimal species-respecting assignment per translation.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::hungarian::min_cost_assignment;
use super::niggli::niggli_reduce;
use crate::crystal::{lattice_to_matrix, matrix_to_lattice, min_image_vector, reduced_formula, CrystalError, CrystalStructure, Lattice6, LatticeMatrix};
use crate::math::{self, Mat3, Vec3};
use crate::flow::wrap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Allowed fractional length mismatch of the reduced cells.
    pub ltol: f64,
    /// Largest accepted RMSD in units of (V/N)^(1/3).
    pub stol: f64,
    /// Allowed angle mismatch of the reduced cells in degrees.
    pub angle_tol: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { ltol: 0.3, stol: 0.5, angle_tol: 10.0 }
    }
}

const NIGGLI_TOL: f64 = 1e-5;

/// Two structures expressed in a shared averaged cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPair {
    /// Average of the two reduced cells.
    pub matrix: Mat3,
    pub f1: Vec<Vec3>,
    pub f2: Vec<Vec3>,
    pub species1: Vec<u8>,
    pub species2: Vec<u8>,
    /// (V/N)^(1/3) of the averaged cell.
    pub norm: f64,
    /// Rarest species (smallest Z on ties); translations are anchored on it.
    pub anchor: u8,
}

fn reduce(s: &CrystalStructure) -> Result<(Lattice6, Vec<Vec3>), CrystalError> {
    let m = s.matrix()?;
    let cell = niggli_reduce(&m.0, NIGGLI_TOL).ok_or(CrystalError::DegenerateCell("reduction failed"))?;
    let lattice = matrix_to_lattice(&LatticeMatrix(cell.rows))?;
    let frac = s.frac.iter().map(|f| cell.convert_frac(f).map(wrap)).collect();
    Ok((lattice, frac))
}

/// Applies the formula and lattice gates and moves both structures into the
/// averaged reduced cell. `None` when a gate rejects the pair.
pub fn prepare_pair(s1: &CrystalStructure, s2: &CrystalStructure, cfg: &MatchConfig) -> Result<Option<PreparedPair>, CrystalError> {
    if s1.n_atoms() != s2.n_atoms() || reduced_formula(&s1.composition) != reduced_formula(&s2.composition) {
        return Ok(None);
    }
    let (l1, f1) = reduce(s1)?;
    let (l2, f2) = reduce(s2)?;
    let (p1, p2) = (l1.to_array(), l2.to_array());
    for k in 0..3 {
        if p1[k].max(p2[k]) / p1[k].min(p2[k]) - 1.0 > cfg.ltol {
            return Ok(None);
        }
        if (p1[k + 3] - p2[k + 3]).abs() > cfg.angle_tol {
            return Ok(None);
        }
    }
    let mut avg = [0.0; 6];
    for k in 0..6 {
        avg[k] = 0.5 * (p1[k] + p2[k]);
    }
    let matrix = lattice_to_matrix(&Lattice6::from_array(avg)?)?;
    let n = s1.n_atoms();
    let norm = math::cbrt(matrix.det() / n as f64);
    let counts = s1.composition.element_counts();
    let anchor = counts.iter().min_by_key(|&&(z, c)| (c, z)).map(|&(z, _)| z).expect("non-empty composition");
    Ok(Some(PreparedPair {
        matrix: matrix.0,
        f1,
        f2,
        species1: s1.composition.species().to_vec(),
        species2: s2.composition.species().to_vec(),
        norm,
        anchor,
    }))
}

/// Root-mean-square of displacements after removing their mean.
pub(crate) fn centered_rms(disp: &[Vec3]) -> f64 {
    let n = disp.len() as f64;
    let mut mean = [0.0; 3];
    for d in disp {
        mean = math::add3(&mean, d);
    }
    mean = math::scale3(&mean, 1.0 / n);
    let ss: f64 = disp.iter().map(|d| {
        let c = math::sub3(d, &mean);
        math::dot3(&c, &c)
    }).sum();
    math::sqrt(ss / n)
}

impl PreparedPair {
    /// Optimal per-species assignment for the shift `tau` applied to the
    /// first structure, and the resulting normalized, mean-removed RMSD.
    pub fn rmsd_for_shift(&self, tau: &Vec3) -> f64 {
        let mut disp: Vec<Vec3> = Vec::with_capacity(self.f1.len());
        let mut species: Vec<u8> = self.species1.clone();
        species.sort_unstable();
        species.dedup();
        for z in species {
            let ia: Vec<usize> = (0..self.f1.len()).filter(|&i| self.species1[i] == z).collect();
            let ib: Vec<usize> = (0..self.f2.len()).filter(|&i| self.species2[i] == z).collect();
            let n = ia.len();
            let mut vecs = Vec::with_capacity(n * n);
            for &i in &ia {
                let moved = math::add3(&self.f1[i], tau);
                for &j in &ib {
                    vecs.push(min_image_vector(&self.matrix, &math::sub3(&self.f2[j], &moved)));
                }
            }
            let cost: Vec<f64> = vecs.iter().map(|v| math::dot3(v, v)).collect();
            let (assign, _) = min_cost_assignment(&cost, n);
            for (r, &c) in assign.iter().enumerate() {
                disp.push(vecs[r * n + c]);
            }
        }
        centered_rms(&disp) / self.norm
    }

    /// Translations mapping an anchor-species atom of the first structure
    /// onto one of the second.
    pub fn anchor_shifts(&self) -> Vec<Vec3> {
        let mut out = Vec::new();
        for (i, &zi) in self.species1.iter().enumerate() {
            if zi != self.anchor {
                continue;
            }
            for (j, &zj) in self.species2.iter().enumerate() {
                if zj == self.anchor {
                    out.push(math::sub3(&self.f2[j], &self.f1[i]));
                }
            }
        }
        out
    }

    pub fn best_rmsd(&self) -> f64 {
        self.anchor_shifts().iter().map(|t| self.rmsd_for_shift(t)).fold(f64::INFINITY, f64::min)
    }
}

/// Normalized RMSD when the structures match within `cfg`, else `None`.
pub fn match_structures(s1: &CrystalStructure, s2: &CrystalStructure, cfg: &MatchConfig) -> Result<Option<f64>, CrystalError> {
    let Some(pair) = prepare_pair(s1, s2, cfg)? else {
        return Ok(None);
    };
    let r = pair.best_rmsd();
    Ok((r <= cfg.stol).then_some(r))
}

/// Length of the shortest non-zero lattice translation among the 26
/// neighbouring cells.
pub fn shortest_image(m: &Mat3) -> f64 {
    let mut best = f64::INFINITY;
    for i in -1i32..=1 {
        for j in -1i32..=1 {
            for k in -1i32..=1 {
                if (i, j, k) != (0, 0, 0) {
                    best = best.min(math::norm3(&math::vecmat3(&[i as f64, j as f64, k as f64], m)));
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, JitterConfig};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn identity_and_translation() {
        let cfg = MatchConfig::default();
        let s = synth::rock_salt(11, 17, 5.64);
        assert_eq!(match_structures(&s, &s, &cfg).unwrap(), Some(0.0));
        let r = match_structures(&s, &s.translated([0.123, 0.456, 0.789]), &cfg).unwrap().unwrap();
        assert!(r < 1e-9, "{r}");
    }

    #[test]
    fn formula_gate() {
        let cfg = MatchConfig::default();
        let a = synth::rock_salt(11, 17, 5.64);
        let b = synth::rock_salt(19, 17, 5.64);
        assert_eq!(match_structures(&a, &b, &cfg).unwrap(), None);
    }

    #[test]
    fn lattice_gates() {
        let cfg = MatchConfig::default();
        let a = synth::rock_salt(11, 17, 5.0);
        let b = synth::rock_salt(11, 17, 6.6);
        assert_eq!(match_structures(&a, &b, &cfg).unwrap(), None);
        let c = synth::rock_salt(11, 17, 6.4);
        assert_eq!(match_structures(&a, &c, &cfg).unwrap(), Some(0.0));
        let cs = synth::cesium_chloride(11, 17, 3.3);
        let rs = synth::rock_salt_primitive(11, 17, 5.64);
        assert_eq!(match_structures(&cs, &rs, &cfg).unwrap(), None);
    }

    #[test]
    fn jittered_copy_has_small_rmsd() {
        let cfg = MatchConfig::default();
        let s = synth::rock_salt(11, 17, 5.64);
        let mut rng = crate::rng::seeded(4);
        let j = synth::jitter(&s, JitterConfig { lattice: 0.0, frac: 0.01 }, &mut rng);
        let r = match_structures(&s, &j, &cfg).unwrap().unwrap();
        assert!(r > 0.0 && r < 0.03, "{r}");
    }

    /// Independent search: every species-respecting permutation and every
    /// image within two cells, for each anchor translation.
    fn brute_force(p: &PreparedPair) -> f64 {
        fn perms(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return alloc::vec![Vec::new()];
            }
            let mut out = Vec::new();
            for p in perms(n - 1) {
                for k in 0..n {
                    let mut q = p.clone();
                    q.insert(k, n - 1);
                    out.push(q);
                }
            }
            out
        }
        let n = p.f1.len();
        let image = |df: Vec3| -> Vec3 {
            let mut best = [f64::INFINITY; 3];
            let mut bd = f64::INFINITY;
            for i in -3i32..=3 {
                for j in -3i32..=3 {
                    for k in -3i32..=3 {
                        let f = [df[0] - math::floor(df[0]) + i as f64, df[1] - math::floor(df[1]) + j as f64, df[2] - math::floor(df[2]) + k as f64];
                        let x = math::vecmat3(&f, &p.matrix);
                        let d = math::dot3(&x, &x);
                        if d < bd {
                            bd = d;
                            best = x;
                        }
                    }
                }
            }
            best
        };
        let mut best = f64::INFINITY;
        for tau in p.anchor_shifts() {
            let mut best_cost = f64::INFINITY;
            let mut best_disp = Vec::new();
            for perm in perms(n) {
                if (0..n).any(|i| p.species1[i] != p.species2[perm[i]]) {
                    continue;
                }
                let disp: Vec<Vec3> = (0..n).map(|i| image(math::sub3(&p.f2[perm[i]], &math::add3(&p.f1[i], &tau)))).collect();
                let cost: f64 = disp.iter().map(|d| math::dot3(d, d)).sum();
                if cost < best_cost - 1e-12 {
                    best_cost = cost;
                    best_disp = disp;
                }
            }
            best = best.min(centered_rms(&best_disp) / p.norm);
        }
        best
    }

    proptest! {
        #[test]
        fn small_cells_match_brute_force(seed in any::<u64>(), n in 1usize..=4) {
            let mut rng = crate::rng::seeded(seed);
            let s1 = synth::random_structure(&mut rng, n, &[8, 11, 17]);
            let jit = rng.random_range(0.0..0.08);
            let mut s2 = synth::jitter(&s1, JitterConfig { lattice: 0.05, frac: jit }, &mut rng);
            s2 = s2.translated([rng.random(), rng.random(), rng.random()]);
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            s2 = s2.permuted(&perm);
            let cfg = MatchConfig::default();
            let got = match_structures(&s1, &s2, &cfg).unwrap();
            let Some(pair) = prepare_pair(&s1, &s2, &cfg).unwrap() else {
                prop_assert!(got.is_none());
                return Ok(());
            };
            let want = brute_force(&pair);
            prop_assert!((pair.best_rmsd() - want).abs() < 1e-9, "{} vs {}", pair.best_rmsd(), want);
            prop_assert_eq!(got.is_some(), want <= cfg.stol);
            let back = match_structures(&s2, &s1, &cfg).unwrap();
            match (got, back) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9),
                (None, None) => {}
                other => prop_assert!(false, "asymmetric {:?}", other),
            }
        }
    }
}
