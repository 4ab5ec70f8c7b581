//! Evaluation: structural and compositional validity, fingerprint coverage,
//! property distances, and periodic structure matching.

mod coverage;
mod hungarian;
mod matcher;
mod niggli;
mod wasserstein;

pub use coverage::{composition_features, coverage, rdf_fingerprint, CoverageConfig, Fingerprint};
pub use hungarian::min_cost_assignment;
pub use matcher::{match_structures, prepare_pair, shortest_image, MatchConfig, PreparedPair};
pub use niggli::{niggli_reduce, NiggliCell};
pub use wasserstein::wasserstein1;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crystal::{min_image_distance, volume_and_density, Composition, CrystalError, CrystalStructure};
use crate::elements;
use crate::math;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {generated} generated vs {reference} reference structures")]
    LengthMismatch { generated: usize, reference: usize },
    #[error(transparent)]
    Crystal(#[from] CrystalError),
}

/// Closest allowed interatomic distance in Å.
pub const MIN_INTERATOMIC_DISTANCE: f64 = 0.5;

/// Shortest distance between any two atoms, periodic images included
/// (an atom and its own images count).
pub fn shortest_distance(s: &CrystalStructure) -> Result<f64, CrystalError> {
    let m = s.matrix()?.0;
    let mut best = shortest_image(&m);
    for i in 0..s.n_atoms() {
        for j in i + 1..s.n_atoms() {
            best = best.min(min_image_distance(&m, &math::sub3(&s.frac[j], &s.frac[i])));
        }
    }
    Ok(best)
}

/// Every interatomic distance, own images included, is at least 0.5 Å.
pub fn structural_validity(s: &CrystalStructure) -> Result<bool, CrystalError> {
    Ok(shortest_distance(s)? >= MIN_INTERATOMIC_DISTANCE)
}

/// Default cap on enumerated oxidation-state assignments.
pub const OXIDATION_SEARCH_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChargeBalance {
    pub neutral: bool,
    /// The search stopped at the budget before finding a neutral assignment.
    pub budget_exhausted: bool,
}

/// Searches one oxidation state per element (elements with no listed state
/// count as neutral) for a zero total charge.
pub fn charge_balance(c: &Composition, budget: u64) -> ChargeBalance {
    let counts = c.element_counts();
    let states: Vec<&[i8]> = counts
        .iter()
        .map(|&(z, _)| {
            let s = elements::ELEMENTS[z as usize - 1].oxidation_states;
            if s.is_empty() { &[0i8][..] } else { s }
        })
        .collect();
    let mut visited = 0u64;
    let mut choice = alloc::vec![0usize; counts.len()];
    loop {
        if visited >= budget {
            return ChargeBalance { neutral: false, budget_exhausted: true };
        }
        visited += 1;
        let total: i64 = counts.iter().zip(&choice).zip(&states).map(|((&(_, n), &k), s)| n as i64 * s[k] as i64).sum();
        if total == 0 {
            return ChargeBalance { neutral: true, budget_exhausted: false };
        }
        let mut pos = 0;
        loop {
            if pos == choice.len() {
                return ChargeBalance { neutral: false, budget_exhausted: false };
            }
            choice[pos] += 1;
            if choice[pos] < states[pos].len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}

pub fn compositional_validity(c: &Composition) -> bool {
    charge_balance(c, OXIDATION_SEARCH_BUDGET).neutral
}

/// Aggregate of index-aligned matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSummary {
    /// Percentage of references with a matching prediction.
    pub match_rate: f64,
    /// Mean normalized RMSD over matched pairs; NaN when nothing matched.
    pub mean_rmsd: f64,
    pub rmsd_defined: bool,
    pub matched: usize,
    pub total: usize,
    pub per_pair: Vec<Option<f64>>,
}

/// Index-aligned match rate. A missing prediction (`None`) counts as a
/// miss.
pub fn match_rate_and_rmsd(
    generated: &[Option<CrystalStructure>],
    reference: &[CrystalStructure],
    cfg: &MatchConfig,
) -> Result<MatchSummary, MetricsError> {
    if generated.len() != reference.len() {
        return Err(MetricsError::LengthMismatch { generated: generated.len(), reference: reference.len() });
    }
    if reference.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut per_pair = Vec::with_capacity(reference.len());
    for (g, r) in generated.iter().zip(reference) {
        per_pair.push(match g {
            Some(g) => match_structures(g, r, cfg)?,
            None => None,
        });
    }
    let rmsds: Vec<f64> = per_pair.iter().flatten().copied().collect();
    let matched = rmsds.len();
    let mean_rmsd = if matched == 0 { f64::NAN } else { rmsds.iter().sum::<f64>() / matched as f64 };
    Ok(MatchSummary {
        match_rate: 100.0 * matched as f64 / reference.len() as f64,
        mean_rmsd,
        rmsd_defined: matched > 0,
        matched,
        total: reference.len(),
        per_pair,
    })
}

/// Wasserstein-1 distances between densities (g/cm³) and between counts of
/// distinct elements.
pub fn property_stats(generated: &[CrystalStructure], test: &[CrystalStructure]) -> Result<(f64, f64), MetricsError> {
    if generated.is_empty() || test.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let density = |set: &[CrystalStructure]| -> Result<Vec<f64>, CrystalError> {
        set.iter().map(|s| volume_and_density(s).map(|(_, d)| d)).collect()
    };
    let nel = |set: &[CrystalStructure]| set.iter().map(|s| s.composition.n_elements() as f64).collect::<Vec<_>>();
    let wd = wasserstein1(&density(generated)?, &density(test)?)?;
    let wn = wasserstein1(&nel(generated), &nel(test))?;
    Ok((wd, wn))
}

/// Flat metric report. Metrics that were not requested stay `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_generated: usize,
    pub n_reference: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub struct_validity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub comp_validity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub comp_validity_budget_exhausted: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cov_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cov_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wdist_density: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wdist_nel: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub match_rate: Option<f64>,
    /// `None` when match metrics were not requested or nothing matched; see
    /// `rmsd_defined`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_rmsd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rmsd_defined: Option<bool>,
}

/// Percentages of structurally and compositionally valid structures, and
/// the number of compositions whose charge search hit the budget.
pub fn validity(structures: &[CrystalStructure]) -> Result<(f64, f64, usize), MetricsError> {
    if structures.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut sv = 0;
    let mut cv = 0;
    let mut exhausted = 0;
    for s in structures {
        sv += structural_validity(s)? as usize;
        let cb = charge_balance(&s.composition, OXIDATION_SEARCH_BUDGET);
        cv += cb.neutral as usize;
        exhausted += cb.budget_exhausted as usize;
    }
    let n = structures.len() as f64;
    Ok((100.0 * sv as f64 / n, 100.0 * cv as f64 / n, exhausted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::Lattice6;
    use crate::synth;
    use alloc::vec;

    fn two_atoms(a: f64, f2: [f64; 3]) -> CrystalStructure {
        CrystalStructure::new(Composition::new(vec![11, 17]).unwrap(), Lattice6::cubic(a), vec![[0.0; 3], f2]).unwrap()
    }

    #[test]
    fn structural_validity_examples() {
        let s = two_atoms(4.0, [0.5; 3]);
        assert!((shortest_distance(&s).unwrap() - 12f64.sqrt()).abs() < 1e-12);
        assert!(structural_validity(&s).unwrap());
        assert!(!structural_validity(&two_atoms(4.0, [0.0; 3])).unwrap());
        let single = CrystalStructure::new(Composition::new(vec![1]).unwrap(), Lattice6::cubic(0.4), vec![[0.0; 3]]).unwrap();
        assert!((shortest_distance(&single).unwrap() - 0.4).abs() < 1e-12);
        assert!(!structural_validity(&single).unwrap());
        let shifted = s.translated([0.9, 0.3, 0.77]);
        assert_eq!(structural_validity(&shifted).unwrap(), structural_validity(&s).unwrap());
    }

    #[test]
    fn compositional_validity_examples() {
        let c = |f: &str| Composition::from_formula(f).unwrap();
        assert!(compositional_validity(&c("NaCl")));
        assert!(compositional_validity(&c("TiO2")));
        assert!(compositional_validity(&c("Fe2O3")));
        assert!(!compositional_validity(&c("Na2")));
        assert!(!compositional_validity(&c("NaO2F")));
        let cb = charge_balance(&c("Fe2O3"), 1);
        assert!(cb.budget_exhausted || cb.neutral);
        let cb = charge_balance(&c("NaCl"), 0);
        assert_eq!(cb, ChargeBalance { neutral: false, budget_exhausted: true });
    }

    #[test]
    fn match_rate_examples() {
        let cfg = MatchConfig::default();
        let a = synth::rock_salt(11, 17, 5.64);
        let b = synth::rock_salt(19, 17, 6.29);
        let refs = vec![a.clone(), b.clone()];
        let s = match_rate_and_rmsd(&[Some(a.clone()), Some(b.clone())], &refs, &cfg).unwrap();
        assert_eq!((s.match_rate, s.mean_rmsd, s.rmsd_defined), (100.0, 0.0, true));
        let s = match_rate_and_rmsd(&[Some(b.clone()), Some(a.clone())], &refs, &cfg).unwrap();
        assert_eq!(s.match_rate, 0.0);
        assert!(s.mean_rmsd.is_nan() && !s.rmsd_defined);
        let s = match_rate_and_rmsd(&[Some(a.clone()), Some(a.clone())], &refs, &cfg).unwrap();
        assert_eq!((s.match_rate, s.mean_rmsd), (50.0, 0.0));
        assert_eq!(
            match_rate_and_rmsd(&[Some(a)], &refs, &cfg),
            Err(MetricsError::LengthMismatch { generated: 1, reference: 2 })
        );
    }

    #[test]
    fn property_stats_examples() {
        let set: Vec<CrystalStructure> =
            synth::ROCK_SALT_PAIRS.iter().map(|&(c, a, l)| synth::rock_salt(c, a, l)).collect();
        assert_eq!(property_stats(&set, &set).unwrap(), (0.0, 0.0));
        let doubled: Vec<CrystalStructure> =
            set.iter().map(|s| CrystalStructure { lattice: s.lattice.scaled(2.0), ..s.clone() }).collect();
        let d = |v: &[CrystalStructure]| v.iter().map(|s| volume_and_density(s).unwrap().1).collect::<Vec<_>>();
        let eighth: Vec<f64> = d(&set).iter().map(|x| x / 8.0).collect();
        let (wd, _) = property_stats(&doubled, &set).unwrap();
        assert!((wd - wasserstein1(&eighth, &d(&set)).unwrap()).abs() < 1e-12);
        let ternary = vec![CrystalStructure::new(
            Composition::from_formula("SrTiO3").unwrap(),
            Lattice6::cubic(3.9),
            vec![[0.0; 3], [0.5; 3], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]],
        )
        .unwrap()];
        assert_eq!(property_stats(&set, &ternary).unwrap().1, 1.0);
        assert_eq!(property_stats(&[], &set), Err(MetricsError::EmptyInput));
    }
}
