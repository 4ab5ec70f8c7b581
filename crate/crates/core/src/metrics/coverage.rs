//! Coverage of a reference set by a generated set in two fingerprint
//! spaces: a species-blind radial distribution histogram and a
//! property-weighted composition summary.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::crystal::{CrystalError, CrystalStructure};
use crate::elements;
use crate::math;

pub const RDF_CUTOFF: f64 = 8.0;
pub const RDF_BIN: f64 = 0.1;
const RDF_BINS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub struct_threshold: f64,
    pub comp_threshold: f64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self { struct_threshold: 1.0, comp_threshold: 0.1 }
    }
}

/// Structure and composition fingerprints of one crystal.
#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint {
    pub rdf: Vec<f64>,
    pub comp: Vec<f64>,
}

impl Fingerprint {
    pub fn of(s: &CrystalStructure) -> Result<Self, CrystalError> {
        Ok(Self { rdf: rdf_fingerprint(s)?, comp: composition_features(s) })
    }
}

/// Radial distribution g(r) on 0.1 Å bins up to 8 Å, scaled by
/// 1/√bins so Euclidean distances are root-mean-square differences.
pub fn rdf_fingerprint(s: &CrystalStructure) -> Result<Vec<f64>, CrystalError> {
    let m = s.matrix()?.0;
    let vol = math::det3(&m);
    // Images needed along each axis: cutoff over the perpendicular width.
    let mut reach = [0i32; 3];
    for k in 0..3 {
        let c = math::cross3(&m[(k + 1) % 3], &m[(k + 2) % 3]);
        let width = vol / math::norm3(&c);
        reach[k] = math::ceil(RDF_CUTOFF / width) as i32;
    }
    let cart = s.cartesian()?;
    let n = s.n_atoms();
    let mut hist = vec![0.0; RDF_BINS];
    for i in -reach[0]..=reach[0] {
        for j in -reach[1]..=reach[1] {
            for k in -reach[2]..=reach[2] {
                let shift = math::vecmat3(&[i as f64, j as f64, k as f64], &m);
                for a in 0..n {
                    for b in 0..n {
                        let d = math::norm3(&math::sub3(&math::add3(&cart[b], &shift), &cart[a]));
                        if d > 1e-9 && d < RDF_CUTOFF {
                            hist[(d / RDF_BIN) as usize] += 1.0;
                        }
                    }
                }
            }
        }
    }
    let density = n as f64 / vol;
    let scale = 1.0 / math::sqrt(RDF_BINS as f64);
    for (b, h) in hist.iter_mut().enumerate() {
        let (r0, r1) = (b as f64 * RDF_BIN, (b + 1) as f64 * RDF_BIN);
        let shell = 4.0 / 3.0 * PI * (r1 * r1 * r1 - r0 * r0 * r0);
        *h *= scale / (n as f64 * density * shell);
    }
    Ok(hist)
}

/// Fraction-weighted mean, standard deviation, minimum and maximum of
/// Z/100, electronegativity/4 and covalent radius/2.5 Å. Elements without
/// an electronegativity contribute 0 to that property.
pub fn composition_features(s: &CrystalStructure) -> Vec<f64> {
    let counts = s.composition.element_counts();
    let n = s.n_atoms() as f64;
    let props: [fn(&elements::Element) -> f64; 3] = [
        |e| e.z as f64 / 100.0,
        |e| if e.electronegativity.is_nan() { 0.0 } else { e.electronegativity / 4.0 },
        |e| e.covalent_radius / 2.5,
    ];
    let mut out = Vec::with_capacity(12);
    for p in props {
        let vals: Vec<(f64, f64)> = counts.iter().map(|&(z, c)| (p(&elements::ELEMENTS[z as usize - 1]), c as f64 / n)).collect();
        let mean: f64 = vals.iter().map(|(v, w)| v * w).sum();
        let var: f64 = vals.iter().map(|(v, w)| w * (v - mean) * (v - mean)).sum();
        let min = vals.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
        let max = vals.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
        out.extend([mean, math::sqrt(var), min, max]);
    }
    out
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Recall: percentage of test items with a generated item within both
/// thresholds. Precision: percentage of generated items with a test item
/// within both thresholds.
pub fn coverage(generated: &[Fingerprint], test: &[Fingerprint], cfg: &CoverageConfig) -> Result<(f64, f64), MetricsError> {
    if generated.is_empty() || test.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let close = |a: &Fingerprint, b: &Fingerprint| {
        dist(&a.rdf, &b.rdf) <= cfg.struct_threshold && dist(&a.comp, &b.comp) <= cfg.comp_threshold
    };
    let covered = |from: &[Fingerprint], to: &[Fingerprint]| {
        100.0 * from.iter().filter(|a| to.iter().any(|b| close(a, b))).count() as f64 / from.len() as f64
    };
    Ok((covered(test, generated), covered(generated, test)))
}
