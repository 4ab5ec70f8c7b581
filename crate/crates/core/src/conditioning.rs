//! Deterministic conditioning pipeline: space-group retrieval by composition
//! similarity, templated descriptions, tokenization and hashed token
//! embeddings.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crystal::{min_image_distance, reduced_formula, Composition, CrystalError, CrystalStructure};
use crate::elements::{self, MAX_Z};
use crate::math::{self, Matrix};
pub use crate::net::ConditionEmbedding;
use crate::spacegroup::SpaceGroup;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConditioningError {
    #[error("space-group database is empty")]
    EmptyDatabase,
    #[error(transparent)]
    Crystal(#[from] CrystalError),
}

/// Element fractions indexed by Z − 1; entries sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionFingerprint(pub Vec<f64>);

impl CompositionFingerprint {
    /// Non-zero entries as (Z, fraction), ascending Z.
    pub fn nonzero(&self) -> Vec<(u8, f64)> {
        self.0.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i as u8 + 1, *v)).collect()
    }

    pub fn from_nonzero(entries: &[(u8, f64)]) -> Result<Self, CrystalError> {
        let mut v = alloc::vec![0.0; MAX_Z as usize];
        for &(z, f) in entries {
            if z == 0 || z > MAX_Z || !(f >= 0.0) {
                return Err(CrystalError::InvalidComposition(alloc::format!("bad fingerprint entry ({z}, {f})")));
            }
            v[z as usize - 1] += f;
        }
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CrystalError::InvalidComposition(alloc::format!("fingerprint sums to {sum}")));
        }
        Ok(Self(v))
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        let na = math::sqrt(self.0.iter().map(|a| a * a).sum());
        let nb = math::sqrt(other.0.iter().map(|a| a * a).sum());
        if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) }
    }
}

pub fn composition_fingerprint(c: &Composition) -> CompositionFingerprint {
    let mut v = alloc::vec![0.0; MAX_Z as usize];
    let n = c.n_atoms() as f64;
    for (z, count) in c.element_counts() {
        v[z as usize - 1] = count as f64 / n;
    }
    CompositionFingerprint(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceGroupEntry {
    pub formula: String,
    pub fingerprint: CompositionFingerprint,
    pub space_group: SpaceGroup,
}

impl SpaceGroupEntry {
    pub fn new(c: &Composition, space_group: SpaceGroup) -> Self {
        Self { formula: reduced_formula(c), fingerprint: composition_fingerprint(c), space_group }
    }
}

/// Retrieval database of (fingerprint, space group, formula) entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpaceGroupDatabase {
    pub entries: Vec<SpaceGroupEntry>,
}

impl SpaceGroupDatabase {
    pub fn new(entries: Vec<SpaceGroupEntry>) -> Self {
        Self { entries }
    }

    pub fn push(&mut self, c: &Composition, sg: SpaceGroup) {
        self.entries.push(SpaceGroupEntry::new(c, sg));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Similarities closer than this are ties.
const TIE_EPS: f64 = 1e-12;

/// Space group of the entry most similar (cosine of element fractions) to
/// `c`. Ties go to the lowest space-group number, then the
/// lexicographically smallest formula.
pub fn predict_space_group(c: &Composition, db: &SpaceGroupDatabase) -> Result<(SpaceGroup, f64), ConditioningError> {
    let query = composition_fingerprint(c);
    let mut best: Option<(&SpaceGroupEntry, f64)> = None;
    for e in &db.entries {
        let s = query.cosine(&e.fingerprint);
        let better = match best {
            None => true,
            Some((b, bs)) => {
                if s > bs + TIE_EPS {
                    true
                } else if s < bs - TIE_EPS {
                    false
                } else {
                    (e.space_group.number(), e.formula.as_str()) < (b.space_group.number(), b.formula.as_str())
                }
            }
        };
        if better {
            best = Some((e, s));
        }
    }
    best.map(|(e, s)| (e.space_group, s)).ok_or(ConditioningError::EmptyDatabase)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptionMode {
    /// Derived from the full structure, including bond statistics.
    Oracle,
    /// Derived from composition and space group only.
    Conditional,
}

impl DescriptionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Oracle => "oracle",
            Self::Conditional => "conditional",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Description {
    pub text: String,
    pub declared_formula: String,
    pub declared_sg: SpaceGroup,
    pub mode: DescriptionMode,
}

impl Description {
    /// Recovers the declared formula and space group from description text.
    pub fn parse_declared(text: &str) -> Option<(String, SpaceGroup)> {
        let formula = text.split(" crystallizes").next()?.trim();
        if formula.is_empty() || formula.contains(' ') {
            return None;
        }
        let marker = "The space group number is ";
        let rest = &text[text.find(marker)? + marker.len()..];
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        let sg = SpaceGroup::new(digits.parse().ok()?)?;
        Some((formula.to_string(), sg))
    }
}

fn header(c: &Composition, sg: SpaceGroup) -> String {
    let formula = reduced_formula(c);
    let mut s = String::new();
    let _ = write!(
        s,
        "{formula} crystallizes in the {} {} space group. The space group number is {}. It has in total {} atoms, with ",
        sg.crystal_system(),
        sg.symbol(),
        sg.number(),
        c.n_atoms()
    );
    let counts = c.element_counts();
    for (k, (z, n)) in counts.iter().enumerate() {
        if k > 0 {
            s.push_str(", ");
        }
        let _ = write!(s, "{n} {}", elements::ELEMENTS[*z as usize - 1].symbol);
    }
    s.push('.');
    s
}

/// Nearest-neighbour distance of every atom, grouped by species pair in
/// formula order and rounded to 0.01 Å.
fn bond_sentences(s: &CrystalStructure) -> Result<String, CrystalError> {
    let m = s.matrix()?.0;
    let species = s.composition.species();
    let n = s.n_atoms();
    let mut pairs: BTreeMap<(usize, usize), Vec<i64>> = BTreeMap::new();
    let order: Vec<u8> = s.composition.element_counts().into_iter().map(|(z, _)| z).collect();
    let rank = |z: u8| order.iter().position(|&o| o == z).unwrap_or(0);
    for i in 0..n {
        let mut best = (f64::INFINITY, i);
        for j in 0..n {
            let df = math::sub3(&s.frac[j], &s.frac[i]);
            let d = if i == j { crate::metrics::shortest_image(&m) } else { min_image_distance(&m, &df) };
            if d < best.0 {
                best = (d, j);
            }
        }
        let (ra, rb) = (rank(species[i]), rank(species[best.1]));
        let key = if ra <= rb { (ra, rb) } else { (rb, ra) };
        pairs.entry(key).or_default().push(math::round(best.0 * 100.0) as i64);
    }
    let mut out = String::new();
    for ((a, b), ds) in pairs {
        let (sa, sb) = (elements::ELEMENTS[order[a] as usize - 1].symbol, elements::ELEMENTS[order[b] as usize - 1].symbol);
        let lo = *ds.iter().min().expect("non-empty");
        let hi = *ds.iter().max().expect("non-empty");
        let fmt = |v: i64| alloc::format!("{}.{:02}", v / 100, v % 100);
        if lo == hi && ds.len() == 1 {
            let _ = write!(out, " The {sa}–{sb} bond length is {} Å.", fmt(lo));
        } else if lo == hi {
            let _ = write!(out, " All {sa}–{sb} bond lengths are {} Å.", fmt(lo));
        } else {
            let _ = write!(out, " {sa}–{sb} bond lengths range from {} to {} Å.", fmt(lo), fmt(hi));
        }
    }
    Ok(out)
}

/// Conditional-mode description from composition and space group.
pub fn describe_composition(c: &Composition, sg: SpaceGroup) -> Description {
    Description { text: header(c, sg), declared_formula: reduced_formula(c), declared_sg: sg, mode: DescriptionMode::Conditional }
}

/// Templated description. Oracle mode appends nearest-neighbour bond
/// statistics computed from the structure; conditional mode only uses the
/// composition.
pub fn describe_structure(s: &CrystalStructure, sg: SpaceGroup, mode: DescriptionMode) -> Result<Description, CrystalError> {
    match mode {
        DescriptionMode::Conditional => Ok(describe_composition(&s.composition, sg)),
        DescriptionMode::Oracle => {
            let mut d = describe_composition(&s.composition, sg);
            d.text.push_str(&bond_sentences(s)?);
            d.mode = DescriptionMode::Oracle;
            Ok(d)
        }
    }
}

pub fn validate_description(d: &Description, c: &Composition, sg: SpaceGroup) -> bool {
    d.declared_formula == reduced_formula(c) && d.declared_sg.number() == sg.number()
}

/// Generator attempts before falling back to the conditional template.
pub const MAX_DESCRIPTION_ATTEMPTS: usize = 5;

/// Draws descriptions from `generate` until one validates, at most
/// [`MAX_DESCRIPTION_ATTEMPTS`] times, then falls back to the conditional
/// template. Returns the description and the number of rejected attempts.
pub fn describe_with_retries<F>(c: &Composition, sg: SpaceGroup, mut generate: F) -> (Description, usize)
where
    F: FnMut(usize) -> Option<Description>,
{
    let mut rejected = 0;
    for attempt in 0..MAX_DESCRIPTION_ATTEMPTS {
        match generate(attempt) {
            Some(d) if validate_description(&d, c, sg) => return (d, rejected),
            _ => rejected += 1,
        }
    }
    (describe_composition(c, sg), rejected)
}

/// Lowercased runs of alphanumeric characters. A `.` or `,` between two
/// digits stays inside the token so decimals survive whole; everything else
/// separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for (i, &ch) in chars.iter().enumerate() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
            continue;
        }
        let numeric_sep = (ch == '.' || ch == ',')
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit())
            && !cur.is_empty();
        if numeric_sep {
            cur.push(ch);
        } else if !cur.is_empty() {
            tokens.push(core::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn token_bucket(token: &str, n_buckets: usize) -> usize {
    (fnv1a64(token.as_bytes()) % n_buckets as u64) as usize
}

/// Looks up the hashed row of `table` for every token.
pub fn embed_tokens<S: AsRef<str>>(tokens: &[S], table: &Matrix) -> ConditionEmbedding {
    let buckets: Vec<usize> = tokens.iter().map(|t| token_bucket(t.as_ref(), table.rows)).collect();
    embed_buckets(&buckets, table)
}

pub fn embed_buckets(buckets: &[usize], table: &Matrix) -> ConditionEmbedding {
    let mut rows = Matrix::zeros(buckets.len(), table.cols);
    for (s, &b) in buckets.iter().enumerate() {
        rows.row_mut(s).copy_from_slice(table.row(b));
    }
    ConditionEmbedding { tokens: rows, buckets: buckets.to_vec() }
}

/// Text → tokens → hashed buckets.
pub fn text_buckets(text: &str, n_buckets: usize) -> Vec<usize> {
    tokenize(text).iter().map(|t| token_bucket(t, n_buckets)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use alloc::vec;

    fn comp(f: &str) -> Composition {
        Composition::from_formula(f).unwrap()
    }

    fn sg(n: u16) -> SpaceGroup {
        SpaceGroup::new(n).unwrap()
    }

    #[test]
    fn fingerprints() {
        let f = composition_fingerprint(&comp("NaCl"));
        assert_eq!(f.0[10], 0.5);
        assert_eq!(f.0[16], 0.5);
        assert_eq!(f, composition_fingerprint(&comp("Na4Cl4")));
        let he = composition_fingerprint(&comp("He3"));
        assert_eq!(he.0[1], 1.0);
        assert!((he.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(CompositionFingerprint::from_nonzero(&f.nonzero()).unwrap(), f);
    }

    #[test]
    fn retrieval_examples() {
        let mut db = SpaceGroupDatabase::default();
        assert_eq!(predict_space_group(&comp("NaCl"), &db), Err(ConditioningError::EmptyDatabase));
        db.push(&comp("NaCl"), sg(225));
        let (g, s) = predict_space_group(&comp("NaCl"), &db).unwrap();
        assert_eq!(g.number(), 225);
        assert!((s - 1.0).abs() < 1e-12);

        db.push(&comp("CsCl"), sg(221));
        let (g, s) = predict_space_group(&comp("KCl"), &db).unwrap();
        // cosines of two-hot unit fingerprints sharing one element: 0.25 / 0.5
        assert!((s - 0.5).abs() < 1e-12);
        assert_eq!(g.number(), 221);

        let (g, s) = predict_space_group(&comp("Fe2O3"), &db).unwrap();
        assert_eq!(s, 0.0);
        assert_eq!(g.number(), 221);
    }

    #[test]
    fn conditional_description_fields() {
        let d = describe_composition(&comp("Ga4Te4"), sg(194));
        for needle in ["GaTe", "hexagonal", "194", "4 Ga, 4 Te", "P6_3/mmc"] {
            assert!(d.text.contains(needle), "{needle} missing from {}", d.text);
        }
        assert_eq!(Description::parse_declared(&d.text), Some(("GaTe".into(), sg(194))));
        assert!(validate_description(&d, &comp("Ga4Te4"), sg(194)));
        assert!(!validate_description(&d, &comp("Ga4Te4"), sg(225)));
        assert!(!validate_description(&d, &comp("Na4Cl4"), sg(194)));
    }

    #[test]
    fn oracle_rock_salt_bonds() {
        let s = synth::rock_salt(11, 17, 5.64);
        let d = describe_structure(&s, sg(225), DescriptionMode::Oracle).unwrap();
        assert!(d.text.contains("Na–Cl"), "{}", d.text);
        assert!(d.text.contains("2.82 Å"), "{}", d.text);
        assert_eq!(d, describe_structure(&s, sg(225), DescriptionMode::Oracle).unwrap());
        let t = describe_structure(&s.translated([0.13, 0.77, 0.4]), sg(225), DescriptionMode::Oracle).unwrap();
        assert_eq!(d.text, t.text);
    }

    #[test]
    fn retries_fall_back() {
        let c = comp("NaCl");
        let (d, rejected) = describe_with_retries(&c, sg(225), |_| Some(describe_composition(&c, sg(194))));
        assert_eq!(rejected, 5);
        assert_eq!(d.declared_sg.number(), 225);
        let (d, rejected) = describe_with_retries(&c, sg(225), |k| (k == 2).then(|| describe_composition(&c, sg(225))));
        assert_eq!(rejected, 2);
        assert!(validate_description(&d, &c, sg(225)));
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("GaTe crystallizes"), vec!["gate", "crystallizes"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("P6_3/mmc"), vec!["p6", "3", "mmc"]);
        assert_eq!(tokenize("is 2.82 Å."), vec!["is", "2.82", "å"]);
        assert_eq!(tokenize("4 Ga, 4 Te."), vec!["4", "ga", "4", "te"]);
        assert_eq!(tokenize("Na–Cl"), vec!["na", "cl"]);
    }

    /// Reference digests of the FNV-1a 64-bit test suite.
    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn hashed_embedding() {
        let table = Matrix::from_vec(4, 2, vec![0.0, 0.1, 1.0, 1.1, 2.0, 2.1, 3.0, 3.1]);
        let e = embed_tokens::<&str>(&[], &table);
        assert!(e.is_empty());
        let e = embed_tokens(&["gate", "gate"], &table);
        assert_eq!(e.tokens.row(0), e.tokens.row(1));
        assert_eq!(token_bucket("gate", 1024) as u64, fnv1a64(b"gate") % 1024);
    }
}
