//! JSONL dataset records: one structure per line with its space group and
//! an optional description.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crysflow_core::crystal::reduced_formula;
use crysflow_core::{Composition, CrystalStructure, Lattice6, SpaceGroup};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub formula: String,
    pub natoms: usize,
    pub sg_number: u16,
    pub lattice: [f64; 6],
    pub species: Vec<u8>,
    pub frac: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl DatasetRecord {
    pub fn from_structure(s: &CrystalStructure, sg: SpaceGroup, description: Option<String>) -> Self {
        Self {
            formula: reduced_formula(&s.composition),
            natoms: s.n_atoms(),
            sg_number: sg.number(),
            lattice: s.lattice.to_array(),
            species: s.composition.species().to_vec(),
            frac: s.frac.clone(),
            description,
        }
    }

    /// Checks the record invariants and builds its structure.
    pub fn to_structure(&self) -> Result<(CrystalStructure, SpaceGroup), String> {
        if self.natoms != self.species.len() || self.natoms != self.frac.len() {
            return Err(format!(
                "natoms {} but {} species and {} coordinate rows",
                self.natoms,
                self.species.len(),
                self.frac.len()
            ));
        }
        if self.frac.iter().flatten().any(|x| !(0.0..1.0).contains(x)) {
            return Err("fractional coordinates must lie in [0, 1)".into());
        }
        let sg = SpaceGroup::new(self.sg_number).ok_or_else(|| format!("space-group number {} outside 1..=230", self.sg_number))?;
        let composition = Composition::new(self.species.clone()).map_err(|e| e.to_string())?;
        let lattice = Lattice6::from_array(self.lattice).map_err(|e| e.to_string())?;
        let s = CrystalStructure::new(composition, lattice, self.frac.clone()).map_err(|e| e.to_string())?;
        let formula = reduced_formula(&s.composition);
        if formula != self.formula {
            return Err(format!("formula {:?} does not match species ({formula})", self.formula));
        }
        Ok((s, sg))
    }
}

/// Invalid lines either abort the read (`strict`) or are skipped and
/// returned alongside the records.
pub fn read_dataset(path: &Path, strict: bool) -> Result<(Vec<DatasetRecord>, Vec<DatasetError>), DatasetError> {
    let text = fs::read_to_string(path)?;
    parse_dataset(&text, strict)
}

pub fn parse_dataset(text: &str, strict: bool) -> Result<(Vec<DatasetRecord>, Vec<DatasetError>), DatasetError> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<DatasetRecord>(line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.to_structure().map(|_| r));
        match parsed {
            Ok(r) => records.push(r),
            Err(message) => {
                let err = DatasetError::Parse { line: i + 1, message };
                if strict {
                    return Err(err);
                }
                skipped.push(err);
            }
        }
    }
    Ok((records, skipped))
}

pub fn write_dataset(records: &[DatasetRecord], path: &Path) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
