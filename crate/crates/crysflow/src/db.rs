//! Space-group retrieval database as JSONL.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crysflow_core::conditioning::{CompositionFingerprint, SpaceGroupDatabase, SpaceGroupEntry};
use crysflow_core::SpaceGroup;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DbLine {
    formula: String,
    fingerprint_nonzero: Vec<(u8, f64)>,
    sg_number: u16,
    sg_symbol: String,
}

pub fn write_db(db: &SpaceGroupDatabase, path: &Path) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for e in &db.entries {
        let line = DbLine {
            formula: e.formula.clone(),
            fingerprint_nonzero: e.fingerprint.nonzero(),
            sg_number: e.space_group.number(),
            sg_symbol: e.space_group.symbol().into(),
        };
        serde_json::to_writer(&mut w, &line).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_db(text: &str) -> Result<SpaceGroupDatabase, DatasetError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| DatasetError::Parse { line: i + 1, message };
        let l: DbLine = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let fingerprint = CompositionFingerprint::from_nonzero(&l.fingerprint_nonzero).map_err(|e| err(e.to_string()))?;
        let space_group = SpaceGroup::new(l.sg_number).ok_or_else(|| err(format!("space-group number {} outside 1..=230", l.sg_number)))?;
        entries.push(SpaceGroupEntry { formula: l.formula, fingerprint, space_group });
    }
    Ok(SpaceGroupDatabase::new(entries))
}

pub fn read_db(path: &Path) -> Result<SpaceGroupDatabase, DatasetError> {
    parse_db(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crysflow_core::Composition;

    #[test]
    fn round_trip() {
        let mut db = SpaceGroupDatabase::default();
        db.push(&Composition::from_formula("NaCl").unwrap(), SpaceGroup::new(225).unwrap());
        db.push(&Composition::from_formula("Fe2O3").unwrap(), SpaceGroup::new(167).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("db.jsonl");
        write_db(&db, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(r#"{"formula":"NaCl","fingerprint_nonzero":[[11,0.5],[17,0.5]],"sg_number":225,"sg_symbol":"Fm-3m"}"#));
        assert_eq!(read_db(&p).unwrap(), db);
    }
}
