//! CIF subset: one data block, the six cell tags, an optional space-group
//! number and an atom-site loop with fractional coordinates. Symmetry
//! operation loops are ignored, so sites are read as a P1 expansion.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crysflow_core::crystal::reduced_formula;
use crysflow_core::elements;
use crysflow_core::{Composition, CrystalStructure, Lattice6, SpaceGroup};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CifError {
    #[error("line {line}, column {col}: {message}")]
    Parse { line: usize, col: usize, message: String },
    #[error("missing tag {0}")]
    MissingTag(String),
    #[error("line {line}: malformed loop: {message}")]
    MalformedLoop { line: usize, message: String },
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
}

fn parse_err(line: usize, col: usize, message: impl Into<String>) -> CifError {
    CifError::Parse { line, col, message: message.into() }
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    text: String,
    line: usize,
    col: usize,
    quoted: bool,
}

impl Token {
    fn is_tag(&self) -> bool {
        !self.quoted && self.text.starts_with('_')
    }

    fn is_keyword(&self) -> bool {
        if self.quoted {
            return false;
        }
        let l = self.text.to_ascii_lowercase();
        l.starts_with("data_") || l == "loop_" || l.starts_with("save_") || l == "global_" || l == "stop_"
    }
}

fn tokenize(src: &str) -> Result<Vec<Token>, CifError> {
    let lines: Vec<&str> = src.lines().collect();
    let mut out = Vec::new();
    let mut li = 0;
    while li < lines.len() {
        let line_no = li + 1;
        let line = lines[li];
        if line.starts_with(';') {
            let mut text = line[1..].to_string();
            let mut end = None;
            for (k, l) in lines.iter().enumerate().skip(li + 1) {
                if l.starts_with(';') {
                    end = Some(k);
                    break;
                }
                text.push('\n');
                text.push_str(l);
            }
            let Some(end) = end else {
                return Err(parse_err(line_no, 1, "unterminated text field"));
            };
            out.push(Token { text, line: line_no, col: 1, quoted: true });
            li = end + 1;
            continue;
        }
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c.is_whitespace() {
                i += 1;
            } else if c == '#' {
                break;
            } else if c == '\'' || c == '"' {
                // A quote closes only when followed by whitespace or the end of line.
                let start = i;
                let mut j = i + 1;
                loop {
                    if j >= chars.len() {
                        return Err(parse_err(line_no, start + 1, "unterminated quoted string"));
                    }
                    if chars[j] == c && chars.get(j + 1).is_none_or(|n| n.is_whitespace()) {
                        break;
                    }
                    j += 1;
                }
                out.push(Token { text: chars[start + 1..j].iter().collect(), line: line_no, col: start + 1, quoted: true });
                i = j + 1;
            } else {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() {
                    i += 1;
                }
                out.push(Token { text: chars[start..i].iter().collect(), line: line_no, col: start + 1, quoted: false });
            }
        }
        li += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
struct Loop {
    tags: Vec<String>,
    rows: Vec<Vec<Token>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Block {
    name: String,
    items: BTreeMap<String, Token>,
    loops: Vec<Loop>,
}

fn parse_block(tokens: &[Token]) -> Result<Block, CifError> {
    let mut block: Option<Block> = None;
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        let lower = t.text.to_ascii_lowercase();
        if !t.quoted && lower.starts_with("data_") {
            if block.is_some() {
                return Err(parse_err(t.line, t.col, "only one data block is supported"));
            }
            block = Some(Block { name: t.text[5..].to_string(), ..Block::default() });
            i += 1;
            continue;
        }
        let Some(b) = block.as_mut() else {
            return Err(parse_err(t.line, t.col, "content before the first data block"));
        };
        if !t.quoted && lower == "loop_" {
            let loop_line = t.line;
            i += 1;
            let mut tags = Vec::new();
            while i < tokens.len() && tokens[i].is_tag() {
                tags.push(tokens[i].text.to_ascii_lowercase());
                i += 1;
            }
            if tags.is_empty() {
                return Err(CifError::MalformedLoop { line: loop_line, message: "loop declares no tags".into() });
            }
            let mut values: Vec<Token> = Vec::new();
            while i < tokens.len() && !tokens[i].is_tag() && !tokens[i].is_keyword() {
                values.push(tokens[i].clone());
                i += 1;
            }
            let mut rows: Vec<Vec<Token>> = Vec::new();
            for v in values {
                match rows.last_mut() {
                    Some(r) if r[0].line == v.line => r.push(v),
                    _ => rows.push(vec![v]),
                }
            }
            for r in &rows {
                if r.len() != tags.len() {
                    return Err(CifError::MalformedLoop {
                        line: r[0].line,
                        message: format!("row has {} of {} declared columns", r.len(), tags.len()),
                    });
                }
            }
            b.loops.push(Loop { tags, rows });
            continue;
        }
        if t.is_tag() {
            let Some(v) = tokens.get(i + 1).filter(|v| !v.is_tag() && !v.is_keyword()) else {
                return Err(parse_err(t.line, t.col, format!("tag {} has no value", t.text)));
            };
            b.items.insert(lower, v.clone());
            i += 2;
            continue;
        }
        if t.is_keyword() {
            // save frames and global blocks are outside the subset
            return Err(parse_err(t.line, t.col, format!("unsupported keyword {}", t.text)));
        }
        return Err(parse_err(t.line, t.col, format!("unexpected value {:?}", t.text)));
    }
    block.ok_or_else(|| parse_err(1, 1, "no data block"))
}

/// Numeric value with any trailing standard uncertainty "(n)" removed.
fn number(t: &Token) -> Result<f64, CifError> {
    let s = t.text.trim();
    let s = match s.find('(') {
        Some(p) if s.ends_with(')') && s[p + 1..s.len() - 1].chars().all(|c| c.is_ascii_digit()) => &s[..p],
        _ => s,
    };
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(parse_err(t.line, t.col, format!("expected a number, found {:?}", t.text))),
    }
}

/// Element symbol at the start of a type symbol or label ("Na1+", "O2-").
fn element_of(t: &Token) -> Result<u8, CifError> {
    let letters: String = t.text.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    let mut cands = Vec::new();
    if letters.len() >= 2 {
        cands.push(letters[..2].to_string());
    }
    if !letters.is_empty() {
        cands.push(letters[..1].to_string());
    }
    for c in cands {
        let mut sym = c.to_ascii_lowercase();
        if let Some(f) = sym.get_mut(0..1) {
            f.make_ascii_uppercase();
        }
        if let Some(e) = elements::by_symbol(&sym) {
            return Ok(e.z);
        }
    }
    Err(parse_err(t.line, t.col, format!("unknown element in {:?}", t.text)))
}

/// A parsed CIF data block.
#[derive(Debug, Clone, PartialEq)]
pub struct CifDocument {
    pub name: String,
    pub structure: CrystalStructure,
    pub space_group: Option<SpaceGroup>,
}

const CELL_TAGS: [&str; 6] =
    ["_cell_length_a", "_cell_length_b", "_cell_length_c", "_cell_angle_alpha", "_cell_angle_beta", "_cell_angle_gamma"];
const SG_TAGS: [&str; 2] = ["_symmetry_int_tables_number", "_space_group_it_number"];

/// Parses UTF-8 CIF text. Never panics: every input yields a document or
/// an error with a position where one applies.
pub fn parse_cif(bytes: &[u8]) -> Result<CifDocument, CifError> {
    let src = std::str::from_utf8(bytes).map_err(|e| {
        let before = &bytes[..e.valid_up_to()];
        let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
        let col = before.iter().rev().take_while(|&&b| b != b'\n').count() + 1;
        parse_err(line, col, "invalid UTF-8")
    })?;
    let block = parse_block(&tokenize(src)?)?;

    let mut cell = [0.0; 6];
    for (k, tag) in CELL_TAGS.iter().enumerate() {
        let t = block.items.get(*tag).ok_or_else(|| CifError::MissingTag((*tag).into()))?;
        cell[k] = number(t)?;
    }
    let lattice = Lattice6::from_array(cell).map_err(|e| CifError::InvalidStructure(e.to_string()))?;

    let mut space_group = None;
    for tag in SG_TAGS {
        if let Some(t) = block.items.get(tag) {
            let n = number(t)?;
            let sg = (n.fract() == 0.0 && (1.0..=230.0).contains(&n)).then(|| SpaceGroup::new(n as u16)).flatten();
            space_group = Some(sg.ok_or_else(|| parse_err(t.line, t.col, format!("space-group number {:?} outside 1..=230", t.text)))?);
            break;
        }
    }

    let sites = block
        .loops
        .iter()
        .find(|l| l.tags.iter().any(|t| t == "_atom_site_fract_x"))
        .ok_or_else(|| CifError::MissingTag("_atom_site_fract_x".into()))?;
    let col = |tag: &str| sites.tags.iter().position(|t| t == tag);
    let (fx, fy, fz) = (
        col("_atom_site_fract_x").ok_or_else(|| CifError::MissingTag("_atom_site_fract_x".into()))?,
        col("_atom_site_fract_y").ok_or_else(|| CifError::MissingTag("_atom_site_fract_y".into()))?,
        col("_atom_site_fract_z").ok_or_else(|| CifError::MissingTag("_atom_site_fract_z".into()))?,
    );
    let species_col = col("_atom_site_type_symbol")
        .or_else(|| col("_atom_site_label"))
        .ok_or_else(|| CifError::MissingTag("_atom_site_type_symbol".into()))?;
    let mut species = Vec::with_capacity(sites.rows.len());
    let mut frac = Vec::with_capacity(sites.rows.len());
    for row in &sites.rows {
        species.push(element_of(&row[species_col])?);
        frac.push([number(&row[fx])?, number(&row[fy])?, number(&row[fz])?]);
    }
    if species.is_empty() {
        return Err(CifError::InvalidStructure("no atom sites".into()));
    }
    let composition = Composition::new(species).map_err(|e| CifError::InvalidStructure(e.to_string()))?;
    let structure = CrystalStructure::new(composition, lattice, frac).map_err(|e| CifError::InvalidStructure(e.to_string()))?;
    Ok(CifDocument { name: block.name, structure, space_group })
}

/// Deterministic CIF text: fixed tag order, six decimals, one site per
/// row. The space-group tag is written only when `sg` is given.
pub fn write_cif(s: &CrystalStructure, sg: Option<SpaceGroup>) -> String {
    let mut out = String::new();
    let l = &s.lattice;
    let _ = writeln!(out, "data_{}", reduced_formula(&s.composition));
    for (tag, v) in CELL_TAGS.iter().zip(l.to_array()) {
        let _ = writeln!(out, "{tag} {v:.6}");
    }
    if let Some(sg) = sg {
        let _ = writeln!(out, "_symmetry_space_group_name_H-M '{}'", sg.symbol());
        let _ = writeln!(out, "_symmetry_Int_Tables_number {}", sg.number());
    }
    out.push_str("loop_\n_atom_site_label\n_atom_site_type_symbol\n_atom_site_fract_x\n_atom_site_fract_y\n_atom_site_fract_z\n");
    for (i, (&z, f)) in s.composition.species().iter().zip(&s.frac).enumerate() {
        let sym = elements::ELEMENTS[z as usize - 1].symbol;
        let _ = writeln!(out, "{sym}{i} {sym} {:.6} {:.6} {:.6}", f[0], f[1], f[2]);
    }
    out
}
