//! Space groups 1..=230 with short Hermann–Mauguin symbols.
//!
//! Screw axes are written with an underscore (`P6_3/mmc`) and rotoinversions
//! with a leading minus (`Fm-3m`).

use alloc::string::String;
use core::fmt;
use serde::{Deserialize, Serialize};

static SYMBOLS: [&str; 230] = [
    "P1", "P-1", "P2", "P2_1", "C2", "Pm", "Pc", "Cm", "Cc", "P2/m",
    "P2_1/m", "C2/m", "P2/c", "P2_1/c", "C2/c", "P222", "P222_1", "P2_12_12", "P2_12_12_1", "C222_1",
    "C222", "F222", "I222", "I2_12_12_1", "Pmm2", "Pmc2_1", "Pcc2", "Pma2", "Pca2_1", "Pnc2",
    "Pmn2_1", "Pba2", "Pna2_1", "Pnn2", "Cmm2", "Cmc2_1", "Ccc2", "Amm2", "Aem2", "Ama2",
    "Aea2", "Fmm2", "Fdd2", "Imm2", "Iba2", "Ima2", "Pmmm", "Pnnn", "Pccm", "Pban",
    "Pmma", "Pnna", "Pmna", "Pcca", "Pbam", "Pccn", "Pbcm", "Pnnm", "Pmmn", "Pbcn",
    "Pbca", "Pnma", "Cmcm", "Cmce", "Cmmm", "Cccm", "Cmme", "Ccce", "Fmmm", "Fddd",
    "Immm", "Ibam", "Ibca", "Imma", "P4", "P4_1", "P4_2", "P4_3", "I4", "I4_1",
    "P-4", "I-4", "P4/m", "P4_2/m", "P4/n", "P4_2/n", "I4/m", "I4_1/a", "P422", "P42_12",
    "P4_122", "P4_12_12", "P4_222", "P4_22_12", "P4_322", "P4_32_12", "I422", "I4_122", "P4mm", "P4bm",
    "P4_2cm", "P4_2nm", "P4cc", "P4nc", "P4_2mc", "P4_2bc", "I4mm", "I4cm", "I4_1md", "I4_1cd",
    "P-42m", "P-42c", "P-42_1m", "P-42_1c", "P-4m2", "P-4c2", "P-4b2", "P-4n2", "I-4m2", "I-4c2",
    "I-42m", "I-42d", "P4/mmm", "P4/mcc", "P4/nbm", "P4/nnc", "P4/mbm", "P4/mnc", "P4/nmm", "P4/ncc",
    "P4_2/mmc", "P4_2/mcm", "P4_2/nbc", "P4_2/nnm", "P4_2/mbc", "P4_2/mnm", "P4_2/nmc", "P4_2/ncm", "I4/mmm", "I4/mcm",
    "I4_1/amd", "I4_1/acd", "P3", "P3_1", "P3_2", "R3", "P-3", "R-3", "P312", "P321",
    "P3_112", "P3_121", "P3_212", "P3_221", "R32", "P3m1", "P31m", "P3c1", "P31c", "R3m",
    "R3c", "P-31m", "P-31c", "P-3m1", "P-3c1", "R-3m", "R-3c", "P6", "P6_1", "P6_5",
    "P6_2", "P6_4", "P6_3", "P-6", "P6/m", "P6_3/m", "P622", "P6_122", "P6_522", "P6_222",
    "P6_422", "P6_322", "P6mm", "P6cc", "P6_3cm", "P6_3mc", "P-6m2", "P-6c2", "P-62m", "P-62c",
    "P6/mmm", "P6/mcc", "P6_3/mcm", "P6_3/mmc", "P23", "F23", "I23", "P2_13", "I2_13", "Pm-3",
    "Pn-3", "Fm-3", "Fd-3", "Im-3", "Pa-3", "Ia-3", "P432", "P4_232", "F432", "F4_132",
    "I432", "P4_332", "P4_132", "I4_132", "P-43m", "F-43m", "I-43m", "P-43n", "F-43c", "I-43d",
    "Pm-3m", "Pn-3n", "Pm-3n", "Pn-3m", "Fm-3m", "Fm-3c", "Fd-3m", "Fd-3c", "Im-3m", "Ia-3d",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CrystalSystem {
    Triclinic,
    Monoclinic,
    Orthorhombic,
    Tetragonal,
    Trigonal,
    Hexagonal,
    Cubic,
}

impl CrystalSystem {
    pub fn from_number(number: u16) -> Option<Self> {
        Some(match number {
            1..=2 => Self::Triclinic,
            3..=15 => Self::Monoclinic,
            16..=74 => Self::Orthorhombic,
            75..=142 => Self::Tetragonal,
            143..=167 => Self::Trigonal,
            168..=194 => Self::Hexagonal,
            195..=230 => Self::Cubic,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Triclinic => "triclinic",
            Self::Monoclinic => "monoclinic",
            Self::Orthorhombic => "orthorhombic",
            Self::Tetragonal => "tetragonal",
            Self::Trigonal => "trigonal",
            Self::Hexagonal => "hexagonal",
            Self::Cubic => "cubic",
        }
    }
}

impl fmt::Display for CrystalSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A space group by International Tables number. The symbol is derived from
/// the number so the two can never disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct SpaceGroup(u16);

impl SpaceGroup {
    pub const P1: Self = Self(1);

    pub fn new(number: u16) -> Option<Self> {
        (1..=230).contains(&number).then_some(Self(number))
    }

    /// Lookup by Hermann–Mauguin symbol; spaces are ignored.
    pub fn from_symbol(symbol: &str) -> Option<Self> {
        let compact: String = symbol.chars().filter(|c| !c.is_whitespace()).collect();
        SYMBOLS.iter().position(|s| *s == compact).map(|i| Self(i as u16 + 1))
    }

    pub fn number(self) -> u16 {
        self.0
    }

    pub fn symbol(self) -> &'static str {
        SYMBOLS[(self.0 - 1) as usize]
    }

    pub fn crystal_system(self) -> CrystalSystem {
        CrystalSystem::from_number(self.0).expect("validated at construction")
    }
}

impl TryFrom<u16> for SpaceGroup {
    type Error = &'static str;
    fn try_from(n: u16) -> Result<Self, Self::Error> {
        Self::new(n).ok_or("space group number outside 1..=230")
    }
}

impl From<SpaceGroup> for u16 {
    fn from(sg: SpaceGroup) -> u16 {
        sg.0
    }
}

impl fmt::Display for SpaceGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.symbol(), self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_symbols() {
        assert_eq!(SpaceGroup::new(225).unwrap().symbol(), "Fm-3m");
        assert_eq!(SpaceGroup::new(194).unwrap().symbol(), "P6_3/mmc");
        assert_eq!(SpaceGroup::new(221).unwrap().symbol(), "Pm-3m");
        assert_eq!(SpaceGroup::new(62).unwrap().symbol(), "Pnma");
        assert_eq!(SpaceGroup::new(14).unwrap().symbol(), "P2_1/c");
        assert_eq!(SpaceGroup::new(166).unwrap().symbol(), "R-3m");
        assert_eq!(SpaceGroup::from_symbol("Fd-3m").unwrap().number(), 227);
        assert!(SpaceGroup::new(0).is_none());
        assert!(SpaceGroup::new(231).is_none());
    }

    #[test]
    fn symbols_are_unique() {
        for (i, a) in SYMBOLS.iter().enumerate() {
            for b in &SYMBOLS[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn system_ranges() {
        let sys = |n| SpaceGroup::new(n).unwrap().crystal_system();
        assert_eq!(sys(2), CrystalSystem::Triclinic);
        assert_eq!(sys(15), CrystalSystem::Monoclinic);
        assert_eq!(sys(74), CrystalSystem::Orthorhombic);
        assert_eq!(sys(142), CrystalSystem::Tetragonal);
        assert_eq!(sys(167), CrystalSystem::Trigonal);
        assert_eq!(sys(194), CrystalSystem::Hexagonal);
        assert_eq!(sys(195), CrystalSystem::Cubic);
        // lattice-centering letter agrees with the system for rhombohedral groups
        for n in [146u16, 148, 155, 160, 161, 166, 167] {
            assert!(SpaceGroup::new(n).unwrap().symbol().starts_with('R'));
            assert_eq!(sys(n), CrystalSystem::Trigonal);
        }
    }
}
