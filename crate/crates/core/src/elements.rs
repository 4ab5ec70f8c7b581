//! Embedded element table for Z = 1..=100.
//!
//! Masses are standard atomic weights (g/mol), electronegativities are on the
//! Pauling scale (NaN where undefined), covalent radii are in Å, and the
//! oxidation states are the (at most three) common states used by the
//! charge-neutrality check.

/// Highest supported atomic number.
pub const MAX_Z: u8 = 100;

#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub z: u8,
    pub symbol: &'static str,
    pub mass: f64,
    pub electronegativity: f64,
    pub covalent_radius: f64,
    pub oxidation_states: &'static [i8],
}

const NAN: f64 = f64::NAN;

macro_rules! el {
    ($z:expr, $s:expr, $m:expr, $en:expr, $r:expr, [$($ox:expr),*]) => {
        Element {
            z: $z,
            symbol: $s,
            mass: $m,
            electronegativity: $en,
            covalent_radius: $r,
            oxidation_states: &[$($ox),*],
        }
    };
}

pub static ELEMENTS: [Element; 100] = [
    el!(1, "H", 1.008, 2.20, 0.31, [1, -1]),
    el!(2, "He", 4.0026, NAN, 0.28, []),
    el!(3, "Li", 6.94, 0.98, 1.28, [1]),
    el!(4, "Be", 9.0122, 1.57, 0.96, [2]),
    el!(5, "B", 10.81, 2.04, 0.84, [3]),
    el!(6, "C", 12.011, 2.55, 0.76, [-4, 4]),
    el!(7, "N", 14.007, 3.04, 0.71, [-3, 3, 5]),
    el!(8, "O", 15.999, 3.44, 0.66, [-2]),
    el!(9, "F", 18.998, 3.98, 0.57, [-1]),
    el!(10, "Ne", 20.180, NAN, 0.58, []),
    el!(11, "Na", 22.990, 0.93, 1.66, [1]),
    el!(12, "Mg", 24.305, 1.31, 1.41, [2]),
    el!(13, "Al", 26.982, 1.61, 1.21, [3]),
    el!(14, "Si", 28.085, 1.90, 1.11, [-4, 4]),
    el!(15, "P", 30.974, 2.19, 1.07, [-3, 3, 5]),
    el!(16, "S", 32.06, 2.58, 1.05, [-2, 4, 6]),
    el!(17, "Cl", 35.45, 3.16, 1.02, [-1, 5, 7]),
    el!(18, "Ar", 39.948, NAN, 1.06, []),
    el!(19, "K", 39.098, 0.82, 2.03, [1]),
    el!(20, "Ca", 40.078, 1.00, 1.76, [2]),
    el!(21, "Sc", 44.956, 1.36, 1.70, [3]),
    el!(22, "Ti", 47.867, 1.54, 1.60, [4]),
    el!(23, "V", 50.942, 1.63, 1.53, [5]),
    el!(24, "Cr", 51.996, 1.66, 1.39, [3, 6]),
    el!(25, "Mn", 54.938, 1.55, 1.39, [2, 4, 7]),
    el!(26, "Fe", 55.845, 1.83, 1.32, [2, 3]),
    el!(27, "Co", 58.933, 1.88, 1.26, [2, 3]),
    el!(28, "Ni", 58.693, 1.91, 1.24, [2]),
    el!(29, "Cu", 63.546, 1.90, 1.32, [2]),
    el!(30, "Zn", 65.38, 1.65, 1.22, [2]),
    el!(31, "Ga", 69.723, 1.81, 1.22, [3]),
    el!(32, "Ge", 72.630, 2.01, 1.20, [-4, 2, 4]),
    el!(33, "As", 74.922, 2.18, 1.19, [-3, 3, 5]),
    el!(34, "Se", 78.971, 2.55, 1.20, [-2, 4, 6]),
    el!(35, "Br", 79.904, 2.96, 1.20, [-1, 1, 3]),
    el!(36, "Kr", 83.798, 3.00, 1.16, []),
    el!(37, "Rb", 85.468, 0.82, 2.20, [1]),
    el!(38, "Sr", 87.62, 0.95, 1.95, [2]),
    el!(39, "Y", 88.906, 1.22, 1.90, [3]),
    el!(40, "Zr", 91.224, 1.33, 1.75, [4]),
    el!(41, "Nb", 92.906, 1.60, 1.64, [5]),
    el!(42, "Mo", 95.95, 2.16, 1.54, [4, 6]),
    el!(43, "Tc", 98.0, 1.90, 1.47, [4, 7]),
    el!(44, "Ru", 101.07, 2.20, 1.46, [3, 4]),
    el!(45, "Rh", 102.91, 2.28, 1.42, [3]),
    el!(46, "Pd", 106.42, 2.20, 1.39, [2, 4]),
    el!(47, "Ag", 107.87, 1.93, 1.45, [1]),
    el!(48, "Cd", 112.41, 1.69, 1.44, [2]),
    el!(49, "In", 114.82, 1.78, 1.42, [3]),
    el!(50, "Sn", 118.71, 1.96, 1.39, [-4, 2, 4]),
    el!(51, "Sb", 121.76, 2.05, 1.39, [-3, 3, 5]),
    el!(52, "Te", 127.60, 2.10, 1.38, [-2, 4, 6]),
    el!(53, "I", 126.90, 2.66, 1.39, [-1, 5, 7]),
    el!(54, "Xe", 131.29, 2.60, 1.40, []),
    el!(55, "Cs", 132.91, 0.79, 2.44, [1]),
    el!(56, "Ba", 137.33, 0.89, 2.15, [2]),
    el!(57, "La", 138.91, 1.10, 2.07, [3]),
    el!(58, "Ce", 140.12, 1.12, 2.04, [3, 4]),
    el!(59, "Pr", 140.91, 1.13, 2.03, [3]),
    el!(60, "Nd", 144.24, 1.14, 2.01, [3]),
    el!(61, "Pm", 145.0, 1.13, 1.99, [3]),
    el!(62, "Sm", 150.36, 1.17, 1.98, [3]),
    el!(63, "Eu", 151.96, 1.20, 1.98, [2, 3]),
    el!(64, "Gd", 157.25, 1.20, 1.96, [3]),
    el!(65, "Tb", 158.93, 1.10, 1.94, [3]),
    el!(66, "Dy", 162.50, 1.22, 1.92, [3]),
    el!(67, "Ho", 164.93, 1.23, 1.92, [3]),
    el!(68, "Er", 167.26, 1.24, 1.89, [3]),
    el!(69, "Tm", 168.93, 1.25, 1.90, [3]),
    el!(70, "Yb", 173.05, 1.10, 1.87, [3]),
    el!(71, "Lu", 174.97, 1.27, 1.87, [3]),
    el!(72, "Hf", 178.49, 1.30, 1.75, [4]),
    el!(73, "Ta", 180.95, 1.50, 1.70, [5]),
    el!(74, "W", 183.84, 2.36, 1.62, [4, 6]),
    el!(75, "Re", 186.21, 1.90, 1.51, [4]),
    el!(76, "Os", 190.23, 2.20, 1.44, [4]),
    el!(77, "Ir", 192.22, 2.20, 1.41, [3, 4]),
    el!(78, "Pt", 195.08, 2.28, 1.36, [2, 4]),
    el!(79, "Au", 196.97, 2.54, 1.36, [1, 3]),
    el!(80, "Hg", 200.59, 2.00, 1.32, [1, 2]),
    el!(81, "Tl", 204.38, 1.62, 1.45, [1, 3]),
    el!(82, "Pb", 207.2, 2.33, 1.46, [2, 4]),
    el!(83, "Bi", 208.98, 2.02, 1.48, [3]),
    el!(84, "Po", 209.0, 2.00, 1.40, [-2, 2, 4]),
    el!(85, "At", 210.0, 2.20, 1.50, [-1, 1]),
    el!(86, "Rn", 222.0, 2.20, 1.50, []),
    el!(87, "Fr", 223.0, 0.70, 2.60, [1]),
    el!(88, "Ra", 226.0, 0.90, 2.21, [2]),
    el!(89, "Ac", 227.0, 1.10, 2.15, [3]),
    el!(90, "Th", 232.04, 1.30, 2.06, [4]),
    el!(91, "Pa", 231.04, 1.50, 2.00, [5]),
    el!(92, "U", 238.03, 1.38, 1.96, [6]),
    el!(93, "Np", 237.0, 1.36, 1.90, [5]),
    el!(94, "Pu", 244.0, 1.28, 1.87, [4]),
    el!(95, "Am", 243.0, 1.13, 1.80, [3]),
    el!(96, "Cm", 247.0, 1.28, 1.69, [3]),
    el!(97, "Bk", 247.0, 1.30, 1.70, [3]),
    el!(98, "Cf", 251.0, 1.30, 1.70, [3]),
    el!(99, "Es", 252.0, 1.30, 1.70, [3]),
    el!(100, "Fm", 257.0, 1.30, 1.70, [3]),
];

/// Element record for atomic number `z`, if it is in 1..=100.
pub fn by_z(z: u8) -> Option<&'static Element> {
    if (1..=MAX_Z).contains(&z) {
        Some(&ELEMENTS[(z - 1) as usize])
    } else {
        None
    }
}

/// Case-sensitive symbol lookup ("Na", not "NA").
pub fn by_symbol(symbol: &str) -> Option<&'static Element> {
    ELEMENTS.iter().find(|e| e.symbol == symbol)
}

/// Ordering key for formula strings: electronegativity ascending, undefined
/// electronegativity last, then alphabetical by symbol.
pub fn formula_order(a: u8, b: u8) -> core::cmp::Ordering {
    let ea = &ELEMENTS[(a - 1) as usize];
    let eb = &ELEMENTS[(b - 1) as usize];
    let key = |e: &Element| if e.electronegativity.is_nan() { f64::INFINITY } else { e.electronegativity };
    key(ea)
        .partial_cmp(&key(eb))
        .unwrap_or(core::cmp::Ordering::Equal)
        .then_with(|| ea.symbol.cmp(eb.symbol))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_indexed_by_z() {
        for (i, e) in ELEMENTS.iter().enumerate() {
            assert_eq!(e.z as usize, i + 1);
            assert!(e.mass > 0.0);
            assert!(e.oxidation_states.len() <= 3);
        }
        assert_eq!(by_symbol("Cl").unwrap().z, 17);
        assert!(by_z(0).is_none());
        assert!(by_z(101).is_none());
    }

    #[test]
    fn anion_sorts_after_cation() {
        use core::cmp::Ordering::Less;
        assert_eq!(formula_order(11, 17), Less);
        assert_eq!(formula_order(22, 8), Less);
        assert_eq!(formula_order(31, 52), Less);
        // noble gases go last
        assert_eq!(formula_order(9, 2), Less);
    }
}
