//! Niggli cell reduction (Křivý–Gruber with relative tolerances), tracking
//! the integer change of basis.

use crate::math::{self, Mat3, Vec3};

/// Reduced basis `rows = transform · original` with an integer,
/// unimodular, determinant +1 `transform`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NiggliCell {
    pub rows: Mat3,
    pub transform: [[i64; 3]; 3],
}

const MAX_ITERATIONS: usize = 1000;

fn g6(b: &Mat3) -> [f64; 6] {
    [
        math::dot3(&b[0], &b[0]),
        math::dot3(&b[1], &b[1]),
        math::dot3(&b[2], &b[2]),
        2.0 * math::dot3(&b[1], &b[2]),
        2.0 * math::dot3(&b[0], &b[2]),
        2.0 * math::dot3(&b[0], &b[1]),
    ]
}

struct Basis {
    v: Mat3,
    t: [[i64; 3]; 3],
}

impl Basis {
    /// New row `i` = Σ_k coeff[k] · old row k.
    fn apply(&mut self, m: [[i64; 3]; 3]) {
        let mut v = [[0.0; 3]; 3];
        let mut t = [[0i64; 3]; 3];
        for i in 0..3 {
            for k in 0..3 {
                if m[i][k] == 0 {
                    continue;
                }
                let c = m[i][k];
                for j in 0..3 {
                    v[i][j] += c as f64 * self.v[k][j];
                    t[i][j] += c * self.t[k][j];
                }
            }
        }
        self.v = v;
        self.t = t;
    }
}

fn sign(x: f64) -> i64 {
    if x > 0.0 { 1 } else { -1 }
}

/// Flips axis signs (keeping the determinant) so the three off-diagonal
/// Gram terms are all positive or all non-positive.
fn normalize_signs(b: &mut Basis, eps: f64) {
    let g = g6(&b.v);
    let (xi, eta, zeta) = (g[3], g[4], g[5]);
    let nonzero = [xi, eta, zeta].iter().all(|x| x.abs() > eps);
    let all_positive = nonzero && xi * eta * zeta > 0.0;
    for (i, j, k) in [(1i64, 1i64, 1i64), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)] {
        let (x, y, z) = ((j * k) as f64 * xi, (i * k) as f64 * eta, (i * j) as f64 * zeta);
        let ok = if all_positive { x > 0.0 && y > 0.0 && z > 0.0 } else { x <= eps && y <= eps && z <= eps };
        if ok {
            if (i, j, k) != (1, 1, 1) {
                b.apply([[i, 0, 0], [0, j, 0], [0, 0, k]]);
            }
            return;
        }
    }
}

/// Reduces a right-handed basis given as rows. Returns `None` for a
/// degenerate basis or if the iteration cap is hit.
pub fn niggli_reduce(rows: &Mat3, rel_tol: f64) -> Option<NiggliCell> {
    let vol = math::det3(rows);
    if !(vol.abs() > 1e-12) || !rows.iter().flatten().all(|x| x.is_finite()) {
        return None;
    }
    let eps = rel_tol * math::powi(math::cbrt(vol.abs()), 2);
    let mut b = Basis { v: *rows, t: [[1, 0, 0], [0, 1, 0], [0, 0, 1]] };
    for _ in 0..MAX_ITERATIONS {
        let [a, bb, c, xi, eta, zeta] = g6(&b.v);
        if a > bb + eps || ((a - bb).abs() <= eps && xi.abs() > eta.abs() + eps) {
            b.apply([[0, 1, 0], [1, 0, 0], [0, 0, -1]]);
            continue;
        }
        if bb > c + eps || ((bb - c).abs() <= eps && eta.abs() > zeta.abs() + eps) {
            b.apply([[-1, 0, 0], [0, 0, 1], [0, 1, 0]]);
            continue;
        }
        normalize_signs(&mut b, eps);
        let [a, bb, _c, xi, eta, zeta] = g6(&b.v);
        if xi.abs() > bb + eps || ((xi - bb).abs() <= eps && 2.0 * eta < zeta - eps) || ((xi + bb).abs() <= eps && zeta < -eps) {
            b.apply([[1, 0, 0], [0, 1, 0], [0, -sign(xi), 1]]);
            continue;
        }
        if eta.abs() > a + eps || ((eta - a).abs() <= eps && 2.0 * xi < zeta - eps) || ((eta + a).abs() <= eps && zeta < -eps) {
            b.apply([[1, 0, 0], [0, 1, 0], [-sign(eta), 0, 1]]);
            continue;
        }
        if zeta.abs() > a + eps || ((zeta - a).abs() <= eps && 2.0 * xi < eta - eps) || ((zeta + a).abs() <= eps && eta < -eps) {
            b.apply([[1, 0, 0], [-sign(zeta), 1, 0], [0, 0, 1]]);
            continue;
        }
        let s = xi + eta + zeta + a + bb;
        if s < -eps || (s.abs() <= eps && 2.0 * (a + eta) + zeta > eps) {
            b.apply([[1, 0, 0], [0, 1, 0], [1, 1, 1]]);
            continue;
        }
        return Some(NiggliCell { rows: b.v, transform: b.t });
    }
    None
}

impl NiggliCell {
    /// Fractional coordinates in the reduced basis: `f' = f · T⁻¹`.
    pub fn convert_frac(&self, f: &Vec3) -> Vec3 {
        let t = self.transform.map(|r| r.map(|x| x as f64));
        let inv = math::inv3(&t, 1e-9).expect("unimodular transform");
        math::vecmat3(f, &inv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::{lattice_to_matrix, matrix_to_lattice, Lattice6, LatticeMatrix};
    use crate::synth;
    use proptest::prelude::*;

    fn reduced_lattice(rows: &Mat3) -> Lattice6 {
        matrix_to_lattice(&LatticeMatrix(niggli_reduce(rows, 1e-5).unwrap().rows)).unwrap()
    }

    #[test]
    fn cubic_cell_is_already_reduced() {
        let m = lattice_to_matrix(&Lattice6::cubic(4.0)).unwrap().0;
        let r = niggli_reduce(&m, 1e-5).unwrap();
        let l = matrix_to_lattice(&LatticeMatrix(r.rows)).unwrap();
        for x in [l.a, l.b, l.c] {
            assert!((x - 4.0).abs() < 1e-12);
        }
        for x in [l.alpha, l.beta, l.gamma] {
            assert!((x - 90.0).abs() < 1e-9);
        }
    }

    #[test]
    fn skewed_supercell_basis_reduces_to_cube() {
        let m = lattice_to_matrix(&Lattice6::cubic(3.0)).unwrap().0;
        let skew = [[1.0, 0.0, 0.0], [2.0, 1.0, 0.0], [-1.0, 3.0, 1.0]];
        let l = reduced_lattice(&math::matmul3(&skew, &m));
        for x in [l.a, l.b, l.c] {
            assert!((x - 3.0).abs() < 1e-9, "{l:?}");
        }
    }

    #[test]
    fn fcc_primitive_is_all_sixty() {
        let p = synth::rock_salt_primitive(11, 17, 5.64);
        let l = reduced_lattice(&p.matrix().unwrap().0);
        for x in [l.alpha, l.beta, l.gamma] {
            assert!((x - 60.0).abs() < 1e-6, "{l:?}");
        }
    }

    proptest! {
        #[test]
        fn reduction_preserves_volume_and_lattice(seed in any::<u64>(), shears in prop::collection::vec((0usize..3, 0usize..3, -2i64..=2), 0..6)) {
            let mut rng = crate::rng::seeded(seed);
            let l = synth::random_lattice(&mut rng);
            let m = lattice_to_matrix(&l).unwrap().0;
            // product of elementary shears: integer, determinant 1
            let mut u = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
            for (i, j, k) in shears {
                if i != j {
                    let mut e = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
                    e[i][j] = k as f64;
                    u = math::matmul3(&e, &u);
                }
            }
            let start = math::matmul3(&u, &m);
            let r = niggli_reduce(&start, 1e-5).unwrap();
            let tm = r.transform.map(|row| row.map(|x| x as f64));
            prop_assert!((math::det3(&tm) - 1.0).abs() < 1e-9);
            let back = math::matmul3(&tm, &start);
            for i in 0..3 { for j in 0..3 { prop_assert!((back[i][j] - r.rows[i][j]).abs() < 1e-8); } }
            prop_assert!((math::det3(&r.rows) - math::det3(&m)).abs() < 1e-6 * math::det3(&m));
            // Equivalent bases reduce to the same parameters.
            let a = reduced_lattice(&m);
            let b = reduced_lattice(&start);
            for (x, y) in a.to_array().iter().zip(b.to_array()) {
                prop_assert!((x - y).abs() < 1e-5, "{a:?} vs {b:?}");
            }
        }
    }
}
