//! Small dense linear algebra and `libm`-backed scalar functions.

use alloc::vec;
use alloc::vec::Vec;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}
#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}
#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}
#[inline]
pub fn acos(x: f64) -> f64 {
    libm::acos(x)
}
#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}
#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}
#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}
#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}
#[inline]
pub fn cbrt(x: f64) -> f64 {
    libm::cbrt(x)
}
#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}
#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

pub fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm3(a: &Vec3) -> f64 {
    sqrt(dot3(a, a))
}

pub fn cross3(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn sub3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale3(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn det3(m: &Mat3) -> f64 {
    dot3(&m[0], &cross3(&m[1], &m[2]))
}

/// Inverse by adjugate; `None` when |det| is below `tol`.
pub fn inv3(m: &Mat3, tol: f64) -> Option<Mat3> {
    let det = det3(m);
    if !(det.abs() > tol) {
        return None;
    }
    let c0 = cross3(&m[1], &m[2]);
    let c1 = cross3(&m[2], &m[0]);
    let c2 = cross3(&m[0], &m[1]);
    // columns of the inverse are the cross products
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        inv[i][0] = c0[i] / det;
        inv[i][1] = c1[i] / det;
        inv[i][2] = c2[i] / det;
    }
    Some(inv)
}

pub fn matmul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn transpose3(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

/// Row vector times matrix: `v · m`.
pub fn vecmat3(v: &Vec3, m: &Mat3) -> Vec3 {
    [
        v[0] * m[0][0] + v[1] * m[1][0] + v[2] * m[2][0],
        v[0] * m[0][1] + v[1] * m[1][1] + v[2] * m[2][1],
        v[0] * m[0][2] + v[1] * m[1][2] + v[2] * m[2][2],
    ]
}

pub fn gram3(m: &Mat3) -> Mat3 {
    matmul3(m, &transpose3(m))
}

/// Row-major dense matrix used by the network.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `out += x · w` for a row vector `x` (len = w.rows) and weight `w`.
#[inline]
pub fn axpy_row(x: &[f64], w: &Matrix, out: &mut [f64]) {
    debug_assert_eq!(x.len(), w.rows);
    debug_assert_eq!(out.len(), w.cols);
    for (k, &xk) in x.iter().enumerate() {
        if xk == 0.0 {
            continue;
        }
        let wr = w.row(k);
        for (o, &wv) in out.iter_mut().zip(wr) {
            *o += xk * wv;
        }
    }
}

/// `out += dy · wᵀ`, i.e. the input-gradient of `axpy_row`.
#[inline]
pub fn axpy_row_t(dy: &[f64], w: &Matrix, out: &mut [f64]) {
    debug_assert_eq!(dy.len(), w.cols);
    debug_assert_eq!(out.len(), w.rows);
    for (k, o) in out.iter_mut().enumerate() {
        let wr = w.row(k);
        let mut acc = 0.0;
        for (&d, &wv) in dy.iter().zip(wr) {
            acc += d * wv;
        }
        *o += acc;
    }
}

/// `gw += xᵀ · dy` (outer product accumulation), the weight-gradient of `axpy_row`.
#[inline]
pub fn outer_acc(x: &[f64], dy: &[f64], gw: &mut Matrix) {
    debug_assert_eq!(x.len(), gw.rows);
    debug_assert_eq!(dy.len(), gw.cols);
    for (k, &xk) in x.iter().enumerate() {
        if xk == 0.0 {
            continue;
        }
        let gr = gw.row_mut(k);
        for (g, &d) in gr.iter_mut().zip(dy) {
            *g += xk * d;
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + exp(-x))
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// d/dx of x·σ(x).
#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}
