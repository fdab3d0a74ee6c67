//! Small dense linear-algebra kernels used throughout the crate.
//!
//! Everything here is deliberately plain: a 2-vector, a row-major dense
//! matrix over a flat `Vec<f64>`, a Cholesky factorization, and a sparse
//! row type for constraint assembly. Problem sizes stay small (matrices up
//! to a few hundred rows), so simple loops beat any heavyweight dependency.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// A 2D vector. Serializes as a `[x, y]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, rhs: Vec2) -> f64 {
        self.x * rhs.x + self.y * rhs.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }

    /// Component access by index (0 = x, 1 = y).
    pub fn coord(self, k: usize) -> f64 {
        match k {
            0 => self.x,
            1 => self.y,
            _ => panic!("Vec2 coordinate index out of range: {k}"),
        }
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        self.scale(s)
    }
}

/// Dense row-major matrix backed by a flat `Vec<f64>`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x.iter()) {
                acc += a * b;
            }
            y[i] = acc;
        }
    }

    /// y = A^T x.
    pub fn mul_transpose_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.rows);
        assert_eq!(y.len(), self.cols);
        y.fill(0.0);
        for i in 0..self.rows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            let row = self.row(i);
            for (yj, a) in y.iter_mut().zip(row.iter()) {
                *yj += a * xi;
            }
        }
    }

    /// C = A^T diag(w) A, accumulated into an existing square matrix.
    pub fn accumulate_weighted_gram(&self, w: &[f64], out: &mut Mat) {
        assert_eq!(w.len(), self.rows);
        assert_eq!(out.rows, self.cols);
        assert_eq!(out.cols, self.cols);
        for i in 0..self.rows {
            let wi = w[i];
            if wi == 0.0 {
                continue;
            }
            let row = self.row(i);
            for a in 0..self.cols {
                let ra = row[a] * wi;
                if ra == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[a * out.cols..(a + 1) * out.cols];
                for (o, rb) in out_row.iter_mut().zip(row.iter()) {
                    *o += ra * rb;
                }
            }
        }
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`; zero for non-square input.
    pub fn max_asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Cholesky factorization L L^T of a symmetric positive-definite matrix,
/// stored as the lower triangle in a flat buffer.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factor `a`, which must be square and positive definite.
    /// Returns `None` when a non-positive pivot is encountered.
    pub fn factor(a: &Mat) -> Option<Cholesky> {
        assert_eq!(a.rows, a.cols, "Cholesky needs a square matrix");
        let n = a.rows;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut diag = a.get(j, j);
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if diag <= 0.0 {
                return None;
            }
            let diag = diag.sqrt();
            l[j * n + j] = diag;
            for i in (j + 1)..n {
                let mut v = a.get(i, j);
                for k in 0..j {
                    v -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = v / diag;
            }
        }
        Some(Cholesky { n, l })
    }

    /// Solve A x = b in place: forward then backward substitution.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for i in 0..n {
            let mut v = b[i];
            for k in 0..i {
                v -= self.l[i * n + k] * b[k];
            }
            b[i] = v / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            for k in (i + 1)..n {
                v -= self.l[k * n + i] * b[k];
            }
            b[i] = v / self.l[i * n + i];
        }
    }
}

/// Dense LU factorization with partial pivoting, for square indefinite
/// systems (saddle-point matrices) where Cholesky does not apply.
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl Lu {
    /// Factor `a`. Returns `None` when a pivot falls below `1e-12` times
    /// the largest entry (numerically singular).
    pub fn factor(a: &Mat) -> Option<Lu> {
        assert_eq!(a.rows, a.cols, "LU needs a square matrix");
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut piv = Vec::with_capacity(n);
        let scale = a.max_abs().max(1e-300);
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for i in (k + 1)..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < 1e-12 * scale {
                return None;
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
            }
            piv.push(p);
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for j in (k + 1)..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        Some(Lu { n, lu, piv })
    }

    /// Solve A x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            b.swap(k, self.piv[k]);
            for i in (k + 1)..n {
                b[i] -= self.lu[i * n + k] * b[k];
            }
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            for k in (i + 1)..n {
                v -= self.lu[i * n + k] * b[k];
            }
            b[i] = v / self.lu[i * n + i];
        }
    }
}

/// A sparse affine row: a list of `(column, coefficient)` entries.
/// Columns must be unique; order is whatever the builder produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRow {
    pub entries: Vec<(usize, f64)>,
}

impl SparseRow {
    pub fn new() -> Self {
        SparseRow { entries: Vec::new() }
    }

    pub fn from_entries(entries: Vec<(usize, f64)>) -> Self {
        SparseRow { entries }
    }

    pub fn push(&mut self, col: usize, coeff: f64) {
        if coeff != 0.0 {
            self.entries.push((col, coeff));
        }
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(c, v)| v * x[c]).sum()
    }

    /// Combine `self + scale * other`, merging duplicate columns.
    pub fn axpy(&self, scale: f64, other: &SparseRow) -> SparseRow {
        let mut out = self.clone();
        for &(c, v) in &other.entries {
            match out.entries.iter_mut().find(|(oc, _)| *oc == c) {
                Some((_, ov)) => *ov += scale * v,
                None => out.entries.push((c, scale * v)),
            }
        }
        out.entries.retain(|&(_, v)| v != 0.0);
        out
    }

    pub fn scaled(&self, s: f64) -> SparseRow {
        SparseRow {
            entries: self.entries.iter().map(|&(c, v)| (c, v * s)).collect(),
        }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, &(_, v)| m.max(v.abs()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec2_basic_ops() {
        let a = Vec2::new(3.0, 4.0);
        let b = Vec2::new(-1.0, 2.0);
        assert_eq!(a.norm(), 5.0);
        assert_eq!(a.dot(b), 5.0);
        assert_eq!(a + b, Vec2::new(2.0, 6.0));
        assert_eq!(a - b, Vec2::new(4.0, 2.0));
        assert_eq!(a.scale(2.0), Vec2::new(6.0, 8.0));
        assert_eq!(a.coord(0), 3.0);
        assert_eq!(a.coord(1), 4.0);
    }

    #[test]
    fn vec2_serializes_as_pair() {
        let v = Vec2::new(1.5, -2.0);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"{"x":1.5,"y":-2.0}"#);
        let back: Vec2 = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn mat_mul_vec_and_transpose() {
        let a = Mat::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let mut y = vec![0.0; 2];
        a.mul_vec(&[1.0, 0.0, -1.0], &mut y);
        assert_eq!(y, vec![-2.0, -2.0]);
        let mut x = vec![0.0; 3];
        a.mul_transpose_vec(&[1.0, 1.0], &mut x);
        assert_eq!(x, vec![5.0, 7.0, 9.0]);
        let t = a.transpose();
        assert_eq!(t.get(2, 1), 6.0);
    }

    #[test]
    fn weighted_gram_matches_explicit_product() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0], vec![0.0, 4.0]]);
        let w = [2.0, 1.0, 0.5];
        let mut g = Mat::zeros(2, 2);
        a.accumulate_weighted_gram(&w, &mut g);
        // Explicit A^T diag(w) A.
        let mut expect = Mat::zeros(2, 2);
        for i in 0..3 {
            for p in 0..2 {
                for q in 0..2 {
                    expect.add_to(p, q, a.get(i, p) * w[i] * a.get(i, q));
                }
            }
        }
        for (x, y) in g.data.iter().zip(expect.data.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_solves_spd_system() {
        // A = M^T M + I is SPD for any M.
        let m = Mat::from_rows(&[
            vec![1.0, 2.0, 0.5],
            vec![-1.0, 0.3, 2.0],
            vec![0.7, -0.2, 1.1],
        ]);
        let mut a = Mat::identity(3);
        m.accumulate_weighted_gram(&[1.0, 1.0, 1.0], &mut a);
        let chol = Cholesky::factor(&a).expect("SPD");
        let x_true = [1.0, -2.0, 3.0];
        let mut b = vec![0.0; 3];
        a.mul_vec(&x_true, &mut b);
        chol.solve_in_place(&mut b);
        for (xi, ti) in b.iter().zip(x_true.iter()) {
            assert!((xi - ti).abs() < 1e-10, "{xi} vs {ti}");
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(Cholesky::factor(&a).is_none());
    }

    #[test]
    fn lu_solves_indefinite_saddle_system() {
        let a = Mat::from_rows(&[
            vec![2.0, 1.0, 1.0],
            vec![1.0, 0.0, -1.0],
            vec![1.0, -1.0, 0.0],
        ]);
        assert!(Cholesky::factor(&a).is_none());
        let x_true = [1.0, -2.0, 3.0];
        let mut b = vec![0.0; 3];
        a.mul_vec(&x_true, &mut b);
        let lu = Lu::factor(&a).expect("nonsingular");
        lu.solve_in_place(&mut b);
        for (xi, ti) in b.iter().zip(x_true.iter()) {
            assert!((xi - ti).abs() < 1e-10, "{xi} vs {ti}");
        }
    }

    #[test]
    fn lu_rejects_singular() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(Lu::factor(&a).is_none());
    }

    #[test]
    fn sparse_row_dot_and_axpy() {
        let r = SparseRow::from_entries(vec![(0, 2.0), (3, -1.0)]);
        assert_eq!(r.dot(&[1.0, 9.0, 9.0, 4.0]), -2.0);
        let s = SparseRow::from_entries(vec![(3, 1.0), (1, 5.0)]);
        let c = r.axpy(2.0, &s);
        assert_eq!(c.dot(&[1.0, 1.0, 0.0, 1.0]), 2.0 + 10.0 + (-1.0 + 2.0));
    }
}
