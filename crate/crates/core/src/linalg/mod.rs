//! Dense 64-bit linear algebra and Gaussian sampling.
//!
//! Only what the invertible trunk needs: square matrix products, a
//! Frobenius orthonormality residual, power-iteration spectral norms, and an
//! LU inverse guarded by a 1-norm condition estimate.

mod rng;

pub use rng::RngStream;

use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Inverses whose 1-norm condition estimate reaches this value are rejected.
pub const CONDITION_LIMIT: f64 = 1e8;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix entries must be finite".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Matrix::from_vec(r, c, rows.concat())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| dot(row, x))
            .collect()
    }

    /// `selfᵀ · x`
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, &xi) in self.data.chunks_exact(self.cols).zip(x) {
            for (o, &w) in out.iter_mut().zip(row) {
                *o += w * xi;
            }
        }
        out
    }

    /// `selfᵀ · self`
    pub fn gram(&self) -> Matrix {
        let n = self.cols;
        let mut g = Matrix::zeros(n, n);
        for row in self.data.chunks_exact(n) {
            for i in 0..n {
                let ri = row[i];
                if ri == 0.0 {
                    continue;
                }
                let g_row = &mut g.data[i * n..(i + 1) * n];
                for (gj, &rj) in g_row.iter_mut().zip(row) {
                    *gj += ri * rj;
                }
            }
        }
        g
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape("subtraction of differently shaped matrices".into()));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn norm_1(&self) -> f64 {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self[(r, c)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `d` independent standard normal draws.
pub fn gaussian_vector(d: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::InvalidDimension("gaussian vector of dimension 0".into()));
    }
    let mut out = Vec::with_capacity(d + 1);
    while out.len() < d {
        let (a, b) = rng.next_normal_pair();
        out.push(a);
        out.push(b);
    }
    out.truncate(d);
    Ok(out)
}

/// `‖WᵀW − I‖_F` for any shape; the identity is sized to the column count.
pub(crate) fn gram_residual(w: &Matrix) -> f64 {
    let mut g = w.gram();
    for i in 0..g.rows {
        g[(i, i)] -= 1.0;
    }
    g.frobenius_norm()
}

/// Frobenius distance of `WᵀW` from the identity.
pub fn orthonormality_residual(w: &Matrix) -> Result<f64> {
    if !w.is_square() {
        return Err(Error::Shape(format!(
            "orthonormality residual needs a square matrix, got {}x{}",
            w.rows, w.cols
        )));
    }
    Ok(gram_residual(w))
}

/// Largest singular value by power iteration on `WᵀW`.
///
/// Stops once the relative change of the estimate drops below `tol`. The
/// zero matrix yields 0.
pub fn spectral_norm(w: &Matrix, max_iters: usize, tol: f64) -> Result<f64> {
    if !w.is_square() {
        return Err(Error::Shape(format!(
            "spectral norm expects a square matrix, got {}x{}",
            w.rows, w.cols
        )));
    }
    if max_iters == 0 || !(tol > 0.0) {
        return Err(Error::InvalidArgument(
            "spectral norm needs max_iters >= 1 and tol > 0".into(),
        ));
    }
    let n = w.cols;
    if n == 0 || w.data.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    // Fixed start with no special alignment to any coordinate axis.
    let mut start = RngStream::new(0x5EED_5EED);
    let mut v: Vec<f64> = (0..n).map(|_| start.next_uniform() + 0.5).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut sigma = 0.0;
    for _ in 0..max_iters {
        let wv = w.mul_vec(&v);
        let next_sigma = norm(&wv);
        let mut u = w.tr_mul_vec(&wv);
        let nu = norm(&u);
        if nu == 0.0 {
            return Ok(next_sigma);
        }
        u.iter_mut().for_each(|x| *x /= nu);
        v = u;
        let converged = (next_sigma - sigma).abs() <= tol * next_sigma;
        sigma = next_sigma;
        if converged {
            break;
        }
    }
    // One more Rayleigh evaluation with the final vector.
    Ok(norm(&w.mul_vec(&v)).max(sigma))
}

/// Exact inverse by LU with partial pivoting.
///
/// Fails with [`Error::Singular`] when a pivot vanishes or when the 1-norm
/// condition number reaches [`CONDITION_LIMIT`].
pub fn invert_matrix(w: &Matrix) -> Result<Matrix> {
    if !w.is_square() {
        return Err(Error::Shape(format!(
            "cannot invert a {}x{} matrix",
            w.rows, w.cols
        )));
    }
    let n = w.rows;
    let mut lu = w.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let scale = w.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::Singular {
            condition: f64::INFINITY,
            layer: None,
        });
    }

    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|r| (r, lu[(r, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot <= scale * f64::EPSILON * n as f64 {
            return Err(Error::Singular {
                condition: f64::INFINITY,
                layer: None,
            });
        }
        if p != k {
            for c in 0..n {
                lu.data.swap(k * n + c, p * n + c);
            }
            perm.swap(k, p);
        }
        let diag = lu[(k, k)];
        for r in k + 1..n {
            let factor = lu[(r, k)] / diag;
            lu[(r, k)] = factor;
            if factor != 0.0 {
                for c in k + 1..n {
                    lu[(r, c)] -= factor * lu[(k, c)];
                }
            }
        }
    }

    let mut inv = Matrix::zeros(n, n);
    let mut col = vec![0.0; n];
    for j in 0..n {
        // Solve L U x = P e_j.
        for (i, slot) in col.iter_mut().enumerate() {
            *slot = if perm[i] == j { 1.0 } else { 0.0 };
        }
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= lu[(i, k)] * col[k];
            }
            col[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in i + 1..n {
                s -= lu[(i, k)] * col[k];
            }
            col[i] = s / lu[(i, i)];
        }
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }

    let condition = w.norm_1() * inv.norm_1();
    if !condition.is_finite() || condition >= CONDITION_LIMIT {
        return Err(Error::Singular {
            condition,
            layer: None,
        });
    }
    Ok(inv)
}

/// Haar-distributed orthonormal matrix from the QR factorization of a
/// Gaussian matrix (modified Gram–Schmidt, sign-corrected).
pub fn random_orthonormal(d: usize, rng: &mut RngStream) -> Result<Matrix> {
    if d == 0 {
        return Err(Error::InvalidDimension("orthonormal matrix of size 0".into()));
    }
    let g = gaussian_vector(d * d, rng)?;
    // Columns of the Gaussian matrix, orthonormalized in place.
    let mut cols: Vec<Vec<f64>> = (0..d).map(|c| (0..d).map(|r| g[r * d + c]).collect()).collect();
    for j in 0..d {
        // Two passes keep the basis orthonormal to machine precision.
        for _ in 0..2 {
            for i in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let proj = dot(&done[i], &rest[0]);
                for (x, q) in rest[0].iter_mut().zip(&done[i]) {
                    *x -= proj * q;
                }
            }
        }
        let n = norm(&cols[j]);
        if n < 1e-12 {
            return Err(Error::Singular {
                condition: f64::INFINITY,
                layer: None,
            });
        }
        cols[j].iter_mut().for_each(|x| *x /= n);
    }
    let mut q = Matrix::zeros(d, d);
    for (c, col) in cols.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            q[(r, c)] = v;
        }
    }
    Ok(q)
}
