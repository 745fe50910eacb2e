//! Dense row-major matrices and the handful of kernels the crate is hot on:
//! matrix products (plain / transposed variants), matrix-vector products and
//! a Cholesky factorization for symmetric positive definite solves.
//!
//! Determinism contract: every output element is accumulated sequentially in
//! a fixed index order by exactly one thread, so results are bitwise
//! reproducible for any thread count.

use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Work threshold (multiply-adds) below which products stay single-threaded.
const PAR_FLOP_THRESHOLD: usize = 1 << 18;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix shape/data mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Extract the submatrix with the given row and column indices.
    pub fn submatrix(&self, row_idx: &[usize], col_idx: &[usize]) -> Matrix {
        let mut s = Matrix::zeros(row_idx.len(), col_idx.len());
        for (si, &i) in row_idx.iter().enumerate() {
            let src = self.row(i);
            let dst = s.row_mut(si);
            for (sj, &j) in col_idx.iter().enumerate() {
                dst[sj] = src[j];
            }
        }
        s
    }

    pub fn scale(&mut self, s: f64) {
        for x in &mut self.data {
            *x *= s;
        }
    }

    /// self += s * other
    pub fn add_scaled(&mut self, other: &Matrix, s: f64) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * *b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Largest relative asymmetry |a_ij - a_ji| / max_abs.
    pub fn asymmetry(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs() / scale);
            }
        }
        worst
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    /// y = A x, writing into a caller-provided buffer.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(self.cols, x.len());
        assert_eq!(self.rows, y.len());
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(self.row(i), x);
        }
    }

    /// y += s * (A x)
    pub fn matvec_acc(&self, x: &[f64], s: f64, y: &mut [f64]) {
        assert_eq!(self.cols, x.len());
        assert_eq!(self.rows, y.len());
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += s * dot(self.row(i), x);
        }
    }

    /// y = A^T x
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "matvec_t dimension mismatch");
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = self.row(i);
            let xi = x[i];
            for (yj, &aij) in y.iter_mut().zip(row) {
                *yj += xi * aij;
            }
        }
        y
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Fixed-order dot product with four lanes; identical result on every run.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let i = 4 * c;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// C = A B
///
/// Rows are processed in blocks of four so that each B row streams once per
/// four outputs; every C element still accumulates sequentially over k, so
/// the result is identical for any thread count.
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.rows, "matmul inner dimension mismatch");
    let mut c = Matrix::zeros(a.rows, b.cols);
    if a.rows == 0 || a.cols == 0 || b.cols == 0 {
        return c;
    }
    gemm_into(&mut c, a, b);
    c
}

/// Shared out-of-line kernel so every product call site runs the same
/// optimized code.
#[inline(never)]
fn gemm_into(c: &mut Matrix, a: &Matrix, b: &Matrix) {
    let (bc, ac) = (b.cols, a.cols);
    let kernel = |(cblock, ablock): (&mut [f64], &[f64])| {
        for (ct, at) in cblock.chunks_mut(8 * bc).zip(ablock.chunks(8 * ac)) {
            if at.len() == 8 * ac {
                let (c0, rest) = ct.split_at_mut(bc);
                let (c1, rest) = rest.split_at_mut(bc);
                let (c2, rest) = rest.split_at_mut(bc);
                let (c3, rest) = rest.split_at_mut(bc);
                let (c4, rest) = rest.split_at_mut(bc);
                let (c5, rest) = rest.split_at_mut(bc);
                let (c6, c7) = rest.split_at_mut(bc);
                for k in 0..ac {
                    let brow = &b.data[k * bc..(k + 1) * bc];
                    let x0 = at[k];
                    let x1 = at[ac + k];
                    let x2 = at[2 * ac + k];
                    let x3 = at[3 * ac + k];
                    let x4 = at[4 * ac + k];
                    let x5 = at[5 * ac + k];
                    let x6 = at[6 * ac + k];
                    let x7 = at[7 * ac + k];
                    for j in 0..bc {
                        let bj = brow[j];
                        c0[j] += x0 * bj;
                        c1[j] += x1 * bj;
                        c2[j] += x2 * bj;
                        c3[j] += x3 * bj;
                        c4[j] += x4 * bj;
                        c5[j] += x5 * bj;
                        c6[j] += x6 * bj;
                        c7[j] += x7 * bj;
                    }
                }
            } else {
                for (crow, arow) in ct.chunks_mut(bc).zip(at.chunks(ac)) {
                    for k in 0..ac {
                        let aik = arow[k];
                        if aik == 0.0 {
                            continue;
                        }
                        let brow = &b.data[k * bc..(k + 1) * bc];
                        for (cj, bj) in crow.iter_mut().zip(brow) {
                            *cj += aik * bj;
                        }
                    }
                }
            }
        }
    };
    // blocks of 32 rows balance the pool without splitting 8-row tiles
    if a.rows * ac * bc >= PAR_FLOP_THRESHOLD {
        c.data
            .par_chunks_mut(32 * bc)
            .zip(a.data.par_chunks(32 * ac))
            .for_each(kernel);
    } else {
        c.data
            .chunks_mut(32 * bc)
            .zip(a.data.chunks(32 * ac))
            .for_each(kernel);
    }
}

/// C = A^T B, with A of shape (r, m) and B of shape (r, n) -> C (m, n).
pub fn matmul_at_b(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.rows, b.rows, "matmul_at_b row mismatch");
    let mut c = Matrix::zeros(a.cols, b.cols);
    if a.rows == 0 || a.cols == 0 || b.cols == 0 {
        return c;
    }
    let (r, m, n) = (a.rows, a.cols, b.cols);
    let kernel = |(block_idx, cblock): (usize, &mut [f64])| {
        let i0 = block_idx * 4;
        if cblock.len() == 4 * n {
            let (c0, rest) = cblock.split_at_mut(n);
            let (c1, rest) = rest.split_at_mut(n);
            let (c2, c3) = rest.split_at_mut(n);
            for k in 0..r {
                let arow = &a.data[k * m..(k + 1) * m];
                let (x0, x1, x2, x3) = (arow[i0], arow[i0 + 1], arow[i0 + 2], arow[i0 + 3]);
                if x0 == 0.0 && x1 == 0.0 && x2 == 0.0 && x3 == 0.0 {
                    continue;
                }
                let brow = &b.data[k * n..(k + 1) * n];
                for j in 0..n {
                    let bj = brow[j];
                    c0[j] += x0 * bj;
                    c1[j] += x1 * bj;
                    c2[j] += x2 * bj;
                    c3[j] += x3 * bj;
                }
            }
        } else {
            for (di, crow) in cblock.chunks_mut(n).enumerate() {
                let i = i0 + di;
                for k in 0..r {
                    let aki = a.data[k * m + i];
                    if aki == 0.0 {
                        continue;
                    }
                    let brow = &b.data[k * n..(k + 1) * n];
                    for (cj, bj) in crow.iter_mut().zip(brow) {
                        *cj += aki * bj;
                    }
                }
            }
        }
    };
    if r * m * n >= PAR_FLOP_THRESHOLD {
        c.data.par_chunks_mut(4 * n).enumerate().for_each(kernel);
    } else {
        c.data.chunks_mut(4 * n).enumerate().for_each(kernel);
    }
    c
}

/// C = A B^T, with A of shape (r, m) and B of shape (n, m) -> C (r, n).
/// The transpose is materialized so the product runs on the blocked
/// broadcast kernel instead of strided dot products.
pub fn matmul_a_bt(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.cols, "matmul_a_bt column mismatch");
    if a.rows == 0 || a.cols == 0 || b.rows == 0 {
        return Matrix::zeros(a.rows, b.rows);
    }
    let bt = b.transpose();
    matmul(a, &bt)
}

/// Cholesky factorization A = L L^T of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(a: &Matrix) -> Result<Cholesky> {
        if a.rows != a.cols {
            return Err(Error::numerical("cholesky: matrix not square"));
        }
        let n = a.rows;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::numerical(format!(
                    "cholesky: matrix not positive definite (pivot {j} = {d:e})"
                )));
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let lj = l.row(j);
                let li = l.row(i);
                let s = a[(i, j)] - dot(&li[..j], &lj[..j]);
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.l.rows;
        assert_eq!(x.len(), n, "cholesky solve dimension mismatch");
        // forward: L y = b
        for i in 0..n {
            let li = self.l.row(i);
            let s = dot(&li[..i], &x[..i]);
            x[i] = (x[i] - s) / li[i];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
    }

    /// Solve A X = B column-wise for a matrix right-hand side.
    pub fn solve_matrix(&self, b: &Matrix) -> Matrix {
        assert_eq!(b.rows, self.l.rows);
        let bt = b.transpose();
        let mut xt = Matrix::zeros(b.cols, b.rows);
        for j in 0..b.cols {
            let mut col = bt.row(j).to_vec();
            self.solve_in_place(&mut col);
            xt.row_mut(j).copy_from_slice(&col);
        }
        xt.transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_spd(n: usize, rng: &mut Rng) -> Matrix {
        let a = Matrix::from_fn(n, n, |_, _| rng.range(-1.0, 1.0));
        let mut spd = matmul_at_b(&a, &a);
        for i in 0..n {
            spd[(i, i)] += n as f64;
        }
        spd
    }

    #[test]
    fn matmul_small_hand_case() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = Matrix::from_rows(&[&[5.0, 6.0], &[7.0, 8.0]]);
        let c = matmul(&a, &b);
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transposed_products_match_explicit_transpose() {
        let mut rng = Rng::new(11);
        let a = Matrix::from_fn(13, 7, |_, _| rng.range(-1.0, 1.0));
        let b = Matrix::from_fn(13, 5, |_, _| rng.range(-1.0, 1.0));
        let c1 = matmul_at_b(&a, &b);
        let c2 = matmul(&a.transpose(), &b);
        for (x, y) in c1.data().iter().zip(c2.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        let d = Matrix::from_fn(5, 7, |_, _| rng.range(-1.0, 1.0));
        let e1 = matmul_a_bt(&a, &d);
        let e2 = matmul(&a, &d.transpose());
        for (x, y) in e1.data().iter().zip(e2.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_solves_random_spd_systems() {
        let mut rng = Rng::new(5);
        for n in [1, 2, 3, 10, 30] {
            let a = random_spd(n, &mut rng);
            let x_true: Vec<f64> = (0..n).map(|_| rng.range(-2.0, 2.0)).collect();
            let b = a.matvec(&x_true);
            let chol = Cholesky::factor(&a).unwrap();
            let x = chol.solve(&b);
            let err = norm2(&sub(&x, &x_true)) / norm2(&x_true).max(1e-300);
            assert!(err < 1e-10, "n={n} err={err:e}");
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(Cholesky::factor(&a).is_err());
    }

    #[test]
    fn matvec_transpose_consistent() {
        let mut rng = Rng::new(9);
        let a = Matrix::from_fn(6, 4, |_, _| rng.range(-1.0, 1.0));
        let x: Vec<f64> = (0..6).map(|_| rng.range(-1.0, 1.0)).collect();
        let y1 = a.matvec_t(&x);
        let y2 = a.transpose().matvec(&x);
        for (p, q) in y1.iter().zip(&y2) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    #[test]
    fn solve_matrix_matches_vector_solves() {
        let mut rng = Rng::new(17);
        let a = random_spd(8, &mut rng);
        let b = Matrix::from_fn(8, 3, |_, _| rng.range(-1.0, 1.0));
        let chol = Cholesky::factor(&a).unwrap();
        let x = chol.solve_matrix(&b);
        for j in 0..3 {
            let col: Vec<f64> = (0..8).map(|i| b[(i, j)]).collect();
            let xj = chol.solve(&col);
            for i in 0..8 {
                assert!((x[(i, j)] - xj[i]).abs() < 1e-12);
            }
        }
    }
}
