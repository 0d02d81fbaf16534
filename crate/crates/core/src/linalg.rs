//! Small linear-algebra helpers: a compressed-row sparse matrix for model
//! Jacobians and a banded Gaussian elimination used by the full-order Newton
//! solver.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates over the stored entries of row `i` as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols);
        DVector::from_fn(self.nrows, |i, _| self.row(i).map(|(j, v)| v * x[j]).sum())
    }

    /// `selfᵀ x`
    pub fn tr_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut out = DVector::zeros(self.ncols);
        for i in 0..self.nrows {
            let xi = x[i];
            if xi != 0.0 {
                for (j, v) in self.row(i) {
                    out[j] += v * xi;
                }
            }
        }
        out
    }

    pub fn mul_dense(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(m.nrows(), self.ncols);
        let mut out = DMatrix::zeros(self.nrows, m.ncols());
        for c in 0..m.ncols() {
            let col = m.column(c);
            for i in 0..self.nrows {
                out[(i, c)] = self.row(i).map(|(j, v)| v * col[j]).sum();
            }
        }
        out
    }

    /// `a·I + b·self` for a square matrix.
    pub fn scaled_plus_identity(&self, a: f64, b: f64) -> Self {
        assert_eq!(self.nrows, self.ncols);
        let mut triplets = Vec::with_capacity(self.nnz() + self.nrows);
        for i in 0..self.nrows {
            triplets.push((i, i, a));
            for (j, v) in self.row(i) {
                triplets.push((i, j, b * v));
            }
        }
        Self::from_triplets(self.nrows, self.ncols, &triplets)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                out[(i, j)] += v;
            }
        }
        out
    }

    /// Lower and upper bandwidths `(kl, ku)`.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                if v == 0.0 {
                    continue;
                }
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }

    /// Solves `self · x = rhs` by banded Gaussian elimination with partial
    /// pivoting.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("sparse solve", self.nrows, self.ncols)?;
        check_dim("sparse solve rhs", self.nrows, rhs.len())?;
        let (kl, ku) = self.bandwidths();
        let mut band = Banded::new(self.nrows, kl, ku);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                *band.at_mut(i, j) += v;
            }
        }
        band.solve(rhs.clone())
    }
}

/// Row-major band storage with room for pivoting fill-in.
struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl Banded {
    fn new(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let k = self.idx(i, j);
        &mut self.data[k]
    }

    fn solve(mut self, mut b: DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n;
        let reach = self.ku + self.kl;
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Err(Error::Singular("banded elimination"));
        }
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let last_col = (k + reach).min(n - 1);
            let mut piv = k;
            let mut best = self.at(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.at(i, k).abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best <= f64::EPSILON * scale * 1e-3 {
                return Err(Error::Singular("banded elimination"));
            }
            if piv != k {
                for j in k..=last_col {
                    let a = self.idx(k, j);
                    let c = self.idx(piv, j);
                    self.data.swap(a, c);
                }
                b.swap_rows(k, piv);
            }
            let pivot = self.at(k, k);
            for i in k + 1..=last_row {
                let factor = self.at(i, k) / pivot;
                if factor == 0.0 {
                    continue;
                }
                *self.at_mut(i, k) = 0.0;
                for j in k + 1..=last_col {
                    let akj = self.at(k, j);
                    *self.at_mut(i, j) -= factor * akj;
                }
                b[i] -= factor * b[k];
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + reach).min(n - 1);
            let mut acc = b[k];
            for j in k + 1..=last_col {
                acc -= self.at(k, j) * b[j];
            }
            b[k] = acc / self.at(k, k);
        }
        Ok(b)
    }
}

/// A Jacobian that can solve linear systems, used by Newton iterations.
pub trait LinearSolve {
    fn solve_linear(&self, rhs: &DVector<f64>) -> Result<DVector<f64>>;
}

impl LinearSolve for SparseMatrix {
    fn solve_linear(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.solve(rhs)
    }
}

impl LinearSolve for DMatrix<f64> {
    fn solve_linear(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("dense solve", self.nrows(), rhs.len())?;
        self.clone()
            .lu()
            .solve(rhs)
            .ok_or(Error::Singular("dense LU"))
    }
}

/// Infinity norm of a vector, zero for empty vectors.
pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Least-squares solution of `a · x ≈ b` via Householder QR.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("least squares", a.nrows(), b.len())?;
    if a.nrows() < a.ncols() {
        return Err(Error::InvalidArgument(alloc::format!(
            "underdetermined least-squares system {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * b;
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.diagonal().iter().any(|v| v.abs() <= 1e-14 * diag_max) || diag_max == 0.0 {
        return Err(Error::Singular("least squares"));
    }
    r.solve_upper_triangular(&qtb)
        .ok_or(Error::Singular("least squares"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let m = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn banded_solve_matches_dense_with_pivoting() {
        // Tridiagonal with a zero leading diagonal entry, which forces a row swap.
        let n = 7;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, if i == 0 { 0.0 } else { 2.0 + i as f64 }));
            if i > 0 {
                t.push((i, i - 1, -1.0 - 0.1 * i as f64));
            }
            if i + 1 < n {
                t.push((i, i + 1, 0.5));
            }
        }
        let m = SparseMatrix::from_triplets(n, n, &t);
        let rhs = DVector::from_fn(n, |i, _| (i as f64).sin() + 1.0);
        let x = m.solve(&rhs).unwrap();
        let dense = m.to_dense().lu().solve(&rhs).unwrap();
        assert!((x - dense).amax() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let m = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(
            m.solve(&DVector::from_vec(vec![1.0, 2.0])),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn transpose_product_matches_dense() {
        let m = SparseMatrix::from_triplets(3, 2, &[(0, 1, 2.0), (2, 0, -3.0), (1, 1, 4.0)]);
        let x = DVector::from_vec(vec![1.0, -1.0, 0.5]);
        assert_eq!(m.tr_mul_vec(&x), m.to_dense().transpose() * &x);
        let d = DMatrix::from_fn(2, 3, |i, j| (i + 2 * j) as f64);
        assert_eq!(m.mul_dense(&d), m.to_dense() * &d);
    }
}
