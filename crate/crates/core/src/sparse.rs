//! Compressed sparse row matrices.
//!
//! Generic over the entry type so the same structure holds the exact integer boundary matrices
//! and the floating point DEC operators.

use std::ops::{Add, Mul};

use nalgebra::{DMatrix, DVector};
use num_traits::Zero;

use crate::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T> CsrMatrix<T>
where
    T: Copy + Zero + Add<Output = T> + Mul<Output = T> + PartialEq,
{
    /// Assembles from (row, col, value) triplets. Duplicates are summed and exact zeros dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Self {
        let mut trips: Vec<(usize, usize, T)> = triplets.into_iter().collect();
        trips.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(trips.len());
        let mut values: Vec<T> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trips {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                let tail = values.last_mut().unwrap();
                *tail = *tail + v;
            } else {
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut m = Self { nrows, ncols, row_ptr, col_idx, values };
        m.prune();
        m
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: vec![], values: vec![] }
    }

    pub fn identity(n: usize, one: T) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, one)))
    }

    fn prune(&mut self) {
        let mut new_ptr = vec![0usize; self.nrows + 1];
        let mut cols = Vec::with_capacity(self.values.len());
        let mut vals = Vec::with_capacity(self.values.len());
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.values[k] != T::zero() {
                    cols.push(self.col_idx[k]);
                    vals.push(self.values[k]);
                }
            }
            new_ptr[r + 1] = cols.len();
        }
        self.row_ptr = new_ptr;
        self.col_idx = cols;
        self.values = vals;
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

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().map(|(r, c, v)| (c, r, v)))
    }

    pub fn map<U, F>(&self, f: F) -> CsrMatrix<U>
    where
        U: Copy + Zero + Add<Output = U> + Mul<Output = U> + PartialEq,
        F: Fn(T) -> U,
    {
        let mut out = CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        };
        out.prune();
        out
    }

    /// Sparse product `self * rhs`.
    pub fn matmul(&self, rhs: &CsrMatrix<T>) -> CsrMatrix<T> {
        assert_eq!(self.ncols, rhs.nrows, "inner dimensions differ");
        let mut acc = vec![T::zero(); rhs.ncols];
        let mut touched = vec![false; rhs.ncols];
        let mut pattern = Vec::new();
        let mut trips = Vec::new();
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&k, &a) in cols.iter().zip(vals) {
                let (rc, rv) = rhs.row(k);
                for (&c, &b) in rc.iter().zip(rv) {
                    if !touched[c] {
                        touched[c] = true;
                        pattern.push(c);
                    }
                    acc[c] = acc[c] + a * b;
                }
            }
            for &c in &pattern {
                trips.push((r, c, acc[c]));
                acc[c] = T::zero();
                touched[c] = false;
            }
            pattern.clear();
        }
        CsrMatrix::from_triplets(self.nrows, rhs.ncols, trips)
    }

    pub fn add(&self, rhs: &CsrMatrix<T>) -> CsrMatrix<T> {
        assert_eq!((self.nrows, self.ncols), (rhs.nrows, rhs.ncols));
        CsrMatrix::from_triplets(self.nrows, self.ncols, self.triplets().chain(rhs.triplets()))
    }

    /// Row `r` multiplied by `s[r]`.
    pub fn scale_rows(&self, s: &[T]) -> Self {
        assert_eq!(s.len(), self.nrows);
        let mut out = self.clone();
        for r in 0..self.nrows {
            for k in out.row_ptr[r]..out.row_ptr[r + 1] {
                out.values[k] = s[r] * out.values[k];
            }
        }
        out.prune();
        out
    }

    /// Column `c` multiplied by `s[c]`.
    pub fn scale_cols(&self, s: &[T]) -> Self {
        assert_eq!(s.len(), self.ncols);
        let mut out = self.clone();
        for k in 0..out.values.len() {
            out.values[k] = out.values[k] * s[out.col_idx[k]];
        }
        out.prune();
        out
    }

    /// Number of stored entries per column.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.ncols];
        for &c in &self.col_idx {
            counts[c] += 1;
        }
        counts
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == T::zero())
    }
}

impl<T: Real> CsrMatrix<T> {
    pub fn mul_vec(&self, x: &DVector<T>) -> DVector<T> {
        DVector::from_vec(self.mul_slice(x.as_slice()))
    }

    /// `selfᵀ x` without materialising the transpose.
    pub fn tr_mul_vec(&self, x: &DVector<T>) -> DVector<T> {
        DVector::from_vec(self.tr_mul_slice(x.as_slice()))
    }

    pub fn mul_slice(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols, "matvec length");
        (0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).fold(T::zero(), |s, (&c, &v)| s + v * x[c])
            })
            .collect()
    }

    pub fn tr_mul_slice(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows, "transposed matvec length");
        let mut y = vec![T::zero(); self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v * xr;
            }
        }
        y
    }

    /// Sparse times dense.
    pub fn mul_dense(&self, x: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(x.nrows(), self.ncols);
        let mut y = DMatrix::zeros(self.nrows, x.ncols());
        for j in 0..x.ncols() {
            for r in 0..self.nrows {
                let (cols, vals) = self.row(r);
                y[(r, j)] = cols.iter().zip(vals).fold(T::zero(), |s, (&c, &v)| s + v * x[(c, j)]);
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            d[(r, c)] = v;
        }
        d
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

impl CsrMatrix<i64> {
    pub fn to_real<T: Real>(&self) -> CsrMatrix<T> {
        self.map(|v| T::of(v as f64))
    }
}
