//! Compressed sparse row storage for graph matrices.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{invalid, Result};

/// Row-major sparse matrix. Column indices are strictly increasing within each
/// row and no explicit zeros are stored unless a caller inserts them.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CsrMatrix { rows, cols, indptr: vec![0; rows + 1], indices: Vec::new(), values: Vec::new() }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicate positions are
    /// summed; exact zeros are dropped.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows];
        for &(i, j, v) in triplets {
            if i >= rows || j >= cols {
                return Err(invalid(format!("triplet ({i}, {j}) out of range for a {rows}x{cols} matrix")));
            }
            if !v.is_finite() {
                return Err(invalid(format!("non-finite value at ({i}, {j})")));
            }
            per_row[i].push((j, v));
        }
        Ok(Self::from_rows(rows, cols, per_row))
    }

    /// Builds a matrix from per-row `(col, value)` lists (any order, duplicates summed).
    pub fn from_rows(rows: usize, cols: usize, mut per_row: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(per_row.len(), rows);
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in per_row.iter_mut() {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                debug_assert!(j < cols);
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            indptr.push(indices.len());
        }
        let mut m = CsrMatrix { rows, cols, indptr, indices, values };
        m.prune_zeros();
        m
    }

    pub fn from_dense(dense: ArrayView2<f64>) -> Self {
        let (rows, cols) = dense.dim();
        let per_row = dense
            .axis_iter(Axis(0))
            .map(|row| row.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(j, &v)| (j, v)).collect())
            .collect();
        Self::from_rows(rows, cols, per_row)
    }

    fn prune_zeros(&mut self) {
        if !self.values.contains(&0.0) {
            return;
        }
        let mut indptr = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        indptr.push(0);
        for i in 0..self.rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                if self.values[k] != 0.0 {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr.push(indices.len());
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    /// Iterates `(col, value)` over the stored entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// Iterates `(row, col, value)` over all stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn max_value(&self) -> Option<f64> {
        self.values.iter().copied().reduce(f64::max)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.cols];
        for (i, j, v) in self.triplets() {
            per_row[j].push((i, v));
        }
        CsrMatrix::from_rows(self.cols, self.rows, per_row)
    }

    /// Applies `f(row, col, value)` to every stored entry; entries mapped to zero are removed.
    pub fn map_entries(&self, f: impl Fn(usize, usize, f64) -> f64) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                out.values[k] = f(i, self.indices[k], self.values[k]);
            }
        }
        out.prune_zeros();
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (i, j, v) in self.triplets() {
            out[[i, j]] = v;
        }
        out
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && self.triplets().all(|(i, j, v)| self.get(j, i) == v)
    }

    /// `self * dense`, parallel over output rows.
    pub fn mul_dense(&self, dense: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(self.cols, dense.nrows(), "dimension mismatch in sparse * dense");
        let mut out = Array2::zeros((self.rows, dense.ncols()));
        out.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut out_row)| {
            for (j, v) in self.row(i) {
                out_row.scaled_add(v, &dense.row(j));
            }
        });
        out
    }

    /// `dense * self`, parallel over output rows.
    pub fn left_mul_dense(&self, dense: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(dense.ncols(), self.rows, "dimension mismatch in dense * sparse");
        let mut out = Array2::zeros((dense.nrows(), self.cols));
        out.axis_iter_mut(Axis(0)).into_par_iter().zip(dense.axis_iter(Axis(0)).into_par_iter()).for_each(
            |(mut out_row, in_row)| {
                for (k, &a) in in_row.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for (j, v) in self.row(k) {
                        out_row[j] += a * v;
                    }
                }
            },
        );
        out
    }
}
