//! Affinity matrices, k-NN weight graphs and their symmetric normalization.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::model::{Kernel, Sigma, SYMMETRY_TOL};
use crate::sparse::CsrMatrix;

/// Symmetric, nonnegative, finite kernel matrix over one view.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    values: Array2<f64>,
}

impl AffinityMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != cols {
            return Err(invalid(format!("affinity not square ({rows}x{cols})")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("affinity contains non-finite values"));
        }
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, &v)| v < 0.0) {
            return Err(invalid(format!("affinity negative at ({i}, {j}): {v}")));
        }
        for i in 0..rows {
            for j in (i + 1)..rows {
                if (values[[i, j]] - values[[j, i]]).abs() > SYMMETRY_TOL {
                    return Err(invalid(format!("affinity asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(AffinityMatrix { values })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Kernel affinities from a feature matrix (items × dims).
///
/// `k` is only consulted by the automatic Gaussian bandwidth, which is the mean
/// distance from each point to its k-th nearest neighbor (1.0 if that mean is 0).
pub fn compute_affinity(features: ArrayView2<f64>, kernel: Kernel, k: usize) -> Result<AffinityMatrix> {
    let n = features.nrows();
    if n == 0 || features.ncols() == 0 {
        return Err(invalid("features are empty"));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(invalid("features contain non-finite values"));
    }
    let values = match kernel {
        Kernel::Precomputed => return Err(invalid("precomputed kernel cannot be evaluated from features")),
        Kernel::Cosine => {
            let norms: Vec<f64> = features.axis_iter(Axis(0)).map(|r| r.dot(&r).sqrt()).collect();
            if let Some(row) = norms.iter().position(|&v| v == 0.0) {
                return Err(invalid(format!("cosine kernel: row {row} has zero norm")));
            }
            let gram = features.dot(&features.t());
            let mut a = Array2::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    a[[i, j]] = if i == j { 1.0 } else { (gram[[i, j]] / (norms[i] * norms[j])).max(0.0) };
                }
            }
            symmetrize_dense(&mut a);
            a
        }
        Kernel::Gaussian(sigma) => {
            let d2 = squared_distances(features);
            let sigma = match sigma {
                Sigma::Fixed(s) if s > 0.0 => s,
                Sigma::Fixed(s) => return Err(invalid(format!("gaussian sigma must be positive, got {s}"))),
                Sigma::Auto => auto_sigma(&d2, k)?,
            };
            let scale = 2.0 * sigma * sigma;
            d2.mapv(|v| (-v / scale).exp())
        }
    };
    AffinityMatrix::new(values)
}

fn squared_distances(features: ArrayView2<f64>) -> Array2<f64> {
    let n = features.nrows();
    let mut d2 = Array2::zeros((n, n));
    d2.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut row)| {
        let xi = features.row(i);
        for j in 0..n {
            if i != j {
                row[j] = xi.iter().zip(features.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            }
        }
    });
    // Exact symmetry regardless of summation order.
    symmetrize_dense(&mut d2);
    d2
}

fn symmetrize_dense(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            a[[j, i]] = a[[i, j]];
        }
    }
}

fn auto_sigma(d2: &Array2<f64>, k: usize) -> Result<f64> {
    let n = d2.nrows();
    if n < 2 {
        return Ok(1.0);
    }
    if k == 0 || k >= n {
        return Err(invalid(format!("automatic sigma needs 0 < k < items, got k = {k}")));
    }
    let total: f64 = (0..n)
        .map(|i| {
            let mut dists: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d2[[i, j]]).collect();
            let (_, kth, _) = dists.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
            kth.sqrt()
        })
        .sum();
    let mean = total / n as f64;
    Ok(if mean > 0.0 { mean } else { 1.0 })
}

/// The `k` indices `j != i` with the largest affinity to each item `i`; ties go
/// to the smaller index. Each list is sorted ascending.
pub fn knn_neighborhoods(aff: &AffinityMatrix, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = aff.len();
    if k == 0 || k >= n {
        return Err(invalid(format!("k must satisfy 0 < k < items, got k = {k} for {n} items")));
    }
    let values = aff.values();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let row = values.row(i);
            let by_rank = |&a: &usize, &b: &usize| -> Ordering { row[b].total_cmp(&row[a]).then(a.cmp(&b)) };
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            if k < others.len() {
                others.select_nth_unstable_by(k - 1, by_rank);
                others.truncate(k);
            }
            others.sort_unstable();
            others
        })
        .collect())
}

/// Sparse, exactly symmetric, nonnegative edge weights with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    matrix: CsrMatrix,
}

impl WeightMatrix {
    pub fn new(matrix: CsrMatrix) -> Result<Self> {
        if matrix.rows() != matrix.cols() {
            return Err(invalid("weight matrix must be square"));
        }
        if let Some((i, j, v)) = matrix.triplets().find(|&(i, j, v)| v < 0.0 || i == j || !v.is_finite()) {
            return Err(invalid(format!(
                "weight matrix entry ({i}, {j}) = {v} violates nonnegativity or zero diagonal"
            )));
        }
        if !matrix.is_symmetric() {
            return Err(invalid("weight matrix is not symmetric"));
        }
        Ok(WeightMatrix { matrix })
    }

    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.len()).map(|i| self.matrix.row_nnz(i)).max().unwrap_or(0)
    }

    /// Multiplies every weight by `c > 0`.
    pub fn scaled(&self, c: f64) -> WeightMatrix {
        assert!(c > 0.0);
        WeightMatrix { matrix: self.matrix.map_entries(|_, _, v| v * c) }
    }
}

/// k-NN graph weights: `w_ij = a_ij` when `j ∈ N(i)` or `i ∈ N(j)`.
pub fn build_knn_weights(aff: &AffinityMatrix, nbhd: &[Vec<usize>]) -> Result<WeightMatrix> {
    let n = aff.len();
    if nbhd.len() != n {
        return Err(invalid(format!("{} neighborhoods supplied for {n} items", nbhd.len())));
    }
    let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, list) in nbhd.iter().enumerate() {
        for &j in list {
            if j >= n || j == i {
                return Err(invalid(format!("neighborhood of {i} contains invalid index {j}")));
            }
            // max over the two orientations keeps the result exactly symmetric
            let w = aff.get(i, j).max(aff.get(j, i));
            per_row[i].push((j, w));
            per_row[j].push((i, w));
        }
    }
    for row in per_row.iter_mut() {
        row.sort_by_key(|&(j, _)| j);
        row.dedup_by_key(|&mut (j, _)| j);
    }
    WeightMatrix::new(CsrMatrix::from_rows(n, n, per_row))
}

/// `(W + Wᵀ) / 2` with the diagonal forced to zero.
pub fn symmetrize(raw: &CsrMatrix) -> Result<WeightMatrix> {
    if raw.rows() != raw.cols() {
        return Err(invalid("cannot symmetrize a non-square matrix"));
    }
    if let Some((i, j, v)) = raw.triplets().find(|&(_, _, v)| v < 0.0 || !v.is_finite()) {
        return Err(invalid(format!("negative or non-finite weight {v} at ({i}, {j})")));
    }
    let t = raw.transpose();
    let n = raw.rows();
    let per_row = (0..n)
        .map(|i| {
            let mut row: Vec<(usize, f64)> = raw.row(i).chain(t.row(i)).filter(|&(j, _)| j != i).collect();
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (j, _) in row {
                if merged.last().map(|&(c, _)| c) != Some(j) {
                    merged.push((j, 0.5 * (raw.get(i, j) + t.get(i, j))));
                }
            }
            merged
        })
        .collect();
    WeightMatrix::new(CsrMatrix::from_rows(n, n, per_row))
}

/// `S = D^{-1/2} W D^{-1/2}` together with the degrees `d_i = Σ_j w_ij`.
/// Isolated nodes (zero degree) get all-zero rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSimilarity {
    matrix: CsrMatrix,
    degree: Vec<f64>,
}

impl NormalizedSimilarity {
    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    /// An all-zero similarity over `n` items (graph without edges).
    pub fn empty(n: usize) -> Self {
        NormalizedSimilarity { matrix: CsrMatrix::zeros(n, n), degree: vec![0.0; n] }
    }

    /// Dense normalized Laplacian `L = I − S`.
    pub fn laplacian_dense(&self) -> Array2<f64> {
        let mut l = -self.matrix.to_dense();
        for i in 0..self.len() {
            l[[i, i]] += 1.0;
        }
        l
    }

    /// Reassembles a similarity from a stored matrix, recomputing nothing.
    pub fn from_parts(matrix: CsrMatrix, degree: Vec<f64>) -> Result<Self> {
        if matrix.rows() != matrix.cols() || degree.len() != matrix.rows() {
            return Err(invalid("similarity dimensions do not match degrees"));
        }
        Ok(NormalizedSimilarity { matrix, degree })
    }
}

pub fn symmetric_normalize(w: &WeightMatrix) -> NormalizedSimilarity {
    let degree = w.matrix().row_sums();
    let matrix = w.matrix().map_entries(|i, j, v| {
        let dd = degree[i] * degree[j];
        if dd > 0.0 {
            v / dd.sqrt()
        } else {
            0.0
        }
    });
    NormalizedSimilarity { matrix, degree }
}
