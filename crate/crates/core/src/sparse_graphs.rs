//! L1-graphs: each item is sparsely reconstructed from its k nearest
//! neighbors in kernel space, and the reconstruction magnitudes become edge
//! weights. The constrained variant adds an L1 Laplacian penalty derived from
//! intra-view must-link/cannot-link constraints inside the neighborhood.

use ndarray::{s, Array1, Array2};
use rayon::prelude::*;

use crate::affinity::{knn_neighborhoods, symmetrize, AffinityMatrix, WeightMatrix};
use crate::error::{invalid, Error, Result};
use crate::model::{ConstraintKind, ConstraintMatrix};
use crate::numerics::{solve_basis_pursuit, symmetric_eig, LinearSystem};
use crate::sparse::CsrMatrix;

/// Kernel-space reconstruction problem for item `index`:
/// `target[j'] = a(N[j'], index)`, `gram[j', j''] = a(N[j'], N[j''])`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodSystem {
    pub index: usize,
    pub neighbors: Vec<usize>,
    pub target: Array1<f64>,
    pub gram: Array2<f64>,
}

impl NeighborhoodSystem {
    pub fn new(aff: &AffinityMatrix, index: usize, neighbors: Vec<usize>) -> Result<Self> {
        if neighbors.is_empty() {
            return Err(invalid(format!("item {index} has an empty neighborhood")));
        }
        if let Some(&j) = neighbors.iter().find(|&&j| j >= aff.len()) {
            return Err(invalid(format!("neighbor index {j} out of range")));
        }
        let target = Array1::from_shape_fn(neighbors.len(), |a| aff.get(neighbors[a], index));
        let gram =
            Array2::from_shape_fn((neighbors.len(), neighbors.len()), |(a, b)| aff.get(neighbors[a], neighbors[b]));
        Ok(NeighborhoodSystem { index, neighbors, target, gram })
    }

    pub fn k(&self) -> usize {
        self.neighbors.len()
    }
}

/// Solution blocks of a (constrained) sparse reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// Reconstruction coefficients, one per neighbor.
    pub coefficients: Vec<f64>,
    /// Reconstruction error term.
    pub noise: Vec<f64>,
    /// Slack of the Laplacian penalty rows; empty for the unconstrained problem.
    pub penalty_slack: Vec<f64>,
}

impl Reconstruction {
    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().chain(&self.noise).chain(&self.penalty_slack).map(|v| v.abs()).sum()
    }
}

/// `min ‖[α; ζ]‖₁ s.t. x̂ = C α + ζ`. Always feasible (`α = 0, ζ = x̂`).
pub fn sparse_reconstruct(nb: &NeighborhoodSystem) -> Result<Reconstruction> {
    let k = nb.k();
    let mut a = Array2::zeros((k, 2 * k));
    a.slice_mut(s![.., ..k]).assign(&nb.gram);
    a.slice_mut(s![.., k..]).assign(&Array2::<f64>::eye(k));
    let sys = LinearSystem::new(a, nb.target.clone())?;
    let x = solve_basis_pursuit(&sys)?;
    Ok(Reconstruction { coefficients: x[..k].to_vec(), noise: x[k..].to_vec(), penalty_slack: Vec::new() })
}

const NULL_EIGENVALUE_RTOL: f64 = 1e-12;

/// Normalized Laplacian of the constraint similarity `1 + Z` restricted to a
/// neighborhood, with its square-root factor `C̃ = Σ^{1/2} Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintLaplacian {
    pub laplacian: Array2<f64>,
    /// Eigenvalues after clamping to zero everything at or below
    /// round-off level (`1e-12` of the largest), ascending.
    pub eigenvalues: Vec<f64>,
    /// Most negative eigenvalue before clamping.
    pub min_raw_eigenvalue: f64,
    pub factor: Array2<f64>,
}

impl ConstraintLaplacian {
    /// `V Σ_clamped Vᵀ`, equal to `C̃ᵀ C̃`.
    pub fn clamped_laplacian(&self) -> Array2<f64> {
        self.factor.t().dot(&self.factor)
    }
}

pub fn constraint_laplacian(z_intra: &ConstraintMatrix, nbhd: &[usize]) -> Result<ConstraintLaplacian> {
    if z_intra.kind() != ConstraintKind::Intra {
        return Err(invalid("constraint laplacian needs intra-view constraints"));
    }
    if let Some(&j) = nbhd.iter().find(|&&j| j >= z_intra.rows()) {
        return Err(invalid(format!("neighbor index {j} out of range")));
    }
    let k = nbhd.len();
    let similarity = Array2::from_shape_fn((k, k), |(a, b)| 1.0 + z_intra.value(nbhd[a], nbhd[b]));
    let degree: Vec<f64> = similarity.rows().into_iter().map(|r| r.sum()).collect();
    // The diagonal of Z is zero, so every row of 1 + Z holds at least a 1.
    assert!(degree.iter().all(|&d| d > 0.0), "constraint similarity has an empty row");

    let mut laplacian = Array2::zeros((k, k));
    for a in 0..k {
        for b in 0..k {
            let identity = if a == b { 1.0 } else { 0.0 };
            laplacian[[a, b]] = identity - similarity[[a, b]] / (degree[a] * degree[b]).sqrt();
        }
    }
    let eig = symmetric_eig(laplacian.view())?;
    let min_raw_eigenvalue = eig.values.first().copied().unwrap_or(0.0);
    // The Laplacian is singular by construction; its null eigenvalue comes
    // back as ±1e-16 noise, whose square root would leave a near-zero row in
    // the factor and wreck the simplex pivots downstream.
    let cutoff = NULL_EIGENVALUE_RTOL * eig.values.last().copied().unwrap_or(0.0).max(0.0);
    let eigenvalues: Vec<f64> = eig.values.iter().map(|&v| if v > cutoff { v } else { 0.0 }).collect();
    let mut factor = eig.vectors.t().to_owned();
    for (mut row, &lambda) in factor.rows_mut().into_iter().zip(&eigenvalues) {
        row *= lambda.sqrt();
    }
    Ok(ConstraintLaplacian { laplacian, eigenvalues, min_raw_eigenvalue, factor })
}

/// `min ‖[α; ζ; ξ]‖₁ s.t. x̂ = C α + ζ, 0 = C̃ α + ξ`.
pub fn constrained_sparse_reconstruct(nb: &NeighborhoodSystem, cl: &ConstraintLaplacian) -> Result<Reconstruction> {
    let k = nb.k();
    if cl.factor.dim() != (k, k) {
        return Err(invalid(format!("constraint factor is {:?} but neighborhood has {k} items", cl.factor.dim())));
    }
    let mut a = Array2::zeros((2 * k, 3 * k));
    a.slice_mut(s![..k, ..k]).assign(&nb.gram);
    a.slice_mut(s![..k, k..2 * k]).assign(&Array2::<f64>::eye(k));
    a.slice_mut(s![k.., ..k]).assign(&cl.factor);
    a.slice_mut(s![k.., 2 * k..]).assign(&Array2::<f64>::eye(k));
    let mut b = Array1::zeros(2 * k);
    b.slice_mut(s![..k]).assign(&nb.target);
    let sys = LinearSystem::new(a, b)?;
    let x = solve_basis_pursuit(&sys)?;
    Ok(Reconstruction {
        coefficients: x[..k].to_vec(),
        noise: x[k..2 * k].to_vec(),
        penalty_slack: x[2 * k..].to_vec(),
    })
}

/// L1-graph over one view: `w_ij = |α_i(j')|` for the reconstruction of item
/// `i` from its neighborhood, then `(W + Wᵀ)/2`.
///
/// Without `z_intra` this is the plain sparse-representation graph; with it,
/// each reconstruction carries the neighborhood constraint penalty.
pub fn build_l1_graph(aff: &AffinityMatrix, k: usize, z_intra: Option<&ConstraintMatrix>) -> Result<WeightMatrix> {
    let n = aff.len();
    if let Some(z) = z_intra {
        if z.kind() != ConstraintKind::Intra || z.rows() != n {
            return Err(invalid(format!(
                "intra constraints must be {n}x{n} intra-view, got {}x{} {:?}",
                z.rows(),
                z.cols(),
                z.kind()
            )));
        }
    }
    let nbhd = knn_neighborhoods(aff, k)?;
    let rows: Vec<Vec<(usize, f64)>> = nbhd
        .into_par_iter()
        .enumerate()
        .map(|(i, neighbors)| {
            let wrap = |e: Error| Error::Reconstruction { index: i, source: Box::new(e) };
            let nb = NeighborhoodSystem::new(aff, i, neighbors).map_err(wrap)?;
            let rec = match z_intra {
                None => sparse_reconstruct(&nb),
                Some(z) => {
                    constraint_laplacian(z, &nb.neighbors).and_then(|cl| constrained_sparse_reconstruct(&nb, &cl))
                }
            }
            .map_err(wrap)?;
            Ok(nb.neighbors.iter().zip(&rec.coefficients).map(|(&j, &c)| (j, c.abs())).collect())
        })
        .collect::<Result<_>>()?;
    symmetrize(&CsrMatrix::from_rows(n, n, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{intra_constraints_from_labels, Sign};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn system(gram: Array2<f64>, target: Array1<f64>) -> NeighborhoodSystem {
        let k = target.len();
        NeighborhoodSystem { index: 0, neighbors: (1..=k).collect(), target, gram }
    }

    #[test]
    fn zero_target_reconstructs_to_zero() {
        let nb = system(array![[1.0, 0.3], [0.3, 1.0]], array![0.0, 0.0]);
        let rec = sparse_reconstruct(&nb).unwrap();
        assert!(rec.coefficients.iter().chain(&rec.noise).all(|&v| v == 0.0));
        let cl = constraint_laplacian(&ConstraintMatrix::empty(3, 3, ConstraintKind::Intra), &[1, 2]).unwrap();
        let rec = constrained_sparse_reconstruct(&nb, &cl).unwrap();
        assert_eq!(rec.l1_norm(), 0.0);
    }

    #[test]
    fn identity_gram_unit_target() {
        let nb = system(Array2::eye(3), array![1.0, 0.0, 0.0]);
        let rec = sparse_reconstruct(&nb).unwrap();
        assert_abs_diff_eq!(rec.l1_norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn half_unit_target() {
        let nb = system(Array2::eye(2), array![0.5, 0.0]);
        let rec = sparse_reconstruct(&nb).unwrap();
        assert_abs_diff_eq!(rec.l1_norm(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn unconstrained_neighborhood_laplacian() {
        let z = ConstraintMatrix::empty(2, 2, ConstraintKind::Intra);
        let cl = constraint_laplacian(&z, &[0, 1]).unwrap();
        assert_eq!(cl.laplacian, array![[0.5, -0.5], [-0.5, 0.5]]);
        assert_eq!(cl.eigenvalues[0], 0.0);
        assert_abs_diff_eq!(cl.eigenvalues[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn unconstrained_spectrum_general_k() {
        for k in [3usize, 5, 9] {
            let z = ConstraintMatrix::empty(k, k, ConstraintKind::Intra);
            let nbhd: Vec<usize> = (0..k).collect();
            let cl = constraint_laplacian(&z, &nbhd).unwrap();
            assert_abs_diff_eq!(cl.eigenvalues[0], 0.0, epsilon = 1e-12);
            for &v in &cl.eigenvalues[1..] {
                assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cannot_linked_pair_gives_zero_laplacian() {
        let z = ConstraintMatrix::new(
            2,
            2,
            ConstraintKind::Intra,
            vec![(0, 1, Sign::CannotLink), (1, 0, Sign::CannotLink)],
        )
        .unwrap();
        let cl = constraint_laplacian(&z, &[0, 1]).unwrap();
        assert_eq!(cl.laplacian, Array2::<f64>::zeros((2, 2)));
        assert!(cl.factor.iter().all(|&v| v == 0.0));

        // With a zero factor the penalty rows decouple and force ξ = 0.
        let nb = system(array![[1.0, 0.4], [0.4, 1.0]], array![0.7, 0.3]);
        let plain = sparse_reconstruct(&nb).unwrap();
        let constrained = constrained_sparse_reconstruct(&nb, &cl).unwrap();
        assert_abs_diff_eq!(plain.l1_norm(), constrained.l1_norm(), epsilon = 1e-12);
        assert!(constrained.penalty_slack.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn factor_reproduces_laplacian_quadratic_form() {
        let labels = [0u32, 0, 1, 1, 2, 0];
        let z = intra_constraints_from_labels(&labels, None, 0).unwrap();
        let cl = constraint_laplacian(&z, &[0, 2, 3, 5]).unwrap();
        assert!(cl.min_raw_eigenvalue >= -1e-8);
        let alpha = array![0.3, -1.2, 0.5, 2.0];
        let lhs = cl.factor.dot(&alpha);
        let lhs = lhs.dot(&lhs);
        let rhs = alpha.dot(&cl.laplacian.dot(&alpha));
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn constraint_shape_mismatch_rejected() {
        let nb = system(Array2::eye(2), array![0.5, 0.0]);
        let z = ConstraintMatrix::empty(3, 3, ConstraintKind::Intra);
        let cl = constraint_laplacian(&z, &[0, 1, 2]).unwrap();
        assert!(constrained_sparse_reconstruct(&nb, &cl).is_err());
        let inter = ConstraintMatrix::empty(3, 3, ConstraintKind::Inter);
        assert!(constraint_laplacian(&inter, &[0, 1]).is_err());
    }

    #[test]
    fn two_identical_points() {
        let aff = AffinityMatrix::new(Array2::from_elem((2, 2), 1.0)).unwrap();
        let w = build_l1_graph(&aff, 1, None).unwrap();
        let v = w.get(0, 1);
        assert!(v == 0.0 || (v - 1.0).abs() < 1e-12, "{v}");
        assert_eq!(w.get(0, 1), w.get(1, 0));
    }

    #[test]
    fn orthogonal_points_give_empty_graph() {
        let aff = AffinityMatrix::new(Array2::eye(4)).unwrap();
        let w = build_l1_graph(&aff, 2, None).unwrap();
        assert_eq!(w.matrix().nnz(), 0);
        let z = ConstraintMatrix::empty(4, 4, ConstraintKind::Intra);
        let w = build_l1_graph(&aff, 2, Some(&z)).unwrap();
        assert_eq!(w.matrix().nnz(), 0);
    }
}
