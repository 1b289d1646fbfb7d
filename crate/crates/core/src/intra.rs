//! Intra-view constraint propagation and constrained weight adjustment (CWA).

use ndarray::Array2;

use crate::affinity::{NormalizedSimilarity, WeightMatrix};
use crate::error::{invalid, Result};
use crate::inter::{alternate, label_propagation, ConvergenceLog, Side};
use crate::model::{
    check_beta, check_iteration_controls, check_unit_open, ConstraintKind, ConstraintMatrix, PropagationField,
};

/// Parameters of single-view propagation. Same conventions as the inter-view
/// parameters, with one smoothness coefficient shared by both sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntraParams {
    pub alpha: f64,
    pub beta: f64,
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
}

impl Default for IntraParams {
    fn default() -> Self {
        IntraParams {
            alpha: 0.8,
            beta: 0.5,
            inner_tol: 1e-6,
            outer_tol: 1e-4,
            max_inner_iters: 1000,
            max_outer_iters: 50,
        }
    }
}

impl IntraParams {
    pub fn validate(&self) -> Result<()> {
        check_unit_open("alpha", self.alpha)?;
        check_beta(self.beta)?;
        check_iteration_controls(self.inner_tol, self.outer_tol, self.max_inner_iters, self.max_outer_iters)
    }
}

#[derive(Debug, Clone)]
pub struct IntraOutcome {
    /// `(F_v + F_h)/2` scaled by its maximum entry (when positive) and clamped to `[−1, 1]`.
    pub field: PropagationField,
    /// `(F_v + F_h)/2` before normalization.
    pub raw: Array2<f64>,
    pub vertical: Array2<f64>,
    pub horizontal: Array2<f64>,
    pub log: ConvergenceLog,
}

/// Propagates intra-view constraints over one graph: the vertical side
/// diffuses columns of `Z`, the horizontal side diffuses rows.
pub fn propagate_intra(s: &NormalizedSimilarity, z: &ConstraintMatrix, p: &IntraParams) -> Result<IntraOutcome> {
    p.validate()?;
    if z.kind() != ConstraintKind::Intra {
        return Err(invalid("intra propagation needs intra-view constraints"));
    }
    if z.rows() != s.len() {
        return Err(invalid(format!("constraints cover {} items but the graph has {}", z.rows(), s.len())));
    }
    let side = |side: Side| {
        move |target: &Array2<f64>, prev: &Array2<f64>| {
            let r = label_propagation(
                s.matrix(),
                side,
                p.alpha,
                target.view(),
                Some(prev.clone()),
                p.inner_tol,
                p.max_inner_iters,
            )?;
            Ok((r.field, r.residuals.len()))
        }
    };
    let (vertical, horizontal, log) =
        alternate(&z.to_dense(), p.beta, p.outer_tol, p.max_outer_iters, side(Side::Left), side(Side::Right))?;
    let raw = (&vertical + &horizontal) * 0.5;
    let field = PropagationField::new(normalize_and_clamp(&raw))?;
    Ok(IntraOutcome { field, raw, vertical, horizontal, log })
}

/// Divides by the maximum entry when it is positive, then clamps to `[−1, 1]`.
pub fn normalize_and_clamp(raw: &Array2<f64>) -> Array2<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = if max > 0.0 { max } else { 1.0 };
    raw.mapv(|v| (v / scale).clamp(-1.0, 1.0))
}

/// Adjusted weight for an edge of weight `w ∈ [0,1]` under propagated
/// constraint `f ∈ [−1,1]`: `1 − (1−f)(1−w)` for `f ≥ 0`, `(1+f) w` otherwise.
pub fn cwa_weight(w: f64, f: f64) -> f64 {
    if f >= 0.0 {
        // same value as 1 - (1-f)(1-w), but exact at f = 0
        w + f * (1.0 - w)
    } else {
        (1.0 + f) * w
    }
}

/// Reweights the existing edges of `w` by the propagated constraints `f`.
///
/// Weights are first divided by their maximum if it exceeds 1. Only stored
/// edges are touched, so the sparsity pattern can shrink but never grow. Each
/// edge reads the symmetric part `(f_ij + f_ji)/2`.
pub fn adjust_weights_cwa(w: &WeightMatrix, f: &PropagationField) -> Result<WeightMatrix> {
    let n = w.len();
    if f.rows() != n || f.cols() != n {
        return Err(invalid(format!("propagated field is {}x{} but the graph has {n} items", f.rows(), f.cols())));
    }
    if let Some(v) = f.values().iter().find(|v| !(-1.0..=1.0).contains(*v)) {
        return Err(invalid(format!("propagated constraint {v} outside [-1, 1]")));
    }
    let max = w.matrix().max_value().unwrap_or(0.0);
    let scale = if max > 1.0 { max } else { 1.0 };
    let values = f.values();
    let adjusted = w.matrix().map_entries(|i, j, v| {
        let fij = 0.5 * (values[[i, j]] + values[[j, i]]);
        cwa_weight(v / scale, fij)
    });
    WeightMatrix::new(adjusted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::{symmetric_normalize, symmetrize};
    use crate::model::{gamma, intra_constraints_from_labels, mu_hat};
    use crate::oracle::dense_label_propagation;
    use crate::sparse::CsrMatrix;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_graph(n: usize, rng: &mut ChaCha8Rng) -> (WeightMatrix, NormalizedSimilarity) {
        let mut t = Vec::new();
        for i in 0..n {
            for _ in 0..3 {
                let j = rng.random_range(0..n);
                if j != i {
                    t.push((i, j, rng.random_range(0.1..1.0)));
                }
            }
        }
        let w = symmetrize(&CsrMatrix::from_triplets(n, n, &t).unwrap()).unwrap();
        let s = symmetric_normalize(&w);
        (w, s)
    }

    fn random_labels(n: usize, classes: u32, rng: &mut ChaCha8Rng) -> Vec<u32> {
        (0..n).map(|_| rng.random_range(0..classes)).collect()
    }

    #[test]
    fn zero_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, s) = random_graph(6, &mut rng);
        let z = ConstraintMatrix::empty(6, 6, ConstraintKind::Intra);
        let out = propagate_intra(&s, &z, &IntraParams::default()).unwrap();
        assert!(out.field.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_graph_fixed_point() {
        let z = intra_constraints_from_labels(&[0u32, 0, 1, 2, 1], None, 0).unwrap();
        let s = NormalizedSimilarity::empty(5);
        let p = IntraParams { alpha: 0.3, beta: 0.6, inner_tol: 1e-14, outer_tol: 1e-13, ..Default::default() };
        let out = propagate_intra(&s, &z, &p).unwrap();
        let c = (1.0 - 0.3) * (1.0 - 0.6) / (1.0 - 0.6 * (1.0 - 0.3));
        let zd = z.to_dense();
        for (r, e) in out.raw.iter().zip(zd.iter()) {
            assert!((r - c * e).abs() < 1e-10);
        }
        for (f, e) in out.field.values().iter().zip(zd.iter()) {
            assert!((f - e).abs() < 1e-10);
        }
    }

    #[test]
    fn stationarity_of_both_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (_, s) = random_graph(10, &mut rng);
        let z = intra_constraints_from_labels(&random_labels(10, 3, &mut rng), Some(2), 9).unwrap();
        let p = IntraParams { alpha: 0.6, beta: 0.7, inner_tol: 1e-13, outer_tol: 1e-12, ..Default::default() };
        let out = propagate_intra(&s, &z, &p).unwrap();
        let l = s.laplacian_dense();
        let zd = z.to_dense();
        let g = gamma(p.beta);
        let mu = mu_hat(p.alpha) * (1.0 + g);
        let (fv, fh) = (&out.vertical, &out.horizontal);
        let grad_v = (fv - &zd) + l.dot(fv) * mu + (fv - fh) * g;
        let grad_h = (fh - &zd) + fh.dot(&l) * mu + (fh - fv) * g;
        assert!(grad_v.iter().chain(grad_h.iter()).all(|v| v.abs() < 1e-5));
    }

    #[test]
    fn zero_beta_decouples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, s) = random_graph(30, &mut rng);
        let z = intra_constraints_from_labels(&random_labels(30, 4, &mut rng), Some(3), 1).unwrap();
        let p = IntraParams { alpha: 0.7, beta: 0.0, inner_tol: 1e-12, ..Default::default() };
        let out = propagate_intra(&s, &z, &p).unwrap();
        let expected = dense_label_propagation(s.matrix().to_dense().view(), z.to_dense().view(), 0.7);
        for (a, b) in out.vertical.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn output_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (_, s) = random_graph(20, &mut rng);
        for classes in [2, 5] {
            let z = intra_constraints_from_labels(&random_labels(20, classes, &mut rng), None, 0).unwrap();
            let out = propagate_intra(&s, &z, &IntraParams::default()).unwrap();
            assert!(out.field.values().iter().all(|v| (-1.0..=1.0).contains(v)));
            let max = out.raw.iter().copied().fold(f64::MIN, f64::max);
            if max > 0.0 {
                assert!(out.field.values().iter().any(|&v| v == 1.0));
            } else {
                assert_eq!(out.field.values(), &out.raw.mapv(|v| v.clamp(-1.0, 1.0)));
            }
        }
    }

    #[test]
    fn nonpositive_field_is_only_clamped() {
        let raw = array![[-0.5, -2.0], [0.0, -0.1]];
        assert_eq!(normalize_and_clamp(&raw), array![[-0.5, -1.0], [0.0, -0.1]]);
    }

    #[test]
    fn cwa_boundary_cases() {
        assert_eq!(cwa_weight(0.5, 1.0), 1.0);
        assert_eq!(cwa_weight(0.5, -1.0), 0.0);
        assert_eq!(cwa_weight(0.37, 0.0), 0.37);
    }

    #[test]
    fn cwa_identity_and_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (w, _) = random_graph(8, &mut rng);
        let zero = PropagationField::zeros(8, 8);
        assert_eq!(adjust_weights_cwa(&w, &zero).unwrap(), w);

        let scaled = w.scaled(4.0);
        let adjusted = adjust_weights_cwa(&scaled, &zero).unwrap();
        let max = scaled.matrix().max_value().unwrap();
        for (i, j, v) in adjusted.matrix().triplets() {
            assert_eq!(v, scaled.get(i, j) / max);
        }

        let ones = PropagationField::new(Array2::from_elem((8, 8), 1.0)).unwrap();
        let saturated = adjust_weights_cwa(&w, &ones).unwrap();
        assert_eq!(saturated.matrix().nnz(), w.matrix().nnz());
        assert!(saturated.matrix().triplets().all(|(_, _, v)| v == 1.0));

        let minus = PropagationField::new(Array2::from_elem((8, 8), -1.0)).unwrap();
        assert_eq!(adjust_weights_cwa(&w, &minus).unwrap().matrix().nnz(), 0);

        let bad = PropagationField::new(Array2::from_elem((8, 8), 1.5)).unwrap();
        assert!(adjust_weights_cwa(&w, &bad).is_err());
    }
}
