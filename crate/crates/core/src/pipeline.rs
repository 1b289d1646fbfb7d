//! Graph construction dispatch: from a view and a [`GraphSpec`] to the
//! weights and normalized similarity used by propagation.

use log::debug;

use crate::affinity::{
    build_knn_weights, compute_affinity, knn_neighborhoods, symmetric_normalize, AffinityMatrix, NormalizedSimilarity,
    WeightMatrix,
};
use crate::error::{invalid, Error, Result};
use crate::intra::{adjust_weights_cwa, propagate_intra, IntraParams};
use crate::model::{validate_dataset, ConstraintKind, ConstraintMatrix, Construction, GraphSpec, Kernel, ViewDataset};
use crate::sparse_graphs::build_l1_graph;

#[derive(Debug, Clone, PartialEq)]
pub struct ViewGraph {
    pub weights: WeightMatrix,
    pub similarity: NormalizedSimilarity,
}

/// The kernel matrix of a view: the stored affinity for
/// [`Kernel::Precomputed`], otherwise the kernel evaluated on the features.
pub fn view_affinity(ds: &ViewDataset, kernel: Kernel, k: usize) -> Result<AffinityMatrix> {
    match (kernel, &ds.affinity, &ds.features) {
        (Kernel::Precomputed, Some(a), _) => AffinityMatrix::new(a.clone()),
        (Kernel::Precomputed, None, _) => {
            Err(Error::Configuration("precomputed kernel requested but the view has no affinity matrix".into()))
        }
        (_, _, Some(f)) => compute_affinity(f.view(), kernel, k),
        (_, Some(a), None) => {
            debug!("view has only an affinity matrix; ignoring kernel {kernel}");
            AffinityMatrix::new(a.clone())
        }
        (_, None, None) => Err(invalid("view has neither features nor affinity")),
    }
}

/// Builds one view's graph according to `spec.construction`.
///
/// CWA and CSR need a nonempty intra-view constraint matrix over the view's
/// items; the other constructions ignore it.
pub fn build_view_graph(
    ds: &ViewDataset,
    spec: &GraphSpec,
    intra: Option<&ConstraintMatrix>,
    intra_params: &IntraParams,
) -> Result<ViewGraph> {
    let diagnostics = validate_dataset(ds);
    if !diagnostics.is_empty() {
        let joined: Vec<String> = diagnostics.iter().map(ToString::to_string).collect();
        return Err(invalid(format!("invalid view: {}", joined.join("; "))));
    }
    spec.validate(ds.items)?;
    let intra = if spec.construction.needs_intra_constraints() {
        match intra {
            Some(z) if !z.is_empty() => {
                if z.kind() != ConstraintKind::Intra || z.rows() != ds.items {
                    return Err(Error::Configuration(format!(
                        "intra constraints must be an intra-view {0}x{0} matrix",
                        ds.items
                    )));
                }
                Some(z)
            }
            _ => {
                return Err(Error::Configuration(format!(
                    "construction '{}' needs nonempty intra-view constraints",
                    spec.construction
                )))
            }
        }
    } else {
        None
    };

    let aff = view_affinity(ds, spec.kernel, spec.k)?;
    let weights = match spec.construction {
        Construction::Knn => build_knn_weights(&aff, &knn_neighborhoods(&aff, spec.k)?)?,
        Construction::Sr => build_l1_graph(&aff, spec.k, None)?,
        Construction::Csr => build_l1_graph(&aff, spec.k, intra)?,
        Construction::Cwa => {
            let base = build_knn_weights(&aff, &knn_neighborhoods(&aff, spec.k)?)?;
            let z = intra.expect("checked above");
            let propagated = propagate_intra(&symmetric_normalize(&base), z, intra_params)?;
            debug!("intra propagation converged in {} outer rounds", propagated.log.outer_iterations());
            adjust_weights_cwa(&base, &propagated.field)?
        }
    };
    let similarity = symmetric_normalize(&weights);
    Ok(ViewGraph { weights, similarity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{intra_constraints_from_labels, Sigma};
    use ndarray::array;

    fn toy() -> ViewDataset {
        ViewDataset::from_features(array![[0.0, 0.0], [0.1, 0.0], [1.0, 1.0], [1.1, 1.0], [0.5, 0.4]])
            .with_labels(vec![0, 0, 1, 1, 0])
    }

    #[test]
    fn every_construction_builds() {
        let ds = toy();
        let z = intra_constraints_from_labels(ds.labels.as_ref().unwrap(), None, 0).unwrap();
        for c in Construction::ALL {
            let spec = GraphSpec::new(2, Kernel::Gaussian(Sigma::Auto), c);
            let g = build_view_graph(&ds, &spec, Some(&z), &IntraParams::default()).unwrap();
            assert!(g.weights.max_row_nnz() <= 4, "{c}");
            assert!(g.weights.matrix().is_symmetric());
        }
    }

    #[test]
    fn constrained_constructions_need_constraints() {
        let ds = toy();
        let empty = ConstraintMatrix::empty(5, 5, ConstraintKind::Intra);
        for c in [Construction::Cwa, Construction::Csr] {
            let spec = GraphSpec::new(2, Kernel::Cosine, c);
            assert!(matches!(
                build_view_graph(&ds, &spec, Some(&empty), &IntraParams::default()),
                Err(Error::Configuration(_))
            ));
            assert!(matches!(
                build_view_graph(&ds, &spec, None, &IntraParams::default()),
                Err(Error::Configuration(_))
            ));
        }
    }

    #[test]
    fn precomputed_affinity_is_used() {
        let ds = ViewDataset::from_affinity(array![[1.0, 0.9, 0.1], [0.9, 1.0, 0.2], [0.1, 0.2, 1.0]]);
        let spec = GraphSpec::new(1, Kernel::Precomputed, Construction::Knn);
        let g = build_view_graph(&ds, &spec, None, &IntraParams::default()).unwrap();
        assert_eq!(g.weights.get(0, 1), 0.9);
        let features_only = toy();
        assert!(build_view_graph(&features_only, &spec, None, &IntraParams::default()).is_err());
    }
}
