//! Pairwise constraint propagation across two views.
//!
//! Sparse must-link/cannot-link constraints between the items of two views
//! are diffused over one graph per view, giving a dense field of signed
//! cross-view correlations. That field drives cross-view retrieval.
//!
//! Graphs come from a k-nearest-neighbor rule, an L1 (sparse representation)
//! rule, or constrained variants of either that also use intra-view
//! constraints.

pub mod affinity;
mod error;
pub mod inter;
pub mod intra;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod pipeline;
pub mod retrieval;
pub mod sparse;
pub mod sparse_graphs;
pub mod synthetic;

pub use affinity::{AffinityMatrix, NormalizedSimilarity, WeightMatrix};
pub use error::{Error, Result};
pub use inter::{closed_form_inter, propagate_inter, ConvergenceLog, InterOutcome};
pub use intra::{adjust_weights_cwa, propagate_intra, IntraOutcome, IntraParams};
pub use model::{
    constraints_from_labels, intra_constraints_from_labels, ConstraintKind, ConstraintMatrix, Construction, GraphSpec,
    Kernel, Label, PropagationField, PropagationParams, Sigma, Sign, ViewDataset,
};
pub use pipeline::{build_view_graph, ViewGraph};
pub use retrieval::{evaluate_map, evaluate_map_on, Direction, RetrievalReport};
pub use sparse::CsrMatrix;
