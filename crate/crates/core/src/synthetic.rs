//! Seeded synthetic two-view data: class-structured Gaussian clusters and
//! random propagation instances.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::affinity::{
    build_knn_weights, compute_affinity, knn_neighborhoods, symmetric_normalize, NormalizedSimilarity,
};
use crate::error::{invalid, Result};
use crate::model::{ConstraintKind, ConstraintMatrix, Kernel, Label, Sigma, Sign, ViewDataset};

/// Shape of a paired two-view cluster dataset. Item `i` of view X and item
/// `i` of view Y share a class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterSpec {
    pub classes: usize,
    pub train: usize,
    pub test: usize,
    pub dim_x: usize,
    pub dim_y: usize,
    /// Standard deviation of the class means; the within-class noise is 1.
    pub separation: f64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec { classes: 5, train: 200, test: 100, dim_x: 10, dim_y: 16, separation: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct TwoViewData {
    pub x: ViewDataset,
    pub y: ViewDataset,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl TwoViewData {
    pub fn labels(&self) -> &[Label] {
        self.x.labels.as_deref().expect("synthetic views are labeled")
    }

    pub fn train_labels(&self) -> Vec<Label> {
        self.train.iter().map(|&i| self.labels()[i]).collect()
    }
}

pub fn gaussian_clusters(spec: &ClusterSpec, seed: u64) -> Result<TwoViewData> {
    if spec.classes == 0 || spec.train + spec.test < spec.classes || spec.dim_x == 0 || spec.dim_y == 0 {
        return Err(invalid("degenerate cluster specification"));
    }
    let n = spec.train + spec.test;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<Label> = (0..n).map(|i| (i % spec.classes) as Label).collect();
    labels.shuffle(&mut rng);
    let mut view = |dim: usize| {
        let means = gaussian_matrix(spec.classes, dim, spec.separation, &mut rng);
        let noise = gaussian_matrix(n, dim, 1.0, &mut rng);
        Array2::from_shape_fn((n, dim), |(i, d)| means[[labels[i] as usize, d]] + noise[[i, d]])
    };
    let fx = view(spec.dim_x);
    let fy = view(spec.dim_y);
    Ok(TwoViewData {
        x: ViewDataset::from_features(fx).with_labels(labels.clone()),
        y: ViewDataset::from_features(fy).with_labels(labels),
        train: (0..spec.train).collect(),
        test: (spec.train..n).collect(),
    })
}

pub fn gaussian_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let v: f64 = StandardNormal.sample(rng);
        scale * v
    })
}

/// Normalized kNN similarity over `n` random points in `dim` dimensions.
pub fn random_knn_similarity(n: usize, dim: usize, k: usize, rng: &mut impl Rng) -> Result<NormalizedSimilarity> {
    let features = gaussian_matrix(n, dim, 1.0, rng);
    let aff = compute_affinity(features.view(), Kernel::Gaussian(Sigma::Auto), k)?;
    let w = build_knn_weights(&aff, &knn_neighborhoods(&aff, k)?)?;
    Ok(symmetric_normalize(&w))
}

/// Inter-view constraints on a random `density` fraction of the pairs, with
/// random signs.
pub fn random_constraints(rows: usize, cols: usize, density: f64, rng: &mut impl Rng) -> ConstraintMatrix {
    let mut entries = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if rng.random_bool(density) {
                let s = if rng.random_bool(0.5) { Sign::MustLink } else { Sign::CannotLink };
                entries.push((i, j, s));
            }
        }
    }
    ConstraintMatrix::new(rows, cols, ConstraintKind::Inter, entries).expect("entries are in range and unique")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clusters_are_balanced_and_reproducible() {
        let spec = ClusterSpec { train: 20, test: 10, ..Default::default() };
        let a = gaussian_clusters(&spec, 5).unwrap();
        let b = gaussian_clusters(&spec, 5).unwrap();
        assert_eq!(a.x.features, b.x.features);
        assert_eq!(a.y.features.as_ref().unwrap().dim(), (30, 16));
        for c in 0..5 {
            assert_eq!(a.labels().iter().filter(|&&l| l == c).count(), 6);
        }
        assert_eq!(a.train_labels().len(), 20);
    }

    #[test]
    fn constraint_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = random_constraints(40, 50, 0.1, &mut rng);
        assert!((100..300).contains(&z.len()));
    }
}
