//! Seeded workloads shared by the benchmarks.

use interprop::numerics::LinearSystem;
use interprop::synthetic::{random_constraints, random_knn_similarity};
use interprop::{ConstraintMatrix, NormalizedSimilarity};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct InterWorkload {
    pub sx: NormalizedSimilarity,
    pub sy: NormalizedSimilarity,
    pub z: ConstraintMatrix,
}

/// Two kNN graphs over `n` and `m` random points with constraints on a
/// `density` fraction of the pairs.
pub fn inter_workload(n: usize, m: usize, k: usize, density: f64, seed: u64) -> InterWorkload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    InterWorkload {
        sx: random_knn_similarity(n, 8, k, &mut rng).expect("valid workload"),
        sy: random_knn_similarity(m, 8, k, &mut rng).expect("valid workload"),
        z: random_constraints(n, m, density, &mut rng),
    }
}

/// Basis pursuit system shaped like one sparse reconstruction:
/// `[C, I]` with `C` a `dim x k` random matrix.
pub fn reconstruction_system(dim: usize, k: usize, seed: u64) -> LinearSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Array2::from_shape_fn((dim, k + dim), |(r, c)| {
        if c < k {
            rng.random_range(-1.0..1.0)
        } else if c - k == r {
            1.0
        } else {
            0.0
        }
    });
    let b = Array1::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0));
    LinearSystem::new(a, b).expect("valid system")
}

pub fn random_symmetric(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
    &a + &a.t()
}
