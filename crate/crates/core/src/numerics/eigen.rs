//! Cyclic Jacobi eigendecomposition for small symmetric matrices.

use ndarray::{Array2, ArrayView2};

use crate::error::{invalid, Result};

const MAX_SWEEPS: usize = 50;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const ASYMMETRY_TOL: f64 = 1e-8;

/// `M = V diag(values) Vᵀ` with orthonormal `V`; eigenvalues ascending and
/// column `j` of `vectors` paired with `values[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub vectors: Array2<f64>,
    pub values: Vec<f64>,
}

pub fn symmetric_eig(m: ArrayView2<f64>) -> Result<EigenPair> {
    let (k, cols) = m.dim();
    if k == 0 || k != cols {
        return Err(invalid(format!("eigendecomposition needs a nonempty square matrix, got {k}x{cols}")));
    }
    let mut a = m.to_owned();
    for i in 0..k {
        for j in (i + 1)..k {
            let (x, y) = (a[[i, j]], a[[j, i]]);
            if !x.is_finite() || !y.is_finite() || (x - y).abs() > ASYMMETRY_TOL {
                return Err(invalid(format!("matrix is not symmetric at ({i}, {j})")));
            }
            let avg = 0.5 * (x + y);
            a[[i, j]] = avg;
            a[[j, i]] = avg;
        }
    }
    let fro = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut v = Array2::<f64>::eye(k);

    for _ in 0..MAX_SWEEPS {
        let off = max_off_diagonal(&a);
        if off <= OFF_DIAGONAL_TOL * fro {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, p, q, c, s, t);
                for r in 0..k {
                    let (vp, vq) = (v[[r, p]], v[[r, q]]);
                    v[[r, p]] = c * vp - s * vq;
                    v[[r, q]] = s * vp + c * vq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| a[[i, i]].total_cmp(&a[[j, j]]));
    let values = order.iter().map(|&i| a[[i, i]]).collect();
    let mut vectors = Array2::zeros((k, k));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    Ok(EigenPair { vectors, values })
}

fn max_off_diagonal(a: &Array2<f64>) -> f64 {
    let k = a.nrows();
    let mut off = 0.0f64;
    for i in 0..k {
        for j in (i + 1)..k {
            off = off.max(a[[i, j]].abs());
        }
    }
    off
}

/// Applies the rotation that annihilates `a[p][q]`.
fn rotate(a: &mut Array2<f64>, p: usize, q: usize, c: f64, s: f64, t: f64) {
    let k = a.nrows();
    let apq = a[[p, q]];
    let tau = s / (1.0 + c);
    a[[p, p]] -= t * apq;
    a[[q, q]] += t * apq;
    a[[p, q]] = 0.0;
    a[[q, p]] = 0.0;
    for r in 0..k {
        if r == p || r == q {
            continue;
        }
        let (arp, arq) = (a[[r, p]], a[[r, q]]);
        let new_p = arp - s * (arq + tau * arp);
        let new_q = arq + s * (arp - tau * arq);
        a[[r, p]] = new_p;
        a[[p, r]] = new_p;
        a[[r, q]] = new_q;
        a[[q, r]] = new_q;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn check_invariants(m: &Array2<f64>, eig: &EigenPair) {
        let k = m.nrows();
        let v = &eig.vectors;
        let vtv = v.t().dot(v);
        for i in 0..k {
            for j in 0..k {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((vtv[[i, j]] - expected).abs() <= 1e-8, "orthonormality at ({i}, {j})");
            }
        }
        let norm = m.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
        let mv = m.dot(v);
        for i in 0..k {
            for j in 0..k {
                assert!((mv[[i, j]] - v[[i, j]] * eig.values[j]).abs() <= 1e-8 * norm);
            }
        }
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn diagonal_input() {
        let m = array![[3.0, 0.0], [0.0, 1.0]];
        let eig = symmetric_eig(m.view()).unwrap();
        assert_eq!(eig.values, vec![1.0, 3.0]);
        assert_eq!(eig.vectors, array![[0.0, 1.0], [1.0, 0.0]]);
    }

    #[test]
    fn two_by_two() {
        let m = array![[2.0, 1.0], [1.0, 2.0]];
        let eig = symmetric_eig(m.view()).unwrap();
        assert_abs_diff_eq!(eig.values[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eig.values[1], 3.0, epsilon = 1e-14);
        check_invariants(&m, &eig);
    }

    #[test]
    fn identity() {
        let m = Array2::<f64>::eye(5);
        let eig = symmetric_eig(m.view()).unwrap();
        assert!(eig.values.iter().all(|&v| v == 1.0));
        check_invariants(&m, &eig);
    }

    #[test]
    fn asymmetric_rejected() {
        assert!(symmetric_eig(array![[1.0, 2.0], [0.0, 1.0]].view()).is_err());
        assert!(symmetric_eig(Array2::<f64>::zeros((2, 3)).view()).is_err());
    }

    #[test]
    fn large_random_matrix() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let k = 128;
        let b = Array2::from_shape_fn((k, k), |_| rng.random_range(-1.0..1.0));
        let m = &b + &b.t();
        let eig = symmetric_eig(m.view()).unwrap();
        check_invariants(&m, &eig);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn random_symmetric(k in 1usize..24, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let b = Array2::from_shape_fn((k, k), |_| rng.random_range(-10.0..10.0));
            let m = &b + &b.t();
            let eig = symmetric_eig(m.view()).unwrap();
            check_invariants(&m, &eig);
            let fro = m.iter().map(|x| x * x).sum::<f64>().sqrt();
            let trace: f64 = (0..k).map(|i| m[[i, i]]).sum();
            let sum: f64 = eig.values.iter().sum();
            prop_assert!((trace - sum).abs() <= 1e-8 * fro.max(1.0));
        }
    }
}
