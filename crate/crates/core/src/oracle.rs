//! Reference computations used by the test suites and the `selfcheck` command.
//!
//! Everything here deliberately avoids the production code paths it is used to
//! check: exhaustive vertex enumeration instead of simplex pivoting, and dense
//! Gaussian elimination instead of iterative propagation.

use ndarray::{Array1, Array2, ArrayView2};

use crate::numerics::LinearSystem;

/// Minimum of `‖x‖₁` over all basic feasible solutions of the split system
/// `[A, −A] u = b, u ≥ 0`, found by enumerating every `m`-column subset.
/// Returns `None` if no basic feasible solution exists.
pub fn brute_force_basis_pursuit(sys: &LinearSystem) -> Option<f64> {
    let a = sys.a();
    let b = sys.b();
    let (m, n) = a.dim();
    let split = Array2::from_shape_fn((m, 2 * n), |(r, c)| if c < n { a[[r, c]] } else { -a[[r, c - n]] });
    let mut best: Option<f64> = None;
    let mut subset: Vec<usize> = (0..m).collect();
    loop {
        let basis = Array2::from_shape_fn((m, m), |(r, c)| split[[r, subset[c]]]);
        if let Some(u) = gauss_solve(basis, b.to_owned()) {
            if u.iter().all(|&v| v >= -1e-9) {
                let obj: f64 = u.iter().map(|v| v.max(0.0)).sum();
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
        if !next_combination(&mut subset, 2 * n) {
            break;
        }
    }
    best
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in (i + 1)..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn gauss_solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))?;
        if a[[piv, col]].abs() < 1e-10 * scale {
            return None;
        }
        for c in 0..n {
            a.swap([col, c], [piv, c]);
        }
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[[r, col]] / a[[col, col]];
                for c in col..n {
                    a[[r, c]] -= f * a[[col, c]];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some(Array1::from_shape_fn(n, |i| b[i] / a[[i, i]]))
}

/// `(1 − α)(I − αS)⁻¹ Y` by dense Gauss-Jordan elimination on all columns of `Y`.
pub fn dense_label_propagation(s: ArrayView2<f64>, y: ArrayView2<f64>, alpha: f64) -> Array2<f64> {
    let n = s.nrows();
    let mut a = Array2::<f64>::eye(n) - &(s.to_owned() * alpha);
    let mut rhs = y.to_owned() * (1.0 - alpha);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs())).expect("nonempty");
        for c in 0..n {
            a.swap([col, c], [piv, c]);
        }
        for c in 0..rhs.ncols() {
            rhs.swap([col, c], [piv, c]);
        }
        let p = a[[col, col]];
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[[r, col]] / p;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[[r, c]] -= f * a[[col, c]];
            }
            for c in 0..rhs.ncols() {
                rhs[[r, c]] -= f * rhs[[col, c]];
            }
        }
    }
    for r in 0..n {
        let p = a[[r, r]];
        rhs.row_mut(r).mapv_inplace(|v| v / p);
    }
    rhs
}

/// Largest eigenvalue magnitude of a symmetric matrix by power iteration.
pub fn spectral_radius(m: ArrayView2<f64>, iters: usize) -> f64 {
    let n = m.nrows();
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + (i as f64 * 0.618).fract());
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = m.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm / v.dot(&v).sqrt();
        v = w / norm;
    }
    lambda
}
