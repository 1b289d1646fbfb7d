use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `1e-13` times the largest entry of `A`.
pub fn lu_solve(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Option<Array1<f64>> {
    let rhs = b.to_owned().insert_axis(Axis(1));
    lu_solve_many(a, rhs).map(|x| x.column(0).to_owned())
}

/// [`lu_solve`] for every column of `b` at once.
pub fn lu_solve_many(a: ArrayView2<f64>, mut x: Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    assert_eq!(n, x.nrows());
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return if n == 0 { Some(x) } else { None };
    }
    let mut m = a.to_owned();
    for col in 0..n {
        let (pivot_row, pivot) =
            (col..n)
                .map(|r| (r, m[[r, col]].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot <= 1e-13 * scale {
            return None;
        }
        if pivot_row != col {
            for c in 0..n {
                m.swap([col, c], [pivot_row, c]);
            }
            for c in 0..x.ncols() {
                x.swap([col, c], [pivot_row, c]);
            }
        }
        let p = m[[col, col]];
        let pivot_x = x.row(col).to_owned();
        for r in (col + 1)..n {
            let f = m[[r, col]] / p;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[[r, c]] -= f * m[[col, c]];
            }
            x.row_mut(r).scaled_add(-f, &pivot_x);
        }
    }
    for r in (0..n).rev() {
        for c in (r + 1)..n {
            let f = m[[r, c]];
            if f != 0.0 {
                let xc = x.row(c).to_owned();
                x.row_mut(r).scaled_add(-f, &xc);
            }
        }
        let p = m[[r, r]];
        x.row_mut(r).mapv_inplace(|v| v / p);
    }
    Some(x)
}

/// Cholesky factor `A = L Lᵀ` of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Array2<f64>,
}

impl Cholesky {
    /// Returns `None` if `A` is not numerically positive definite.
    pub fn new(a: ArrayView2<f64>) -> Option<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols());
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if d.is_nan() || d <= 0.0 {
                return None;
            }
            let d = d.sqrt();
            l[[j, j]] = d;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / d;
            }
        }
        Some(Cholesky { lower: l })
    }

    /// Solves `A X = B` column by column.
    pub fn solve(&self, b: ArrayView2<f64>) -> Array2<f64> {
        let l = &self.lower;
        let n = l.nrows();
        assert_eq!(n, b.nrows());
        let mut x = b.to_owned();
        for c in 0..x.ncols() {
            for i in 0..n {
                let mut s = x[[i, c]];
                for k in 0..i {
                    s -= l[[i, k]] * x[[k, c]];
                }
                x[[i, c]] = s / l[[i, i]];
            }
            for i in (0..n).rev() {
                let mut s = x[[i, c]];
                for k in (i + 1)..n {
                    s -= l[[k, i]] * x[[k, c]];
                }
                x[[i, c]] = s / l[[i, i]];
            }
        }
        x
    }
}

/// Solves `A X = B` for symmetric positive definite `A`.
pub fn cholesky_solve(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Option<Array2<f64>> {
    Cholesky::new(a).map(|c| c.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn lu_solves_with_pivoting() {
        let a = array![[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        let x = array![1.0, -2.0, 0.5];
        let b = a.dot(&x);
        let got = lu_solve(a.view(), b.view()).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(got[i], x[i], epsilon = 1e-14);
        }
        assert!(lu_solve(array![[1.0, 2.0], [2.0, 4.0]].view(), array![1.0, 2.0].view()).is_none());
    }

    #[test]
    fn cholesky_matches_product() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let x = array![[1.0, 0.0], [2.0, -1.0], [-1.0, 3.0]];
        let b = a.dot(&x);
        let got = cholesky_solve(a.view(), b.view()).unwrap();
        for (g, e) in got.iter().zip(x.iter()) {
            assert_abs_diff_eq!(g, e, epsilon = 1e-13);
        }
        assert!(cholesky_solve(array![[1.0, 2.0], [2.0, 1.0]].view(), b.slice(ndarray::s![..2, ..])).is_none());
    }
}
