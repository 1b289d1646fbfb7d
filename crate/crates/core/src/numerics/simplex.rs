//! Basis pursuit (`min ‖x‖₁ s.t. Ax = b`) as a linear program.
//!
//! `x` is split into `x⁺ − x⁻` with both parts nonnegative, turning the problem
//! into `min 1ᵀu s.t. [A, −A] u = b, u ≥ 0`. That LP is solved by a dense
//! two-phase tableau simplex under Bland's rule, so degenerate pivots cannot
//! cycle. The result is always a basic (vertex) solution.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::dense::{lu_solve, lu_solve_many};
use crate::error::{invalid, Error, Result};

/// Phase-one objective above which the system is declared infeasible.
const FEASIBILITY_TOL: f64 = 1e-9;
/// Reduced costs above `-OPTIMALITY_TOL` are treated as nonnegative.
const OPTIMALITY_TOL: f64 = 1e-10;
/// Tableau entries at or below this magnitude never serve as pivots.
const PIVOT_TOL: f64 = 1e-11;
/// Pivots between rebuilds of the tableau from the original data.
const REINVERT_INTERVAL: usize = 32;

/// `A x = b` with `A` of shape `m × n`, `m ≤ n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: Array2<f64>,
    b: Array1<f64>,
}

impl LinearSystem {
    pub fn new(a: Array2<f64>, b: Array1<f64>) -> Result<Self> {
        let (m, n) = a.dim();
        if m == 0 || n == 0 {
            return Err(invalid("linear system must have at least one row and column"));
        }
        if m > n {
            return Err(invalid(format!("linear system must be underdetermined or square, got {m}x{n}")));
        }
        if b.len() != m {
            return Err(invalid(format!("right-hand side has {} entries for {m} rows", b.len())));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("linear system contains non-finite values"));
        }
        Ok(LinearSystem { a, b })
    }

    pub fn a(&self) -> ArrayView2<'_, f64> {
        self.a.view()
    }

    pub fn b(&self) -> ArrayView1<'_, f64> {
        self.b.view()
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    /// `‖Ax − b‖_∞`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let x = ArrayView1::from(x);
        (&self.a.dot(&x) - &self.b).iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Returns a minimum-L1 solution of the system.
///
/// Fails with [`Error::Infeasible`] when phase one cannot drive the artificial
/// variables to zero and with [`Error::NoConvergence`] after `10·(m+n)²` pivots.
pub fn solve_basis_pursuit(sys: &LinearSystem) -> Result<Vec<f64>> {
    let (m, n) = sys.a.dim();
    if sys.b.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; n]);
    }
    let mut tab = Tableau::new(sys);
    let cap = 10 * (m + n) * (m + n);

    // Phase one: minimize the sum of artificials.
    tab.run(cap, tab.real_cols())?;
    let infeasibility = -tab.obj[tab.rhs_col()];
    let b_scale = sys.b.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    if infeasibility > FEASIBILITY_TOL * b_scale {
        return Err(Error::Infeasible { objective: infeasibility });
    }
    tab.evict_artificials();

    // Phase two: minimize Σu over the real columns only.
    tab.set_phase_two_objective();
    tab.run(cap, tab.real_cols())?;

    let x = tab.solution();
    // Re-solve the final basis against the original data to shed accumulated
    // tableau round-off; keep whichever solution has the smaller residual.
    match tab.refined_solution(sys) {
        Some(refined) if sys.residual(&refined) < sys.residual(&x) => Ok(refined),
        _ => Ok(x),
    }
}

struct Tableau {
    m: usize,
    n: usize,
    width: usize,
    /// Row-major `m × width`; the last column holds the right-hand side.
    rows: Vec<f64>,
    /// Reduced costs; the last entry is minus the current objective value.
    obj: Vec<f64>,
    basis: Vec<usize>,
    /// `-1.0` where row `r` was negated to make its right-hand side nonnegative.
    row_sign: Vec<f64>,
    /// The initial tableau rows, `m × width`.
    original: Array2<f64>,
    /// Cost of every column in the current phase.
    costs: Vec<f64>,
    pivots: usize,
    since_reinvert: usize,
}

impl Tableau {
    fn new(sys: &LinearSystem) -> Self {
        let (m, n) = sys.a.dim();
        let width = 2 * n + m + 1;
        let mut rows = vec![0.0; m * width];
        let mut row_sign = vec![1.0; m];
        for r in 0..m {
            let sign = if sys.b[r] < 0.0 { -1.0 } else { 1.0 };
            row_sign[r] = sign;
            let row = &mut rows[r * width..(r + 1) * width];
            for j in 0..n {
                row[j] = sign * sys.a[[r, j]];
                row[n + j] = -sign * sys.a[[r, j]];
            }
            row[2 * n + r] = 1.0;
            row[width - 1] = sign * sys.b[r];
        }
        let mut obj = vec![0.0; width];
        for r in 0..m {
            let row = &rows[r * width..(r + 1) * width];
            for j in 0..(2 * n) {
                obj[j] -= row[j];
            }
            obj[width - 1] -= row[width - 1];
        }
        let original = Array2::from_shape_vec((m, width), rows.clone()).expect("shape matches");
        let costs = (0..width - 1).map(|j| if j >= 2 * n { 1.0 } else { 0.0 }).collect();
        Tableau {
            m,
            n,
            width,
            rows,
            obj,
            basis: (0..m).map(|r| 2 * n + r).collect(),
            row_sign,
            original,
            costs,
            pivots: 0,
            since_reinvert: 0,
        }
    }

    /// Recomputes `B⁻¹[A | b]` and the reduced costs from the original data,
    /// discarding the round-off accumulated by pivoting. Returns `false` if
    /// the basis matrix is numerically singular.
    fn reinvert(&mut self) -> bool {
        let mut basis_matrix = Array2::zeros((self.m, self.m));
        for (pos, &var) in self.basis.iter().enumerate() {
            basis_matrix.column_mut(pos).assign(&self.original.column(var));
        }
        let Some(fresh) = lu_solve_many(basis_matrix.view(), self.original.clone()) else {
            return false;
        };
        self.rows = fresh.into_raw_vec_and_offset().0;
        for (r, &var) in self.basis.clone().iter().enumerate() {
            for i in 0..self.m {
                self.rows[i * self.width + var] = if i == r { 1.0 } else { 0.0 };
            }
        }
        self.price_out();
        self.since_reinvert = 0;
        true
    }

    /// Sets the objective row to the reduced costs of `self.costs` under the
    /// current basis.
    fn price_out(&mut self) {
        let w = self.width;
        self.obj = self.costs.clone();
        self.obj.push(0.0);
        for r in 0..self.m {
            let c = self.costs[self.basis[r]];
            if c == 0.0 {
                continue;
            }
            for j in 0..w {
                self.obj[j] -= c * self.rows[r * w + j];
            }
        }
        for &b in &self.basis {
            self.obj[b] = 0.0;
        }
    }

    fn real_cols(&self) -> usize {
        2 * self.n
    }

    fn rhs_col(&self) -> usize {
        self.width - 1
    }

    fn at(&self, r: usize, j: usize) -> f64 {
        self.rows[r * self.width + j]
    }

    /// Pivots under Bland's rule until optimal, considering only columns `< allowed`.
    fn run(&mut self, cap: usize, allowed: usize) -> Result<()> {
        let mut fresh = false;
        loop {
            if self.since_reinvert >= REINVERT_INTERVAL {
                if !self.reinvert() {
                    return Err(invalid("simplex basis became singular"));
                }
                fresh = true;
            }
            let Some(enter) = (0..allowed).find(|&j| self.obj[j] < -OPTIMALITY_TOL) else {
                return Ok(());
            };
            let rhs = self.rhs_col();
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.at(r, enter);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.at(r, rhs).max(0.0) / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((best, best_ratio)) => {
                        let tie = (ratio - best_ratio).abs() <= 1e-12 * (1.0 + best_ratio.abs());
                        if ratio < best_ratio && !tie || tie && self.basis[r] < self.basis[best] {
                            Some((r, ratio))
                        } else {
                            Some((best, best_ratio))
                        }
                    }
                };
            }
            let Some((leave_row, _)) = leave else {
                // The objective is bounded below by zero, so this only happens
                // when round-off has corrupted the tableau.
                if fresh || !self.reinvert() {
                    return Err(invalid("simplex tableau became unbounded"));
                }
                fresh = true;
                continue;
            };
            if self.pivots >= cap {
                return Err(Error::NoConvergence {
                    iterations: self.pivots,
                    residual: -self.obj[rhs],
                    history: Vec::new(),
                });
            }
            self.pivot(leave_row, enter);
            fresh = false;
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.at(r, c);
        for v in &mut self.rows[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.rows[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.rows[i * w + c];
            if f == 0.0 {
                continue;
            }
            for (dst, src) in self.rows[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                *dst -= f * src;
            }
            self.rows[i * w + c] = 0.0;
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (dst, src) in self.obj.iter_mut().zip(&pivot_row) {
                *dst -= f * src;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
        self.since_reinvert += 1;
    }

    /// Pivots artificial variables (at zero level) out of the basis where a real
    /// column can replace them. Rows with no such column are redundant and keep
    /// their artificial, which never re-enters.
    fn evict_artificials(&mut self) {
        let real = self.real_cols();
        for r in 0..self.m {
            if self.basis[r] < real {
                continue;
            }
            let candidate = (0..real)
                .filter(|&j| self.at(r, j).abs() > 1e-9)
                .max_by(|&a, &b| self.at(r, a).abs().total_cmp(&self.at(r, b).abs()));
            if let Some(j) = candidate {
                self.pivot(r, j);
            }
        }
    }

    fn set_phase_two_objective(&mut self) {
        let real = self.real_cols();
        self.costs = (0..self.width - 1).map(|j| if j < real { 1.0 } else { 0.0 }).collect();
        self.price_out();
    }

    fn solution(&self) -> Vec<f64> {
        let mut u = vec![0.0; 2 * self.n];
        let rhs = self.rhs_col();
        for r in 0..self.m {
            if self.basis[r] < 2 * self.n {
                u[self.basis[r]] = self.at(r, rhs).max(0.0);
            }
        }
        (0..self.n).map(|j| u[j] - u[self.n + j]).collect()
    }

    fn refined_solution(&self, sys: &LinearSystem) -> Option<Vec<f64>> {
        let (m, n) = (self.m, self.n);
        let mut basis_matrix = Array2::zeros((m, m));
        for (pos, &var) in self.basis.iter().enumerate() {
            if var < n {
                basis_matrix.column_mut(pos).assign(&sys.a.column(var));
            } else if var < 2 * n {
                basis_matrix.column_mut(pos).assign(&sys.a.column(var - n).mapv(|v| -v));
            } else {
                let q = var - 2 * n;
                basis_matrix[[q, pos]] = self.row_sign[q];
            }
        }
        let u = lu_solve(basis_matrix.view(), sys.b.view())?;
        let mut x = vec![0.0; n];
        for (pos, &var) in self.basis.iter().enumerate() {
            if var < n {
                x[var] += u[pos];
            } else if var < 2 * n {
                x[var - n] -= u[pos];
            }
        }
        Some(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::brute_force_basis_pursuit;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn l1(x: &[f64]) -> f64 {
        x.iter().map(|v| v.abs()).sum()
    }

    #[test]
    fn identity_system() {
        let sys = LinearSystem::new(Array2::eye(3), array![1.0, -2.0, 0.0]).unwrap();
        let x = solve_basis_pursuit(&sys).unwrap();
        assert_eq!(x.len(), 3);
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[2], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l1(&x), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn shared_column_is_cheaper() {
        let sys = LinearSystem::new(array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]], array![1.0, 1.0]).unwrap();
        let x = solve_basis_pursuit(&sys).unwrap();
        assert_abs_diff_eq!(x[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[2], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(brute_force_basis_pursuit(&sys).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_rhs() {
        let sys = LinearSystem::new(array![[1.0, 2.0, 3.0]], array![0.0]).unwrap();
        assert_eq!(solve_basis_pursuit(&sys).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn infeasible_system_detected() {
        // Rank-deficient rows with inconsistent right-hand side.
        let sys = LinearSystem::new(array![[1.0, 1.0], [1.0, 1.0]], array![1.0, 2.0]).unwrap();
        assert!(matches!(solve_basis_pursuit(&sys), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        let sys = LinearSystem::new(array![[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]], array![2.0, 4.0]).unwrap();
        let x = solve_basis_pursuit(&sys).unwrap();
        assert!(sys.residual(&x) < 1e-10);
        assert_abs_diff_eq!(l1(&x), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn shape_validation() {
        assert!(LinearSystem::new(Array2::zeros((3, 2)), Array1::zeros(3)).is_err());
        assert!(LinearSystem::new(Array2::zeros((2, 2)), Array1::zeros(3)).is_err());
        assert!(LinearSystem::new(array![[f64::NAN]], array![1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_enumeration(
            m in 1usize..=4,
            extra in 0usize..=4,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let n = m + extra;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..1.0));
            let x0 = Array1::from_shape_fn(n, |_| if rng.random_bool(0.5) { rng.random_range(-2.0..2.0) } else { 0.0 });
            let b = a.dot(&x0);
            let sys = LinearSystem::new(a, b.clone()).unwrap();
            let x = solve_basis_pursuit(&sys).unwrap();
            let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(sys.residual(&x) <= 1e-8 * (1.0 + bnorm));
            let best = brute_force_basis_pursuit(&sys).unwrap();
            prop_assert!((l1(&x) - best).abs() <= 1e-8, "simplex {} vs enumeration {}", l1(&x), best);
        }
    }
}
