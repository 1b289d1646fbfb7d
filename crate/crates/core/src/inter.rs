//! Alternating inter-view constraint propagation.
//!
//! The propagated field minimizes
//!
//! ```text
//! ‖F_X − Z‖² + μ_X tr(F_Xᵀ L_X F_X) + ‖F_Y − Z‖² + μ_Y tr(F_Y L_Y F_Yᵀ) + γ ‖F_X − F_Y‖²
//! ```
//!
//! by alternating two label-propagation solves: the X-side diffuses the columns
//! of `(1−β)Z + βF_Y` over the X graph, the Y-side diffuses the rows of
//! `(1−β)Z + βF_X` over the Y graph. The result is `(F_X + F_Y) / 2`.
//!
//! Parameters map as `α = μ̂/(1+μ̂)` and `β = γ/(1+γ)` with `μ̂ = μ/(1+γ)`.

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rayon::prelude::*;

use crate::affinity::NormalizedSimilarity;
use crate::error::{invalid, Error, Result};
use crate::model::{mu_hat, ConstraintMatrix, PropagationField, PropagationParams};
use crate::numerics::Cholesky;
use crate::sparse::CsrMatrix;

/// Largest view size the dense closed-form solver accepts.
pub const CLOSED_FORM_LIMIT: usize = 2000;

/// Which side of the field the similarity multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `F ← α S F + (1−α) Y`: diffuses each column over the row items.
    Left,
    /// `F ← α F S + (1−α) Y`: diffuses each row over the column items.
    Right,
}

/// Result of one label-propagation solve.
#[derive(Debug, Clone)]
pub struct InnerSolve {
    pub field: Array2<f64>,
    /// Relative Frobenius change after each iteration.
    pub residuals: Vec<f64>,
}

/// Iterates `F(t+1) = α S F(t) + (1−α) Y` (or the right-sided form) from
/// `init` until the relative Frobenius change drops below `tol`. The fixed
/// point is `(1−α)(I − αS)⁻¹ Y`.
pub fn label_propagation(
    s: &CsrMatrix,
    side: Side,
    alpha: f64,
    target: ArrayView2<f64>,
    init: Option<Array2<f64>>,
    tol: f64,
    max_iters: usize,
) -> Result<InnerSolve> {
    let f = init.unwrap_or_else(|| Array2::zeros(target.dim()));
    if f.dim() != target.dim() {
        return Err(invalid("initial field does not match target shape"));
    }
    match side {
        Side::Left => propagate_columns(s, alpha, target, f, tol, max_iters),
        Side::Right => {
            // F S = (Sᵀ Fᵀ)ᵀ: iterate on the transposed field so every update
            // walks contiguous rows.
            let transposed = |a: ArrayView2<f64>| a.t().as_standard_layout().into_owned();
            let mut solve = propagate_columns(
                &s.transpose(),
                alpha,
                transposed(target).view(),
                transposed(f.view()),
                tol,
                max_iters,
            );
            if let Ok(r) = solve.as_mut() {
                r.field = transposed(r.field.view());
            }
            solve
        }
    }
}

fn propagate_columns(
    s: &CsrMatrix,
    alpha: f64,
    target: ArrayView2<f64>,
    mut f: Array2<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<InnerSolve> {
    let mut next = Array2::zeros(f.dim());
    let mut residuals = Vec::new();
    for _ in 0..max_iters {
        let change = propagation_step(s, alpha, target, f.view(), &mut next);
        residuals.push(change);
        std::mem::swap(&mut f, &mut next);
        if change < tol {
            return Ok(InnerSolve { field: f, residuals });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
        history: residuals,
    })
}

/// One step `α S F + (1−α) Y` written into `next`, returning the relative
/// change. Each output row is produced, finished and measured in one pass
/// while it is still in cache.
fn propagation_step(
    s: &CsrMatrix,
    alpha: f64,
    target: ArrayView2<f64>,
    f: ArrayView2<f64>,
    next: &mut Array2<f64>,
) -> f64 {
    let (diff, n_new, n_old) = next
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(target.axis_iter(Axis(0)))
        .zip(f.axis_iter(Axis(0)))
        .enumerate()
        .map(|(i, ((mut out, y), old))| {
            out.fill(0.0);
            for (j, v) in s.row(i) {
                out.scaled_add(v, &f.row(j));
            }
            let mut acc = (0.0, 0.0, 0.0);
            Zip::from(&mut out).and(&y).and(&old).for_each(|n, &y, &o| {
                *n = alpha * *n + (1.0 - alpha) * y;
                acc.0 += (*n - o) * (*n - o);
                acc.1 += *n * *n;
                acc.2 += o * o;
            });
            acc
        })
        .reduce(|| (0.0, 0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let denom = f64::max(n_new, n_old);
    if denom == 0.0 {
        0.0
    } else {
        (diff / denom).sqrt()
    }
}

/// Per-outer-round convergence record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceLog {
    /// Joint relative change of `(F_X, F_Y)` after each outer round.
    pub outer_residuals: Vec<f64>,
    /// Inner iteration counts `(x_side, y_side)` per outer round.
    pub inner_iterations: Vec<(usize, usize)>,
}

impl ConvergenceLog {
    pub fn outer_iterations(&self) -> usize {
        self.outer_residuals.len()
    }
}

#[derive(Debug, Clone)]
pub struct InterOutcome {
    pub field: PropagationField,
    pub fx: Array2<f64>,
    pub fy: Array2<f64>,
    pub log: ConvergenceLog,
}

fn check_dims(sx: &NormalizedSimilarity, sy: &NormalizedSimilarity, z: &ConstraintMatrix) -> Result<()> {
    if z.rows() != sx.len() || z.cols() != sy.len() {
        return Err(invalid(format!(
            "constraints are {}x{} but the graphs have {} and {} items",
            z.rows(),
            z.cols(),
            sx.len(),
            sy.len()
        )));
    }
    Ok(())
}

/// Runs the alternating scheme with a caller-supplied pair of side solvers.
/// Shared by the iterative and the closed-form variants.
pub(crate) fn alternate(
    z: &Array2<f64>,
    beta: f64,
    outer_tol: f64,
    max_outer: usize,
    mut solve_x: impl FnMut(&Array2<f64>, &Array2<f64>) -> Result<(Array2<f64>, usize)>,
    mut solve_y: impl FnMut(&Array2<f64>, &Array2<f64>) -> Result<(Array2<f64>, usize)>,
) -> Result<(Array2<f64>, Array2<f64>, ConvergenceLog)> {
    let mut fx = Array2::zeros(z.dim());
    let mut fy = Array2::zeros(z.dim());
    let mut log = ConvergenceLog::default();
    let coupled = |other: &Array2<f64>| -> Array2<f64> {
        let mut t = z * (1.0 - beta);
        t.scaled_add(beta, other);
        t
    };
    for _ in 0..max_outer {
        let (fx_new, it_x) = solve_x(&coupled(&fy), &fx)?;
        let (fy_new, it_y) = solve_y(&coupled(&fx_new), &fy)?;
        let diff = sq_dist(&fx_new, &fx) + sq_dist(&fy_new, &fy);
        let norm = sq_norm(&fx_new) + sq_norm(&fy_new);
        let change = if norm == 0.0 { 0.0 } else { (diff / norm).sqrt() };
        log.outer_residuals.push(change);
        log.inner_iterations.push((it_x, it_y));
        fx = fx_new;
        fy = fy_new;
        if change < outer_tol {
            return Ok((fx, fy, log));
        }
    }
    Err(Error::NoConvergence {
        iterations: max_outer,
        residual: log.outer_residuals.last().copied().unwrap_or(f64::INFINITY),
        history: log.outer_residuals,
    })
}

fn sq_dist(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    Zip::from(a).and(b).for_each(|&x, &y| acc += (x - y) * (x - y));
    acc
}

fn sq_norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Inter-view constraint propagation by alternating label propagation.
///
/// Each X-side solve warm-starts from the previous `F_X`, and each Y-side
/// solve from the previous `F_Y`; the first round starts from zero.
pub fn propagate_inter(
    sx: &NormalizedSimilarity,
    sy: &NormalizedSimilarity,
    z: &ConstraintMatrix,
    p: &PropagationParams,
) -> Result<InterOutcome> {
    p.validate()?;
    check_dims(sx, sy, z)?;
    let zd = z.to_dense();
    let (fx, fy, log) = alternate(
        &zd,
        p.beta,
        p.outer_tol,
        p.max_outer_iters,
        |target, prev| {
            let r = label_propagation(
                sx.matrix(),
                Side::Left,
                p.alpha_x,
                target.view(),
                Some(prev.clone()),
                p.inner_tol,
                p.max_inner_iters,
            )?;
            Ok((r.field, r.residuals.len()))
        },
        |target, prev| {
            let r = label_propagation(
                sy.matrix(),
                Side::Right,
                p.alpha_y,
                target.view(),
                Some(prev.clone()),
                p.inner_tol,
                p.max_inner_iters,
            )?;
            Ok((r.field, r.residuals.len()))
        },
    )?;
    finish(fx, fy, log)
}

fn finish(fx: Array2<f64>, fy: Array2<f64>, log: ConvergenceLog) -> Result<InterOutcome> {
    let field = PropagationField::new((&fx + &fy) * 0.5)?;
    Ok(InterOutcome { field, fx, fy, log })
}

/// Same alternation as [`propagate_inter`], but each side is solved exactly:
/// `F_X = (I + μ̂_X L_X)⁻¹ T_X` and `F_Y = T_Y (I + μ̂_Y L_Y)⁻¹` with
/// `μ̂ = α/(1−α)` and `L = I − S`. Dense, so limited to
/// [`CLOSED_FORM_LIMIT`] items per view.
pub fn closed_form_inter(
    sx: &NormalizedSimilarity,
    sy: &NormalizedSimilarity,
    z: &ConstraintMatrix,
    p: &PropagationParams,
) -> Result<InterOutcome> {
    p.validate()?;
    check_dims(sx, sy, z)?;
    let (n, m) = (sx.len(), sy.len());
    if n > CLOSED_FORM_LIMIT || m > CLOSED_FORM_LIMIT {
        return Err(Error::TooLarge { rows: n, cols: m, limit: CLOSED_FORM_LIMIT });
    }
    let chol_x = regularized_factor(sx, mu_hat(p.alpha_x))?;
    let chol_y = regularized_factor(sy, mu_hat(p.alpha_y))?;
    let (fx, fy, log) = alternate(
        &z.to_dense(),
        p.beta,
        p.outer_tol,
        p.max_outer_iters,
        |target, _| Ok((chol_x.solve(target.view()), 1)),
        |target, _| Ok((chol_y.solve(target.t()).reversed_axes(), 1)),
    )?;
    finish(fx, fy, log)
}

/// Cholesky factor of `I + μ̂ L`.
pub(crate) fn regularized_factor(s: &NormalizedSimilarity, mu_hat: f64) -> Result<Cholesky> {
    let mut a = s.laplacian_dense() * mu_hat;
    for i in 0..s.len() {
        a[[i, i]] += 1.0;
    }
    Cholesky::new(a.view()).ok_or_else(|| invalid("I + mu*L is not positive definite"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::{symmetric_normalize, symmetrize};
    use crate::model::{ConstraintKind, Sign};
    use crate::oracle::dense_label_propagation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `‖new − old‖ / max(‖new‖, ‖old‖)`, zero when both vanish.
    fn relative_change(new: &Array2<f64>, old: &Array2<f64>) -> f64 {
        let mut diff = 0.0;
        let mut n_new = 0.0;
        let mut n_old = 0.0;
        Zip::from(new).and(old).for_each(|&a, &b| {
            diff += (a - b) * (a - b);
            n_new += a * a;
            n_old += b * b;
        });
        let denom = f64::max(n_new, n_old);
        if denom == 0.0 {
            0.0
        } else {
            (diff / denom).sqrt()
        }
    }

    fn random_graph(n: usize, k: usize, rng: &mut ChaCha8Rng) -> NormalizedSimilarity {
        let mut triplets = Vec::new();
        for i in 0..n {
            for _ in 0..k {
                let j = rng.random_range(0..n);
                if j != i {
                    triplets.push((i, j, rng.random_range(0.1..1.0)));
                }
            }
        }
        let raw = CsrMatrix::from_triplets(n, n, &triplets).unwrap();
        symmetric_normalize(&symmetrize(&raw).unwrap())
    }

    fn random_constraints(n: usize, m: usize, density: f64, rng: &mut ChaCha8Rng) -> ConstraintMatrix {
        let mut entries = Vec::new();
        for i in 0..n {
            for j in 0..m {
                if rng.random_bool(density) {
                    let s = if rng.random_bool(0.5) { Sign::MustLink } else { Sign::CannotLink };
                    entries.push((i, j, s));
                }
            }
        }
        ConstraintMatrix::new(n, m, ConstraintKind::Inter, entries).unwrap()
    }

    fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        Zip::from(a).and(b).fold(0.0, |m, &x, &y| f64::max(m, (x - y).abs()))
    }

    #[test]
    fn zero_constraints_give_zero_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sx = random_graph(8, 3, &mut rng);
        let sy = random_graph(5, 2, &mut rng);
        let z = ConstraintMatrix::empty(8, 5, ConstraintKind::Inter);
        let out = propagate_inter(&sx, &sy, &z, &PropagationParams::default()).unwrap();
        assert!(out.field.values().iter().all(|&v| v == 0.0));
        let out = closed_form_inter(&sx, &sy, &z, &PropagationParams::default()).unwrap();
        assert!(out.field.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vanishing_alpha_copies_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sx = random_graph(10, 3, &mut rng);
        let sy = random_graph(7, 3, &mut rng);
        let z = random_constraints(10, 7, 0.3, &mut rng);
        let p = PropagationParams { alpha_x: 1e-12, alpha_y: 1e-12, beta: 0.0, ..Default::default() };
        let out = propagate_inter(&sx, &sy, &z, &p).unwrap();
        assert!(max_abs_diff(out.field.values(), &z.to_dense()) < 1e-10);
    }

    #[test]
    fn uncoupled_x_side_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sx = random_graph(25, 4, &mut rng);
        let sy = random_graph(12, 3, &mut rng);
        let z = random_constraints(25, 12, 0.2, &mut rng);
        let p = PropagationParams { alpha_x: 0.3, alpha_y: 0.2, beta: 0.0, inner_tol: 1e-12, ..Default::default() };
        let out = propagate_inter(&sx, &sy, &z, &p).unwrap();
        let expected = dense_label_propagation(sx.matrix().to_dense().view(), z.to_dense().view(), 0.3);
        assert!(max_abs_diff(&out.fx, &expected) < 1e-6);
        let expected_y = dense_label_propagation(sy.matrix().to_dense().view(), z.to_dense().t(), 0.2);
        assert!(max_abs_diff(&out.fy, &expected_y.reversed_axes()) < 1e-6);
    }

    #[test]
    fn closed_form_with_zero_beta_is_independent_per_side() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sx = random_graph(15, 3, &mut rng);
        let sy = random_graph(9, 3, &mut rng);
        let z = random_constraints(15, 9, 0.3, &mut rng);
        let p = PropagationParams { alpha_x: 0.4, alpha_y: 0.1, beta: 0.0, ..Default::default() };
        let out = closed_form_inter(&sx, &sy, &z, &p).unwrap();
        assert_eq!(out.log.outer_iterations(), 2);
        // (I + μ̂L) F = Z
        let mut lhs = sx.laplacian_dense().dot(&out.fx) * mu_hat(0.4);
        lhs += &out.fx;
        assert!(max_abs_diff(&lhs, &z.to_dense()) < 1e-10);
    }

    #[test]
    fn iterative_agrees_with_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sx = random_graph(30, 5, &mut rng);
        let sy = random_graph(20, 5, &mut rng);
        let z = random_constraints(30, 20, 0.1, &mut rng);
        let p = PropagationParams {
            alpha_x: 0.1,
            alpha_y: 0.1,
            beta: 0.5,
            inner_tol: 1e-10,
            outer_tol: 1e-10,
            ..Default::default()
        };
        let a = propagate_inter(&sx, &sy, &z, &p).unwrap();
        let b = closed_form_inter(&sx, &sy, &z, &p).unwrap();
        let rel = relative_change(a.field.values(), b.field.values());
        assert!(rel < 1e-5, "relative gap {rel}");
    }

    #[test]
    fn sign_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sx = random_graph(12, 3, &mut rng);
        let sy = random_graph(10, 3, &mut rng);
        let z = random_constraints(12, 10, 0.2, &mut rng);
        let p = PropagationParams { beta: 0.5, ..Default::default() };
        let pos = propagate_inter(&sx, &sy, &z, &p).unwrap();
        let neg = propagate_inter(&sx, &sy, &z.negated(), &p).unwrap();
        assert_eq!(pos.field.values(), &(-neg.field.values()));
    }

    #[test]
    fn inner_residual_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = random_graph(40, 4, &mut rng);
        let y = random_constraints(40, 6, 0.3, &mut rng).to_dense();
        let out = label_propagation(s.matrix(), Side::Left, 0.9, y.view(), None, 1e-10, 1000).unwrap();
        for w in out.residuals[1..].windows(5) {
            assert!(w.windows(2).all(|p| p[1] <= p[0]), "residuals {w:?}");
        }
    }

    #[test]
    fn dimension_mismatch_and_caps() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sx = random_graph(6, 2, &mut rng);
        let sy = random_graph(4, 2, &mut rng);
        let z = ConstraintMatrix::empty(4, 6, ConstraintKind::Inter);
        assert!(matches!(propagate_inter(&sx, &sy, &z, &PropagationParams::default()), Err(Error::InvalidInput(_))));
        let z = random_constraints(6, 4, 0.5, &mut rng);
        let p = PropagationParams { beta: 0.9, max_outer_iters: 2, ..Default::default() };
        match propagate_inter(&sx, &sy, &z, &p) {
            Err(Error::NoConvergence { history, .. }) => assert_eq!(history.len(), 2),
            other => panic!("expected no-convergence, got {other:?}"),
        }
    }

    #[test]
    fn closed_form_size_guard() {
        let big = NormalizedSimilarity::empty(CLOSED_FORM_LIMIT + 1);
        let small = NormalizedSimilarity::empty(2);
        let z = ConstraintMatrix::empty(CLOSED_FORM_LIMIT + 1, 2, ConstraintKind::Inter);
        assert!(matches!(
            closed_form_inter(&big, &small, &z, &PropagationParams::default()),
            Err(Error::TooLarge { .. })
        ));
    }
}
