//! Oracle-equivalence suite behind the `selfcheck` subcommand. Each check
//! compares a production routine against an independent reference on
//! seeded random instances.

use anyhow::Result;
use interprop::inter::{label_propagation, Side};
use interprop::numerics::{solve_basis_pursuit, LinearSystem};
use interprop::oracle::{brute_force_basis_pursuit, dense_label_propagation};
use interprop::retrieval::{average_precision, Query, RankedList};
use interprop::sparse_graphs::constraint_laplacian;
use interprop::synthetic::{random_constraints, random_knn_similarity};
use interprop::{closed_form_inter, evaluate_map, intra_constraints_from_labels, propagate_inter, Direction};
use interprop::{PropagationField, PropagationParams};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn rel_gap(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    frob(&(a - b)) / frob(b).max(f64::MIN_POSITIVE)
}

pub fn run(seed: u64) -> Result<Vec<Check>> {
    Ok(vec![
        inter_vs_closed_form(seed)?,
        label_propagation_vs_dense(seed)?,
        basis_pursuit_vs_enumeration(seed),
        constraint_factor(seed)?,
        average_precision_examples()?,
    ])
}

fn inter_vs_closed_form(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for beta in [0.0, 0.5, 0.95] {
        for alpha in [0.025, 0.1] {
            let sx = random_knn_similarity(30, 6, 5, &mut rng)?;
            let sy = random_knn_similarity(20, 4, 5, &mut rng)?;
            let z = random_constraints(30, 20, 0.15, &mut rng);
            let p = PropagationParams {
                alpha_x: alpha,
                alpha_y: alpha,
                beta,
                inner_tol: 1e-13,
                outer_tol: 1e-11,
                max_inner_iters: 100_000,
                max_outer_iters: 5_000,
            };
            let it = propagate_inter(&sx, &sy, &z, &p)?;
            let cf = closed_form_inter(&sx, &sy, &z, &p)?;
            worst = worst.max(rel_gap(it.field.values(), cf.field.values()));
        }
    }
    Ok(Check {
        name: "inter-view propagation matches the closed form",
        pass: worst <= 1e-5,
        detail: format!("max relative gap {worst:.2e}"),
    })
}

fn label_propagation_vs_dense(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let n = rng.random_range(8..40);
        let c = rng.random_range(1..6);
        let s = random_knn_similarity(n, 3, 4.min(n - 1), &mut rng)?;
        let alpha = rng.random_range(0.05..0.95);
        let y = Array2::from_shape_fn((n, c), |_| rng.random_range(-1.0..1.0));
        let dense = s.matrix().to_dense();
        let left = label_propagation(s.matrix(), Side::Left, alpha, y.view(), None, 1e-14, 100_000)?;
        worst = worst.max(rel_gap(&left.field, &dense_label_propagation(dense.view(), y.view(), alpha)));
        let yt = y.t().to_owned();
        let right = label_propagation(s.matrix(), Side::Right, alpha, yt.view(), None, 1e-14, 100_000)?;
        let expect = dense_label_propagation(dense.view(), y.view(), alpha).t().to_owned();
        worst = worst.max(rel_gap(&right.field, &expect));
    }
    Ok(Check {
        name: "label propagation matches dense elimination",
        pass: worst <= 1e-8,
        detail: format!("max relative gap {worst:.2e}"),
    })
}

fn basis_pursuit_vs_enumeration(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let mut worst = 0.0f64;
    let mut disagreements = 0;
    for _ in 0..50 {
        let m = rng.random_range(1..=5);
        let n = rng.random_range(m..=10);
        let a = Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..1.0));
        let b = Array1::from_shape_fn(m, |_| rng.random_range(-1.0..1.0));
        let Ok(sys) = LinearSystem::new(a, b) else {
            disagreements += 1;
            continue;
        };
        match (solve_basis_pursuit(&sys), brute_force_basis_pursuit(&sys)) {
            (Ok(x), Some(best)) => {
                let obj: f64 = x.iter().map(|v| v.abs()).sum();
                worst = worst.max((obj - best).abs()).max(sys.residual(&x));
            }
            (Err(_), None) => {}
            _ => disagreements += 1,
        }
    }
    Check {
        name: "basis pursuit matches vertex enumeration",
        pass: disagreements == 0 && worst <= 1e-8,
        detail: format!("max objective gap or residual {worst:.2e}, {disagreements} disagreements"),
    }
}

fn constraint_factor(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(4..=20);
        let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let z = intra_constraints_from_labels(&labels, Some(rng.random_range(1..=4)), rng.random())?;
        let k = rng.random_range(2..=n.min(10));
        let nbhd = rand::seq::index::sample(&mut rng, n, k).into_vec();
        let cl = constraint_laplacian(&z, &nbhd)?;
        let a = Array1::from_shape_fn(k, |_| rng.random_range(-1.0..1.0));
        let ca = cl.factor.dot(&a);
        worst = worst.max((ca.dot(&ca) - a.dot(&cl.laplacian.dot(&a))).abs());
    }
    Ok(Check {
        name: "constraint Laplacian factor reproduces the quadratic form",
        pass: worst <= 1e-8,
        detail: format!("max gap {worst:.2e}"),
    })
}

fn average_precision_examples() -> Result<Check> {
    let ranked = RankedList { query: Query::x(0), results: vec![(0, 0.9), (1, 0.5), (2, 0.1)] };
    let ap = average_precision(&ranked, &[0, 2])?;
    let lx = [0u32, 1, 2, 0];
    let ly = [1u32, 0, 2];
    let block = Array2::from_shape_fn((4, 3), |(i, j)| if lx[i] == ly[j] { 1.0 } else { -1.0 });
    let r = evaluate_map(&PropagationField::new(block)?, &lx, &ly, Direction::Both)?;
    Ok(Check {
        name: "average precision hand examples",
        pass: ap == 5.0 / 6.0 && r.map_average == 1.0,
        detail: format!("AP {ap} (expect 5/6), block MAP {:.3}", r.map_average),
    })
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run(42).unwrap() {
            assert!(c.pass, "{}: {}", c.name, c.detail);
        }
    }
}
