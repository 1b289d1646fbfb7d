//! Dense numerical kernels: basis pursuit by simplex, Jacobi eigendecomposition,
//! and small direct solvers.

mod dense;
mod eigen;
mod simplex;

pub use dense::{cholesky_solve, lu_solve, lu_solve_many, Cholesky};
pub use eigen::{symmetric_eig, EigenPair};
pub use simplex::{solve_basis_pursuit, LinearSystem};
