//! NoLips Bregman proximal-gradient solvers for sparse Poisson inverse
//! problems, with an external-division backward step that promotes sparsity
//! while leaving large coefficients unbiased.

// Parameter checks are written `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod entropy;
pub mod error;
pub mod harness;
pub mod imaging;
pub mod linop;
pub mod losses;
pub mod metrics;
pub mod par;
pub mod shrink;
pub mod solver;

pub use entropy::LegendreKind;
pub use error::{Error, Result};
pub use linop::{CsrMatrix, DenseMatrix, LinearOperator};
pub use losses::{FidelityKind, PoissonModel};
pub use shrink::ExtDivParams;
pub use solver::{solve, Method, SolveOutput, SolverConfig};
