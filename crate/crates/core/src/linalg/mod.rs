//! Linear algebra kernels: sparse storage, Krylov solvers, small dense matrices.

pub mod bordered;
pub mod dense;
pub mod iterative;
pub mod sparse;

pub use bordered::solve_bordered;
pub use dense::Matrix;
pub use iterative::{bicgstab, conjugate_gradient, SolveOptions, SolveStats};
pub use sparse::{CsrMatrix, Ilu0};
