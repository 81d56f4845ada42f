//! Sparse solves with a rank-one border, used to pin the gauge of singular
//! generator systems without densifying them.

use crate::error::Result;
use crate::linalg::iterative::{bicgstab, SolveOptions, SolveStats};
use crate::linalg::sparse::{CsrMatrix, Ilu0};
use crate::real::{dot, Real};

/// Solve `(A + u vᵀ) x = b` by BiCGStab, preconditioned with ILU(0) of a
/// slightly shifted `A`. `x` holds the initial guess on entry.
pub fn solve_bordered<T: Real>(
    a: &CsrMatrix<T>,
    u: &[T],
    v: &[T],
    b: &[T],
    x: &mut [T],
    opts: SolveOptions,
) -> Result<SolveStats> {
    let n = a.nrows();
    let shift = T::of(1e-8) * a.norm_inf().max(T::one());
    let ilu = Ilu0::new(&a.add_diagonal(&vec![shift; n]));
    let op = |y: &[T], out: &mut [T]| {
        a.mul_vec_into(y, out);
        let s = dot(v, y);
        for i in 0..n {
            out[i] = out[i] + u[i] * s;
        }
    };
    let pc = |r: &[T], z: &mut [T]| ilu.apply(r, z);
    bicgstab(&op, &pc, b, x, opts)
}
