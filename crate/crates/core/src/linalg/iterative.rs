//! Krylov solvers (preconditioned BiCGStab and CG) wrapped in iterative
//! refinement on the true residual, so that tight tolerances are reached even
//! when the recursive residual drifts.

use crate::error::{Error, Result};
use crate::real::{dot, norm2, Real};

/// Linear map `y = A x` on dense vectors.
pub type Operator<'a, T> = &'a (dyn Fn(&[T], &mut [T]) + Sync);

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    /// Target relative residual `‖b − A x‖ / ‖b‖`.
    pub rtol: f64,
    /// Budget of inner Krylov iterations summed over refinement passes.
    pub max_iter: usize,
}

impl SolveOptions {
    pub fn new(rtol: f64, max_iter: usize) -> Self {
        Self { rtol, max_iter }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final relative residual measured on the true residual.
    pub residual: f64,
}

fn residual<T: Real>(op: Operator<T>, b: &[T], x: &[T], r: &mut [T]) {
    op(x, r);
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

/// One BiCGStab pass with right preconditioning on `A d = r0`, starting at
/// `d = 0`. Returns the iteration count.
fn bicgstab_pass<T: Real>(
    op: Operator<T>,
    precond: Operator<T>,
    r0: &[T],
    d: &mut [T],
    rtol: T,
    max_iter: usize,
) -> Result<usize> {
    let n = r0.len();
    d.iter_mut().for_each(|v| *v = T::zero());
    let mut r = r0.to_vec();
    let rhat = r0.to_vec();
    let bnorm = norm2(r0);
    if bnorm == T::zero() {
        return Ok(0);
    }
    let (mut rho, mut alpha, mut omega) = (T::one(), T::one(), T::one());
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut phat = vec![T::zero(); n];
    let mut shat = vec![T::zero(); n];
    let mut s = vec![T::zero(); n];
    let mut t = vec![T::zero(); n];
    for it in 1..=max_iter {
        let rho_new = dot(&rhat, &r);
        if rho_new.abs() <= T::min_positive_value() {
            return Err(Error::Breakdown {
                solver: "bicgstab",
                detail: "rho vanished".into(),
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond(&p, &mut phat);
        op(&phat, &mut v);
        let denom = dot(&rhat, &v);
        if denom.abs() <= T::min_positive_value() {
            return Err(Error::Breakdown {
                solver: "bicgstab",
                detail: "r̂·v vanished".into(),
            });
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) <= rtol * bnorm {
            for i in 0..n {
                d[i] = d[i] + alpha * phat[i];
            }
            return Ok(it);
        }
        precond(&s, &mut shat);
        op(&shat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > T::zero() { dot(&t, &s) / tt } else { T::zero() };
        for i in 0..n {
            d[i] = d[i] + alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm2(&r) <= rtol * bnorm {
            return Ok(it);
        }
        if omega == T::zero() {
            return Err(Error::Breakdown {
                solver: "bicgstab",
                detail: "omega vanished".into(),
            });
        }
    }
    Ok(max_iter)
}

/// One preconditioned CG pass for a symmetric positive semidefinite system.
fn cg_pass<T: Real>(
    op: Operator<T>,
    precond: Operator<T>,
    r0: &[T],
    d: &mut [T],
    rtol: T,
    max_iter: usize,
) -> Result<usize> {
    let n = r0.len();
    d.iter_mut().for_each(|v| *v = T::zero());
    let bnorm = norm2(r0);
    if bnorm == T::zero() {
        return Ok(0);
    }
    let mut r = r0.to_vec();
    let mut z = vec![T::zero(); n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        op(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= T::zero() {
            return Err(Error::Breakdown {
                solver: "cg",
                detail: "operator not positive on search direction".into(),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            d[i] = d[i] + alpha * p[i];
            r[i] = r[i] - alpha * ap[i];
        }
        if norm2(&r) <= rtol * bnorm {
            return Ok(it);
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(max_iter)
}

#[derive(Clone, Copy)]
enum Method {
    BiCgStab,
    Cg,
}

fn refine<T: Real>(
    method: Method,
    op: Operator<T>,
    precond: Operator<T>,
    b: &[T],
    x: &mut [T],
    opts: SolveOptions,
) -> Result<SolveStats> {
    let name = match method {
        Method::BiCgStab => "bicgstab",
        Method::Cg => "cg",
    };
    let n = b.len();
    let bnorm = norm2(b).to_f64_lossy();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(SolveStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let mut iterations = 0usize;
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    let inner_tol = T::of(1e-9_f64.max(opts.rtol));
    loop {
        residual(op, b, x, &mut r);
        let rel = norm2(&r).to_f64_lossy() / bnorm;
        if rel <= opts.rtol {
            return Ok(SolveStats {
                iterations,
                residual: rel,
            });
        }
        if rel > 0.5 * best {
            stalled += 1;
        } else {
            stalled = 0;
        }
        best = best.min(rel);
        if stalled >= 3 || iterations >= opts.max_iter {
            if rel <= 1e3 * opts.rtol {
                return Ok(SolveStats {
                    iterations,
                    residual: rel,
                });
            }
            return Err(Error::NoConvergence {
                solver: name,
                iterations,
                residual: rel,
            });
        }
        let budget = opts.max_iter - iterations;
        // Only ask a pass for the reduction still missing, with some margin.
        let pass_tol = inner_tol.max(T::of((0.1 * opts.rtol / rel).min(0.5)));
        let used = match method {
            Method::BiCgStab => bicgstab_pass(op, precond, &r, &mut d, pass_tol, budget)?,
            Method::Cg => cg_pass(op, precond, &r, &mut d, pass_tol, budget)?,
        };
        iterations += used.max(1);
        for i in 0..n {
            x[i] = x[i] + d[i];
        }
    }
}

/// Solve a nonsymmetric system with right-preconditioned BiCGStab.
/// `x` holds the initial guess on entry and the solution on exit.
pub fn bicgstab<T: Real>(
    op: Operator<T>,
    precond: Operator<T>,
    b: &[T],
    x: &mut [T],
    opts: SolveOptions,
) -> Result<SolveStats> {
    refine(Method::BiCgStab, op, precond, b, x, opts)
}

/// Solve a symmetric positive (semi)definite system with preconditioned CG.
/// For singular but consistent systems the iterate stays in the range of the
/// initial guess plus the Krylov space, so the caller fixes the gauge.
pub fn conjugate_gradient<T: Real>(
    op: Operator<T>,
    precond: Operator<T>,
    b: &[T],
    x: &mut [T],
    opts: SolveOptions,
) -> Result<SolveStats> {
    refine(Method::Cg, op, precond, b, x, opts)
}
