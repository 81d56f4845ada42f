//! Scaled cumulant generating function of the winding as the principal
//! eigenvalue of a tilted generator, and its Legendre transform.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::OneForm;
use crate::linalg::{bicgstab, CsrMatrix, Ilu0, Matrix, SolveOptions};
use crate::model::Model;
use crate::real::{dot, max_abs, Real};

#[derive(Clone, Copy, Debug)]
pub struct SpectralOptions {
    /// Target eigen-residual `‖Aφ − λφ‖_∞ / ‖φ‖_∞`.
    pub eig_tol: f64,
    /// Iteration cap for inverse iteration; `None` means `50·√N`.
    pub max_iter: Option<usize>,
    /// Central finite-difference step for Hessians.
    pub fd_step: f64,
    /// Newton stopping tolerance on `‖h − ∇Λ(c)‖`.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Trust region on `‖c‖`.
    pub c_max: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            eig_tol: 1e-10,
            max_iter: None,
            fd_step: 1e-3,
            newton_tol: 1e-8,
            newton_max_iter: 100,
            c_max: 20.0,
        }
    }
}

/// How the 1-form representing the tilt class was chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum Representative {
    /// `η_c = Σ c_i η_i`.
    Harmonic,
    /// `η_c + du` for the stored potential `u`.
    Shifted(Vec<f64>),
}

/// `A = L + T_ω + diag(𝐋ω + ½|ω|²)` with `T_ω f = ⟨ω, df⟩_m`.
#[derive(Clone, Debug)]
pub struct TiltedOperator<T> {
    pub c: Vec<T>,
    pub matrix: CsrMatrix<T>,
    pub representative: Representative,
}

#[derive(Clone, Debug)]
pub struct ScgfEvaluation<T> {
    pub c: Vec<T>,
    pub lambda: T,
    /// Positive right eigenvector, max-normalized.
    pub right: Vec<T>,
    pub left: Vec<T>,
    pub gradient: Vec<T>,
    pub residual: f64,
    pub left_residual: f64,
    /// Collatz–Wielandt bracket `[min (Aφ)/φ, max (Aφ)/φ]`.
    pub bracket: (f64, f64),
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct RateResult<T> {
    pub h: Vec<T>,
    pub g: T,
    pub q: T,
    pub c_star: Vec<T>,
    pub iterations: usize,
    pub gradient_error: f64,
    /// Smallest eigenvalue of the finite-difference Hessian at `c*`.
    pub hessian_min_eigenvalue: f64,
}

impl<T: Real> RateResult<T> {
    pub fn gap(&self) -> T {
        self.q - self.g
    }
}

struct PerronVector<T> {
    lambda_lo: T,
    lambda_hi: T,
    vector: Vec<T>,
    residual: f64,
    iterations: usize,
}

/// Positive principal eigenvector of a matrix with nonnegative
/// off-diagonal entries by shifted inverse iteration. The shift is kept just
/// above the Collatz–Wielandt upper bound, so the iteration matrix is an
/// inverse M-matrix and the iterates stay positive.
fn perron<T: Real>(a: &CsrMatrix<T>, guess: Option<&[T]>, tol: f64, max_iter: usize) -> Result<PerronVector<T>> {
    let n = a.nrows();
    let norm = a.norm_inf().max(T::one());
    let mut x: Vec<T> = match guess {
        Some(g) if g.len() == n && g.iter().all(|&v| v > T::zero()) => g.to_vec(),
        _ => vec![T::one(); n],
    };
    let mut y = vec![T::zero(); n];
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for it in 0..=max_iter {
        let s = max_abs(&x);
        x.iter_mut().for_each(|v| *v = *v / s);
        a.mul_vec_into(&x, &mut y);
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for i in 0..n {
            let ratio = y[i] / x[i];
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        let lambda = dot(&x, &y) / dot(&x, &x);
        let residual = (0..n)
            .map(|i| (y[i] - lambda * x[i]).abs())
            .fold(T::zero(), T::max)
            .to_f64_lossy();
        let converged = residual <= tol || (hi - lo) <= T::of(1e-14) * norm;
        if residual < 0.5 * best {
            best = residual;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if converged || (stalled >= 4 && residual <= 1e3 * tol) || it == max_iter {
            if !converged && residual > 1e3 * tol {
                return Err(Error::NoConvergence {
                    solver: "inverse iteration",
                    iterations: it,
                    residual,
                });
            }
            return Ok(PerronVector {
                lambda_lo: lo,
                lambda_hi: hi,
                vector: x,
                residual,
                iterations: it,
            });
        }
        let margin = (T::of(0.1) * (hi - lo)).max(T::of(1e-9) * norm);
        let sigma = hi + margin;
        let shifted = a.scale(&vec![-T::one(); n], &vec![T::one(); n]).add_diagonal(&vec![sigma; n]);
        let ilu = Ilu0::new(&shifted);
        let op = |v: &[T], out: &mut [T]| shifted.mul_vec_into(v, out);
        let pc = |r: &[T], z: &mut [T]| ilu.apply(r, z);
        // The solve error is amplified by 1/(σ − λ₂) while the Perron part
        // grows like 1/margin, so the inner tolerance only has to track the
        // current eigen-residual scaled by the margin.
        let rtol = (0.05 * residual.max(0.1 * tol) / margin.to_f64_lossy()).clamp(1e-12, 1e-4);
        let inv_gap = (sigma - lambda).recip();
        let mut z: Vec<T> = x.iter().map(|&v| v * inv_gap).collect();
        let solve = bicgstab(&op, &pc, &x, &mut z, SolveOptions::new(rtol, 20 * n.max(100)));
        if let Err(e) = solve {
            if !z.iter().all(|v| v.is_finite()) {
                return Err(e.context("shifted solve"));
            }
        }
        let min = z.iter().copied().fold(T::infinity(), T::min);
        if !(min > T::zero()) {
            let zmax = max_abs(&z);
            if min < T::of(-1e-10) * zmax {
                return Err(Error::NotPerron {
                    min: (min / zmax).to_f64_lossy(),
                });
            }
            z.iter_mut().for_each(|v| *v = v.max(T::of(1e-300)));
        }
        x = z;
    }
    unreachable!()
}

/// Evaluates `Λ(c)` and friends for a built [`Model`].
pub struct ScgfSolver<'a, T> {
    model: &'a Model<T>,
    /// `T_{η_i}` as `N × N` matrices.
    advect: Vec<CsrMatrix<T>>,
    /// `𝐋η_i` node fields.
    lifted: Vec<Vec<T>>,
    /// `⟨η_i, η_j⟩_m` node fields.
    pairings: Vec<Vec<Vec<T>>>,
    pub options: SpectralOptions,
}

impl<'a, T: Real> ScgfSolver<'a, T> {
    pub fn new(model: &'a Model<T>, options: SpectralOptions) -> Self {
        let calc = &model.calc;
        let mu = &model.inv.measure;
        let eta = &model.basis.eta;
        let advect = eta
            .iter()
            .map(|e| calc.pairing_matrix(mu, e).matmul(calc.differential_matrix()))
            .collect();
        let lifted = eta.iter().map(|e| model.gen.apply_lifted(e)).collect();
        let pairings = eta
            .iter()
            .map(|ei| eta.iter().map(|ej| calc.pairing(mu, ei, ej)).collect())
            .collect();
        Self {
            model,
            advect,
            lifted,
            pairings,
            options,
        }
    }

    pub fn model(&self) -> &Model<T> {
        self.model
    }

    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn max_iter(&self) -> usize {
        self.options
            .max_iter
            .unwrap_or_else(|| (50.0 * (self.model.calc.nodes() as f64).sqrt()).ceil() as usize)
    }

    /// Node potential `𝐋η_c + ½|η_c|²_m`.
    fn potential(&self, c: &[T]) -> Vec<T> {
        let n = self.model.calc.nodes();
        let d = self.dim();
        let half = T::of(0.5);
        (0..n)
            .map(|x| {
                let mut v = T::zero();
                for i in 0..d {
                    v = v + c[i] * self.lifted[i][x];
                    for j in 0..d {
                        v = v + half * c[i] * c[j] * self.pairings[i][j][x];
                    }
                }
                v
            })
            .collect()
    }

    /// Tilted operator for the m-harmonic representative `η_c`.
    pub fn assemble(&self, c: &[T]) -> TiltedOperator<T> {
        let mut m = self.model.gen.matrix().clone();
        for (i, t) in self.advect.iter().enumerate() {
            if c[i] != T::zero() {
                m = m.add_scaled(c[i], t);
            }
        }
        TiltedOperator {
            c: c.to_vec(),
            matrix: m.add_diagonal(&self.potential(c)),
            representative: Representative::Harmonic,
        }
    }

    /// Tilted operator for the representative `η_c + du`, obtained from the
    /// harmonic one by the conjugation `e^{−u} A e^{u}`.
    pub fn assemble_shifted(&self, c: &[T], u: &[T]) -> TiltedOperator<T> {
        let base = self.assemble(c);
        let left: Vec<T> = u.iter().map(|&v| (-v).exp()).collect();
        let right: Vec<T> = u.iter().map(|&v| v.exp()).collect();
        TiltedOperator {
            c: c.to_vec(),
            matrix: base.matrix.scale(&left, &right),
            representative: Representative::Shifted(u.iter().map(|v| v.to_f64_lossy()).collect()),
        }
    }

    /// `∂A/∂c_i = T_{η_i} + diag(𝐋η_i + ⟨η_i, η_c⟩_m)`.
    fn derivative_apply(&self, i: usize, c: &[T], x: &[T]) -> Vec<T> {
        let mut y = self.advect[i].mul_vec(x);
        for (k, yk) in y.iter_mut().enumerate() {
            let mut p = self.lifted[i][k];
            for (j, &cj) in c.iter().enumerate() {
                p = p + cj * self.pairings[i][j][k];
            }
            *yk = *yk + p * x[k];
        }
        y
    }

    /// Principal eigentriple of an assembled operator.
    pub fn principal_eigen(
        &self,
        op: &TiltedOperator<T>,
        warm: Option<&ScgfEvaluation<T>>,
    ) -> Result<ScgfEvaluation<T>> {
        let tol = self.options.eig_tol;
        let iters = self.max_iter();
        let right = perron(&op.matrix, warm.map(|w| w.right.as_slice()), tol, iters)
            .map_err(|e| e.context("right eigenvector"))?;
        let at = op.matrix.transpose();
        let left = perron(&at, warm.map(|w| w.left.as_slice()), tol, iters)
            .map_err(|e| e.context("left eigenvector"))?;
        let ax = op.matrix.mul_vec(&right.vector);
        let lambda = dot(&left.vector, &ax) / dot(&left.vector, &right.vector);
        let gradient = match op.representative {
            Representative::Harmonic => {
                let denom = dot(&left.vector, &right.vector);
                (0..self.dim())
                    .map(|i| dot(&left.vector, &self.derivative_apply(i, &op.c, &right.vector)) / denom)
                    .collect()
            }
            Representative::Shifted(_) => Vec::new(),
        };
        Ok(ScgfEvaluation {
            c: op.c.clone(),
            lambda,
            right: right.vector,
            left: left.vector,
            gradient,
            residual: right.residual,
            left_residual: left.residual,
            bracket: (right.lambda_lo.to_f64_lossy(), right.lambda_hi.to_f64_lossy()),
            iterations: right.iterations + left.iterations,
        })
    }

    pub fn evaluate(&self, c: &[T], warm: Option<&ScgfEvaluation<T>>) -> Result<ScgfEvaluation<T>> {
        self.principal_eigen(&self.assemble(c), warm)
    }

    pub fn lambda(&self, c: &[T]) -> Result<T> {
        Ok(self.evaluate(c, None)?.lambda)
    }

    /// Symmetrized central-difference Hessian of `Λ` at `c`.
    pub fn hessian(&self, c: &[T], warm: Option<&ScgfEvaluation<T>>) -> Result<Matrix<T>> {
        let d = self.dim();
        let step = T::of(self.options.fd_step);
        let cols: Vec<Result<(Vec<T>, Vec<T>)>> = (0..d)
            .into_par_iter()
            .map(|i| {
                let mut cp = c.to_vec();
                let mut cm = c.to_vec();
                cp[i] = cp[i] + step;
                cm[i] = cm[i] - step;
                let gp = self.evaluate(&cp, warm)?.gradient;
                let gm = self.evaluate(&cm, warm)?.gradient;
                Ok((gp, gm))
            })
            .collect();
        let mut h = Matrix::zeros(d, d);
        for (i, col) in cols.into_iter().enumerate() {
            let (gp, gm) = col?;
            for j in 0..d {
                h[(j, i)] = (gp[j] - gm[j]) / (step + step);
            }
        }
        Ok(h.symmetrized())
    }

    pub fn hessian0(&self) -> Result<Matrix<T>> {
        let zero = vec![T::zero(); self.dim()];
        let warm = self.evaluate(&zero, None)?;
        self.hessian(&zero, Some(&warm))
    }

    /// `G(h) = sup_c ⟨h, c⟩ − Λ(c)` by damped Newton ascent from the
    /// Gaussian maximizer `A(h − h̄)`.
    pub fn legendre(&self, h: &[T]) -> Result<RateResult<T>> {
        let basis = &self.model.basis;
        let d = self.dim();
        let dh: Vec<T> = h.iter().zip(&basis.hbar).map(|(&a, &b)| a - b).collect();
        let mut c = basis.a.mul_vec(&dh);
        let c_norm = |c: &[T]| c.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
        let objective = |c: &[T], lambda: T| dot(h, c) - lambda;
        let start = c_norm(&c);
        if start > self.options.c_max {
            let s = T::of(0.9 * self.options.c_max / start);
            c.iter_mut().for_each(|v| *v = *v * s);
        }
        let mut ev = self.evaluate(&c, None)?;
        let mut iterations = 0;
        loop {
            let g: Vec<T> = (0..d).map(|i| h[i] - ev.gradient[i]).collect();
            let gerr = g.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
            if gerr < self.options.newton_tol || iterations >= self.options.newton_max_iter {
                if gerr >= self.options.newton_tol {
                    return Err(Error::NoConvergence {
                        solver: "legendre newton",
                        iterations,
                        residual: gerr,
                    });
                }
                let hess = self.hessian(&c, Some(&ev))?;
                return Ok(RateResult {
                    h: h.to_vec(),
                    g: objective(&c, ev.lambda),
                    q: basis.q_rate(h),
                    c_star: c,
                    iterations,
                    gradient_error: gerr,
                    hessian_min_eigenvalue: hess.min_eigenvalue().to_f64_lossy(),
                });
            }
            iterations += 1;
            let hess = self.hessian(&c, Some(&ev))?;
            let step = hess.solve(&g)?;
            let f0 = objective(&c, ev.lambda);
            let mut t = T::one();
            loop {
                let trial: Vec<T> = c.iter().zip(&step).map(|(&a, &s)| a + t * s).collect();
                let norm = c_norm(&trial);
                if norm > self.options.c_max {
                    if t < T::of(1e-3) {
                        return Err(Error::OutOfRange {
                            norm,
                            c_max: self.options.c_max,
                        });
                    }
                    t = t * T::of(0.5);
                    continue;
                }
                let trial_ev = self.evaluate(&trial, Some(&ev))?;
                let f1 = objective(&trial, trial_ev.lambda);
                let slack = T::of(1e-12) * (T::one() + f0.abs());
                if f1 >= f0 - slack || t < T::of(1e-4) {
                    c = trial;
                    ev = trial_ev;
                    break;
                }
                t = t * T::of(0.5);
            }
        }
    }

    /// Legendre transform at many points, evaluated concurrently.
    pub fn legendre_many(&self, hs: &[Vec<T>]) -> Vec<Result<RateResult<T>>> {
        hs.par_iter().map(|h| self.legendre(h)).collect()
    }

    /// `Λ(c) − Λ(−c − 2c̄)`.
    pub fn gc_defect(&self, c: &[T], cbar: &[T]) -> Result<T> {
        let mirror: Vec<T> = c.iter().zip(cbar).map(|(&a, &b)| -a - b - b).collect();
        Ok(self.lambda(c)? - self.lambda(&mirror)?)
    }

    /// The 1-form `η_c` used for the tilt.
    pub fn representative(&self, c: &[T]) -> OneForm<T> {
        self.model.basis.eta_of_class(c)
    }
}
