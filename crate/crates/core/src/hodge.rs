//! m-harmonic and 𝐋-harmonic representatives of the coordinate cohomology
//! basis, their Gram matrices, the rotation number and the quadratic rate.

use rayon::prelude::*;

use crate::error::Result;
use crate::grid::{DiscreteCalculus, OneForm, ScalarField};
use crate::linalg::{conjugate_gradient, solve_bordered, CsrMatrix, Matrix, SolveOptions};
use crate::real::{max_abs, Real};
use crate::stationary::{Generator, InvariantMeasure};

#[derive(Clone, Debug)]
pub struct HarmonicBasis<T> {
    /// `η_i = dx^i + df_i`, m-harmonic.
    pub eta: Vec<OneForm<T>>,
    pub f: Vec<ScalarField<T>>,
    /// `ω_i = η_i + du_i`, 𝐋-harmonic.
    pub omega: Vec<OneForm<T>>,
    pub u: Vec<ScalarField<T>>,
    /// `A_ij = ⟪η_i, η_j⟫_m`.
    pub a: Matrix<T>,
    /// `B_ij = ⟪ω_i, ω_j⟫_m`.
    pub b: Matrix<T>,
    pub a_inv: Matrix<T>,
    pub b_inv: Matrix<T>,
    /// Rotation number `h̄_i = m(⟨r, η_i⟩)`.
    pub hbar: Vec<T>,
    pub diagnostics: HodgeDiagnostics,
}

#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HodgeDiagnostics {
    /// `max_i ‖d*_m η_i‖_∞`.
    pub eta_codifferential_residual: f64,
    /// `max_i ‖𝐋ω_i − h̄_i‖_∞`.
    pub lifted_constant_residual: f64,
    /// `‖(B − A) − Gram(du_i)‖_max`.
    pub exact_part_defect: f64,
    /// Smallest eigenvalue of `B − A`.
    pub b_minus_a_min_eigenvalue: f64,
    pub poisson_iterations: usize,
    pub fredholm_iterations: usize,
}

/// Solve `d*_m(dx^i + df_i) = 0` with `m(f_i) = 0` for each axis.
pub fn m_harmonic_basis<T: Real>(
    calc: &DiscreteCalculus<T>,
    inv: &InvariantMeasure<T>,
) -> Result<(Vec<OneForm<T>>, Vec<ScalarField<T>>, usize)> {
    let n = calc.nodes();
    let dim = calc.dim();
    let d = calc.differential_matrix();
    let dt = d.transpose();
    let gram = inv.measure.gram();
    let k: CsrMatrix<T> = dt.matmul(gram).matmul(d);
    let inv_diag: Vec<T> = k.diagonal().iter().map(|v| v.recip()).collect();
    let results: Vec<Result<(OneForm<T>, Vec<T>, usize)>> = (0..dim)
        .into_par_iter()
        .map(|i| {
            let xi = OneForm::coordinate(dim, n, i);
            let mut rhs: Vec<T> = dt.mul_vec(&gram.mul_vec(xi.as_slice())).iter().map(|&v| -v).collect();
            let mean = rhs.iter().copied().sum::<T>() / T::of(n as f64);
            rhs.iter_mut().for_each(|v| *v = *v - mean);
            // Cancellation-free magnitude of the right-hand side; below round-off
            // relative to it the coordinate form is already m-harmonic.
            let scale = k.diagonal().iter().copied().fold(T::zero(), T::max) / T::of(calc.domain().resolution()[i] as f64);
            if max_abs(&rhs) <= T::of(1e-12) * scale {
                rhs.iter_mut().for_each(|v| *v = T::zero());
            }
            let mut f = vec![T::zero(); n];
            // Both maps act on mean-zero fields so refinement passes never
            // pick up a component along the constant kernel.
            let project = |v: &mut [T]| {
                let mean = v.iter().copied().sum::<T>() / T::of(v.len() as f64);
                v.iter_mut().for_each(|x| *x = *x - mean);
            };
            let op = |x: &[T], y: &mut [T]| {
                k.mul_vec_into(x, y);
                project(y);
            };
            let pc = |r: &[T], z: &mut [T]| {
                for j in 0..r.len() {
                    z[j] = r[j] * inv_diag[j];
                }
                project(z);
            };
            let stats = conjugate_gradient(&op, &pc, &rhs, &mut f, SolveOptions::new(1e-13, 10 * n))
                .map_err(|e| e.context(format!("m-harmonic potential f_{i}")))?;
            let mean = inv.measure.mean(&f);
            f.iter_mut().for_each(|v| *v = *v - mean);
            let eta = xi.axpy(T::one(), &calc.differential(&f));
            Ok((eta, f, stats.iterations))
        })
        .collect();
    let mut eta = Vec::with_capacity(dim);
    let mut fs = Vec::with_capacity(dim);
    let mut iters = 0;
    for r in results {
        let (e, f, it) = r?;
        eta.push(e);
        fs.push(f);
        iters += it;
    }
    Ok((eta, fs, iters))
}

/// Solve `−L u_i = ⟨r, η_i⟩ − m(⟨r, η_i⟩)` with `m(u_i) = 0`.
pub fn l_harmonic_basis<T: Real>(
    calc: &DiscreteCalculus<T>,
    gen: &Generator<T>,
    inv: &InvariantMeasure<T>,
    eta: &[OneForm<T>],
) -> Result<(Vec<OneForm<T>>, Vec<ScalarField<T>>, usize)> {
    let n = calc.nodes();
    let neg_l = gen.matrix().scale(&vec![-T::one(); n], &vec![T::one(); n]);
    let ones = vec![T::one(); n];
    let results: Vec<Result<(OneForm<T>, Vec<T>, usize)>> = eta
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let field = inv.r_pairing(calc, gen, e);
            let mean = inv.measure.integrate(&field);
            let rhs: Vec<T> = field.iter().map(|&v| v - mean).collect();
            let mut u = vec![T::zero(); n];
            let stats = solve_bordered(&neg_l, &ones, &inv.m, &rhs, &mut u, SolveOptions::new(1e-13, 40 * n.max(250)))
                .map_err(|err| err.context(format!("𝐋-harmonic potential u_{i}")))?;
            let mean_u = inv.measure.mean(&u);
            u.iter_mut().for_each(|v| *v = *v - mean_u);
            let omega = e.axpy(T::one(), &calc.differential(&u));
            Ok((omega, u, stats.iterations))
        })
        .collect();
    let mut omega = Vec::new();
    let mut us = Vec::new();
    let mut iters = 0;
    for r in results {
        let (o, u, it) = r?;
        omega.push(o);
        us.push(u);
        iters += it;
    }
    Ok((omega, us, iters))
}

fn gram_of<T: Real>(calc: &DiscreteCalculus<T>, inv: &InvariantMeasure<T>, forms: &[OneForm<T>]) -> Matrix<T> {
    let d = forms.len();
    let mut g = Matrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = calc.inner(&inv.measure, &forms[i], &forms[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// `h̄_i = m(⟨r, η_i⟩) = m(𝐋η_i)`.
pub fn rotation_number<T: Real>(gen: &Generator<T>, inv: &InvariantMeasure<T>, eta: &[OneForm<T>]) -> Vec<T> {
    eta.iter().map(|e| inv.measure.integrate(&gen.apply_lifted(e))).collect()
}

impl<T: Real> HarmonicBasis<T> {
    pub fn build(calc: &DiscreteCalculus<T>, gen: &Generator<T>, inv: &InvariantMeasure<T>) -> Result<Self> {
        let (eta, f, poisson_iterations) = m_harmonic_basis(calc, inv).map_err(|e| e.context("hodge"))?;
        let (omega, u, fredholm_iterations) = l_harmonic_basis(calc, gen, inv, &eta).map_err(|e| e.context("hodge"))?;
        let a = gram_of(calc, inv, &eta);
        let b = gram_of(calc, inv, &omega);
        let a_inv = a.inverse()?.symmetrized();
        let b_inv = b.inverse()?.symmetrized();
        let hbar = rotation_number(gen, inv, &eta);

        let eta_codifferential_residual = eta
            .iter()
            .map(|e| max_abs(&calc.codifferential(&inv.measure, e)).to_f64_lossy())
            .fold(0.0, f64::max);
        let lifted_constant_residual = omega
            .iter()
            .zip(&hbar)
            .map(|(o, &h)| {
                let lw = gen.apply_lifted(o);
                lw.iter().map(|&v| (v - h).abs().to_f64_lossy()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        let du: Vec<OneForm<T>> = u.iter().map(|ui| calc.differential(ui)).collect();
        let exact = gram_of(calc, inv, &du);
        let diff = b.sub(&a);
        let exact_part_defect = diff.sub(&exact).max_abs().to_f64_lossy();
        let b_minus_a_min_eigenvalue = diff.symmetrized().min_eigenvalue().to_f64_lossy();

        Ok(Self {
            eta,
            f,
            omega,
            u,
            a,
            b,
            a_inv,
            b_inv,
            hbar,
            diagnostics: HodgeDiagnostics {
                eta_codifferential_residual,
                lifted_constant_residual,
                exact_part_defect,
                b_minus_a_min_eigenvalue,
                poisson_iterations,
                fredholm_iterations,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.eta.len()
    }

    /// `Q(h) = ½(h − h̄)ᵀ A⁻¹ (h − h̄)`.
    pub fn q_rate(&self, h: &[T]) -> T {
        let dh: Vec<T> = h.iter().zip(&self.hbar).map(|(&a, &b)| a - b).collect();
        T::of(0.5) * self.a_inv.bilinear(&dh, &dh)
    }

    /// `η_c = Σ c_i η_i`.
    pub fn eta_of_class(&self, c: &[T]) -> OneForm<T> {
        combine(&self.eta, c)
    }

    /// `ω_c = Σ c_i ω_i`.
    pub fn omega_of_class(&self, c: &[T]) -> OneForm<T> {
        combine(&self.omega, c)
    }

    /// `η^h = Σ (A⁻¹h)_i η_i`.
    pub fn eta_of_homology(&self, h: &[T]) -> OneForm<T> {
        combine(&self.eta, &self.a_inv.mul_vec(h))
    }

    /// `ω^h = Σ (B⁻¹h)_i ω_i`.
    pub fn omega_of_homology(&self, h: &[T]) -> OneForm<T> {
        combine(&self.omega, &self.b_inv.mul_vec(h))
    }

    /// Variances under m of `|η_i|²` and of `⟨r, η_i⟩`, maximized over axes.
    pub fn constant_length_diagnostic(
        &self,
        calc: &DiscreteCalculus<T>,
        gen: &Generator<T>,
        inv: &InvariantMeasure<T>,
    ) -> ConstantLength {
        let mut out = ConstantLength::default();
        for e in &self.eta {
            let len = calc.pairing(&inv.measure, e, e);
            out.length_variance = out.length_variance.max(inv.measure.variance(&len).to_f64_lossy());
            let rp = inv.r_pairing(calc, gen, e);
            out.r_pairing_variance = out.r_pairing_variance.max(inv.measure.variance(&rp).to_f64_lossy());
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConstantLength {
    pub length_variance: f64,
    pub r_pairing_variance: f64,
}

fn combine<T: Real>(forms: &[OneForm<T>], c: &[T]) -> OneForm<T> {
    let mut out = OneForm::zeros(forms[0].dim(), forms[0].nodes());
    for (f, &ci) in forms.iter().zip(c) {
        out = out.axpy(ci, f);
    }
    out
}
