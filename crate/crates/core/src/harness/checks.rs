//! Invariant and oracle checks on an assembled scenario.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::report::{Check, GcRow, McBlock, RateRow};
use super::scenario::Scenario;
use crate::error::Result;
use crate::functional::{evaluate_i, minimal_gaussian_current, perturbation_pair, small_fluctuation_limit};
use crate::grid::OneForm;
use crate::linalg::Matrix;
use crate::model::Model;
use crate::pathwise::{mc_batch, single_path_histogram, BatchConfig, BatchStatistics, FlatDiffusion, PathParams};
use crate::spectral::{RateResult, ScgfSolver};

/// Horizon of the single path used for the empirical-measure check.
pub const EMPIRICAL_T: f64 = 200.0;

/// `1 + 1/(2π²)`, the `(1,1)` entry of `B` for the shear drift.
pub fn shear_b11() -> f64 {
    1.0 + 1.0 / (2.0 * std::f64::consts::PI.powi(2))
}

/// `I₀(1)`.
pub fn bessel_i0_1() -> f64 {
    // Σ (1/4)^k / (k!)², converged well below 1e-16.
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..30 {
        term *= 0.25 / (k * k) as f64;
        sum += term;
    }
    sum
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn matrix_rows(m: &Matrix<f64>) -> Vec<Vec<f64>> {
    m.to_rows()
}

pub fn rate_row(r: &RateResult<f64>) -> RateRow {
    RateRow {
        h: r.h.clone(),
        g: r.g,
        q: r.q,
        gap: r.gap(),
        c_star: r.c_star.clone(),
        iterations: r.iterations,
        gradient_error: r.gradient_error,
    }
}

pub fn mc_block(s: &BatchStatistics, tv: Option<f64>) -> McBlock {
    McBlock {
        n_paths: s.n_paths,
        t_final: s.t_final,
        dt: s.dt,
        master_seed: s.master_seed,
        mean: s.mean.clone(),
        mean_se: s.mean_se.clone(),
        cov_t: matrix_rows(&s.cov_t),
        cov_t_se: matrix_rows(&s.cov_t_se),
        tv_distance: tv,
        tolerance_se: 3.0,
    }
}

pub struct Verifier<'a> {
    pub scenario: &'a Scenario,
    pub model: &'a Model<f64>,
    pub solver: ScgfSolver<'a, f64>,
    /// Multiplies every tolerance.
    pub tol_scale: f64,
}

impl<'a> Verifier<'a> {
    pub fn new(scenario: &'a Scenario, model: &'a Model<f64>, tol_scale: f64) -> Self {
        Self {
            scenario,
            model,
            solver: ScgfSolver::new(model, scenario.solver.spectral_options()),
            tol_scale,
        }
    }

    fn tol(&self, t: f64) -> f64 {
        t * self.tol_scale
    }

    fn below(&self, name: &str, value: f64, tol: f64) -> Check {
        Check::below(name, value, self.tol(tol))
    }

    fn guarded(&self, name: &str, tol: f64, value: Result<f64>) -> Check {
        match value {
            Ok(v) => self.below(name, v, tol),
            Err(e) => Check::failed(name, self.tol(tol), &e),
        }
    }

    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.scenario.rate.seed ^ salt)
    }

    /// `h̄ + r u` with `u` uniform on the sphere and `r ∈ [0, radius]`.
    pub fn sample_homologies(&self, count: usize, salt: u64) -> Vec<Vec<f64>> {
        let mut rng = self.rng(salt);
        let d = self.model.dim();
        (0..count)
            .map(|_| {
                let mut u: Vec<f64> = (0..d).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
                let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                let r = self.scenario.rate.radius * rng.random::<f64>();
                u.iter_mut().zip(&self.model.basis.hbar).for_each(|(v, hb)| *v = hb + r * *v / norm);
                u
            })
            .collect()
    }

    /// Closed class `c̄` used by the fluctuation-symmetry defect; falls back
    /// to `A⁻¹h̄` when the drift is not of closed type.
    pub fn cbar(&self) -> Vec<f64> {
        self.model
            .closed_class()
            .unwrap_or_else(|| self.model.basis.a_inv.mul_vec(&self.model.basis.hbar))
    }

    /// Adjointness, stationarity, typical-velocity residuals and harmonicity.
    pub fn structural(&self) -> Vec<Check> {
        let m = self.model;
        let calc = &m.calc;
        let mu = &m.inv.measure;
        let n = calc.nodes();
        let mut rng = self.rng(0xad);
        let f: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let w = OneForm::from_vec(m.dim(), n, (0..m.dim() * n).map(|_| rng.random::<f64>() - 0.5).collect())
            .expect("shape");
        let lhs = mu.integrate(&f.iter().zip(calc.codifferential(mu, &w)).map(|(a, b)| a * b).collect::<Vec<_>>());
        let rhs = calc.inner(mu, &calc.differential(&f), &w);
        let d = &m.basis.diagnostics;
        vec![
            self.below("adjointness", (lhs + rhs).abs() / (1.0 + rhs.abs()), 1e-12),
            self.below("stationarity residual", m.inv.stationarity_residual, 1e-8),
            self.below("codifferential residual of r", m.inv.codifferential_residual, 1e-8),
            self.below("m-harmonic residual", d.eta_codifferential_residual, 1e-8),
            self.below("L-harmonic residual", d.lifted_constant_residual, 1e-8),
            self.below("B - A exact-part defect", d.exact_part_defect, 1e-8),
            Check::above("B - A positive semidefinite", d.b_minus_a_min_eigenvalue, -self.tol(1e-10)),
        ]
    }

    /// `∇Λ(0) = h̄`.
    pub fn gradient_at_zero(&self) -> Check {
        let zero = vec![0.0; self.model.dim()];
        let v = self.solver.evaluate(&zero, None).map(|ev| {
            max_abs(ev.gradient.iter().zip(&self.model.basis.hbar).map(|(g, h)| g - h))
        });
        self.guarded("grad Lambda(0) = hbar", 1e-6, v)
    }

    /// `Hess Λ(0) = B`.
    pub fn hessian_vs_b(&self) -> (Option<Matrix<f64>>, Check) {
        match self.solver.hessian0() {
            Ok(h) => {
                let v = h.sub(&self.model.basis.b).max_abs();
                (Some(h), self.below("Hess Lambda(0) = B", v, 1e-4))
            }
            Err(e) => (None, Check::failed("Hess Lambda(0) = B", self.tol(1e-4), &e)),
        }
    }

    /// `Λ` does not depend on the representative of the tilt class.
    pub fn gauge(&self) -> Check {
        let c = self.scenario.rate.tilts.first().cloned().unwrap_or_else(|| vec![0.5; self.model.dim()]);
        let dom = self.model.calc.domain();
        let tau = 2.0 * std::f64::consts::PI;
        let u: Vec<f64> = self.model.basis.u[0]
            .iter()
            .enumerate()
            .map(|(x, v)| {
                let p = dom.point(x);
                v + 0.3 * (tau * p[0]).sin() + 0.2 * (tau * p[self.model.dim() - 1]).cos()
            })
            .collect();
        let v = (|| {
            let a = self.solver.evaluate(&c, None)?.lambda;
            let op = self.solver.assemble_shifted(&c, &u);
            let b = self.solver.principal_eigen(&op, None)?.lambda;
            Ok((a - b).abs())
        })();
        self.guarded("gauge invariance of Lambda", 1e-8, v)
    }

    /// `G ≤ Q` at sampled homologies; returns the rate rows too.
    pub fn quadratic_bound(&self) -> (Vec<RateRow>, Check) {
        let hs = self.sample_homologies(self.scenario.rate.samples, 0x9b);
        let mut rows = Vec::new();
        let mut worst = f64::NEG_INFINITY;
        for (h, r) in hs.iter().zip(self.solver.legendre_many(&hs)) {
            match r {
                Ok(r) => {
                    worst = worst.max(r.g - r.q);
                    rows.push(rate_row(&r));
                }
                Err(e) => {
                    let name = format!("G <= Q at h = {h:?}");
                    return (rows, Check::failed(name, self.tol(1e-6), &e));
                }
            }
        }
        (rows, self.below("G <= Q (max G - Q)", worst, 1e-6))
    }

    /// `I(minimal Gaussian current) = Q` at random homologies.
    pub fn gaussian_current(&self) -> Check {
        let hs = self.sample_homologies(10, 0x6c);
        let v = hs
            .iter()
            .map(|h| {
                let p = minimal_gaussian_current(self.model, h)?;
                Ok((evaluate_i(self.model, &p)? - self.model.basis.q_rate(h)).abs())
            })
            .collect::<Result<Vec<f64>>>()
            .map(max_abs);
        self.guarded("I(minimal Gaussian current) = Q", 1e-6, v)
    }

    /// Perturbation pair: closed-form quadrature and the upper bound on `G`.
    pub fn perturbation(&self, epsilon: f64) -> Vec<Check> {
        let dir = self.scenario.rate.rays.first().cloned().unwrap_or_else(|| vec![1.0; self.model.dim()]);
        let res = (|| {
            let p = perturbation_pair(self.model, &dir, epsilon)?;
            let i = evaluate_i(self.model, &p.pair)?;
            let cf = p.closed_form_rate(self.model);
            let target: Vec<f64> = self.model.basis.hbar.iter().zip(&dir).map(|(h, v)| h + epsilon * v).collect();
            let g = self.solver.legendre(&target)?.g;
            Ok(((i - cf).abs() / (1.0 + cf.abs()), g - i))
        })();
        match res {
            Ok((cf, gap)) => vec![
                self.below("perturbation pair closed-form quadrature", cf, 1e-8),
                self.below("G(hbar + eps h) <= I(perturbation pair)", gap, 1e-8),
            ],
            Err(e) => vec![Check::failed("perturbation pair", self.tol(1e-8), &e)],
        }
    }

    /// `|Λ(c) − Λ(−c − 2c̄)|` at the configured tilts.
    pub fn fluctuation_defects(&self) -> Result<Vec<GcRow>> {
        let cbar = self.cbar();
        self.scenario
            .rate
            .tilts
            .iter()
            .map(|c| {
                Ok(GcRow {
                    c: c.clone(),
                    defect: self.solver.gc_defect(c, &cbar)?.abs(),
                })
            })
            .collect()
    }

    pub fn fluctuation_symmetry(&self) -> (Vec<GcRow>, Option<Check>) {
        if self.model.closed_class().is_none() {
            return (self.fluctuation_defects().unwrap_or_default(), None);
        }
        match self.fluctuation_defects() {
            Ok(rows) => {
                let worst = max_abs(rows.iter().map(|r| r.defect));
                (rows, Some(self.below("fluctuation symmetry defect", worst, 1e-4)))
            }
            Err(e) => (Vec::new(), Some(Check::failed("fluctuation symmetry defect", self.tol(1e-4), &e))),
        }
    }

    /// Flat metrics have constant `|η_i|` and `⟨r, η_i⟩`.
    pub fn constant_length(&self) -> Option<Check> {
        let m = self.model;
        let cl = m.basis.constant_length_diagnostic(&m.calc, &m.gen, &m.inv);
        self.scenario
            .is_flat()
            .then(|| self.below("constant-length diagnostic (flat)", cl.length_variance, 1e-12))
    }

    /// Oracles pinned to the built-in scenarios.
    pub fn scenario_specific(&self) -> Vec<Check> {
        let mut out = Vec::new();
        let m = self.model;
        match self.scenario.name.as_str() {
            "S1" => {
                let v = [-2.0, -1.0, 1.0, 2.0]
                    .iter()
                    .map(|&k| Ok((self.solver.lambda(&[k])? - (0.3 * k + 0.5 * k * k)).abs()))
                    .collect::<Result<Vec<f64>>>()
                    .map(max_abs);
                out.push(self.guarded("Lambda(k) = 0.3k + k^2/2", 1e-5, v));
                out.push(self.guarded("G(0) = 0.045", 1e-5, self.solver.legendre(&[0.0]).map(|r| (r.g - 0.045).abs())));
                out.push(self.guarded("G(hbar) = 0", 1e-8, self.solver.legendre(&m.basis.hbar).map(|r| r.g.abs())));
            }
            "S2" | "shear" => {
                let closed = Matrix::diag(&[shear_b11(), 1.0]);
                // Pinned at 128² per axis; second-order discretization error elsewhere.
                let coarse = (128.0 / *self.scenario.resolution.iter().min().unwrap_or(&128) as f64).powi(2).max(1.0);
                out.push(self.below(
                    &format!("B = diag(1 + 1/(2 pi^2), 1) (tolerance x{coarse})"),
                    m.basis.b.sub(&closed).max_abs(),
                    1e-4 * coarse,
                ));
                let v = self.solver.hessian0().map(|h| h.sub(&closed).max_abs());
                out.push(self.guarded("Hess Lambda(0) = diag(1 + 1/(2 pi^2), 1)", 1e-2, v));
                let target = 0.5 / shear_b11();
                let v = small_fluctuation_limit(m, &[1.0, 0.0], &[0.2, 0.1, 0.05]).map(|s| (s.limit - target).abs());
                out.push(self.guarded("eps^-2 I -> 1/(2 B11)", 2e-2, v));
                let v = self.solver.gc_defect(&[1.0, 0.0], &self.cbar()).map(f64::abs);
                match v {
                    Ok(v) => out.push(Check::above("fluctuation symmetry broken at c = (1,0)", v, 1e-2)),
                    Err(e) => out.push(Check::failed("fluctuation symmetry broken at c = (1,0)", 1e-2, &e)),
                }
            }
            "S3" => {
                let q_exact = 2.0 * bessel_i0_1();
                let tol = 10.0 * self.scenario.solver.eig_tol.max(self.scenario.solver.newton_tol);
                match self.solver.legendre(&[2.0, 0.0]) {
                    Ok(r) => {
                        out.push(self.below("Q((2,0)) = 2 I0(1)", (r.q - q_exact).abs(), 1e-4));
                        out.push(Check::above("Q((2,0)) - G((2,0)) (10x solver tolerance)", r.gap(), tol));
                    }
                    Err(e) => out.push(Check::failed("G((2,0)) < Q((2,0))", tol, &e)),
                }
                let cl = m.basis.constant_length_diagnostic(&m.calc, &m.gen, &m.inv);
                out.push(Check::above("constant-length diagnostic (curved)", cl.length_variance, 0.1));
            }
            "flat-constant" => {
                let hs = self.sample_homologies(self.scenario.rate.samples, 0x9b);
                let v = self
                    .solver
                    .legendre_many(&hs)
                    .into_iter()
                    .map(|r| r.map(|r| r.gap()))
                    .collect::<Result<Vec<f64>>>()
                    .map(max_abs);
                out.push(self.guarded("max |G - Q| (flat constant drift)", 1e-4, v));
            }
            _ => {}
        }
        out
    }

    pub fn diffusion(&self) -> Result<FlatDiffusion> {
        FlatDiffusion::from_specs(&self.model.metric_spec, &self.model.drift_spec, self.model.dim())
    }

    pub fn batch_config(&self) -> Result<BatchConfig> {
        let mc = &self.scenario.mc;
        Ok(BatchConfig {
            n_paths: mc.paths,
            params: PathParams::new(mc.t_final, mc.dt)?,
            master_seed: mc.seed,
            x0: vec![0.0; self.model.dim()],
            hist_bins: mc.bins,
        })
    }

    /// Invariant measure aggregated onto the histogram bins.
    pub fn binned_measure(&self, bins: usize) -> Vec<f64> {
        let m = self.model;
        let dom = m.calc.domain();
        let hist = crate::pathwise::Histogram::new(m.dim(), bins);
        let mut out = vec![0.0; hist.counts.len()];
        let total = m.inv.measure.total();
        for x in 0..m.calc.nodes() {
            let p = dom.point(x);
            out[hist.bin_of(&p[..m.dim()])] += m.inv.measure.weights()[x] / total;
        }
        out
    }

    /// Batch statistics against `h̄` and `B`, plus the single-path empirical
    /// measure against `m`.
    pub fn monte_carlo(&self) -> Result<(BatchStatistics, McBlock, Vec<Check>)> {
        let diff = self.diffusion()?;
        let cfg = self.batch_config()?;
        let stats = mc_batch(&diff, &cfg)?;
        let d = self.model.dim();
        let hbar = &self.model.basis.hbar;
        let z_mean = max_abs((0..d).map(|i| (stats.mean[i] - hbar[i]) / stats.mean_se[i]));
        let b11 = self.model.basis.b[(0, 0)];
        let z_cov = (stats.cov_t[(0, 0)] - b11).abs() / stats.cov_t_se[(0, 0)];
        let long = PathParams::new(EMPIRICAL_T, cfg.params.dt)?;
        let hist = single_path_histogram(&diff, long, &cfg.x0, cfg.master_seed, self.scenario.mc.bins)?;
        let tv = hist.tv_distance(&self.binned_measure(self.scenario.mc.bins));
        let checks = vec![
            Check::below("MC mean winding vs hbar (in SE)", z_mean, 3.0),
            Check::below("MC covariance*T (1,1) vs B11 (in SE)", z_cov, 3.0),
            self.below("single-path empirical measure TV to m (T = 200)", tv, 0.05),
        ];
        let block = mc_block(&stats, Some(tv));
        Ok((stats, block, checks))
    }
}
