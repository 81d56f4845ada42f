//! Monte Carlo simulation of diffusions on flat tori: lifted paths, winding
//! vectors, Stratonovich line integrals and empirical measures.
//!
//! Paths are integrated in the universal cover `ℝ^d` with a Heun
//! predictor–corrector on the drift and exact Gaussian noise increments
//! `Σ ΔW`, `ΣΣᵀ = g⁻¹`. Coefficients are 1-periodic, so no wrapping is needed
//! to evaluate them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::MetricSpec;
use crate::linalg::Matrix;
use crate::stationary::DriftSpec;

/// `dX = b(X) dt + Σ dW` on a flat torus.
#[derive(Clone, Debug)]
pub struct FlatDiffusion {
    dim: usize,
    /// Lower-triangular Cholesky factor of `g⁻¹`.
    noise: Matrix<f64>,
    drift: Vec<Expr>,
}

impl FlatDiffusion {
    pub fn new(gram: &Matrix<f64>, drift: Vec<Expr>) -> Result<Self> {
        let dim = gram.rows();
        if drift.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                got: drift.len(),
            });
        }
        let noise = cholesky(&gram.inverse()?)?;
        Ok(Self { dim, noise, drift })
    }

    pub fn from_specs(metric: &MetricSpec, drift: &DriftSpec, dim: usize) -> Result<Self> {
        let gram = metric.flat_gram(dim).ok_or_else(|| {
            Error::Unsupported(format!(
                "pathwise simulation needs a constant metric, got {metric}; curved metrics are covered by the spectral solver"
            ))
        })?;
        if gram.rows() != dim {
            return Err(Error::Invalid(format!("Gram matrix must be {dim}x{dim}")));
        }
        Self::new(&gram, drift.pointwise(metric, dim)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_factor(&self) -> &Matrix<f64> {
        &self.noise
    }

    #[inline]
    fn drift_at(&self, p: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.drift) {
            *o = e.eval(p);
        }
    }
}

fn cholesky(a: &Matrix<f64>) -> Result<Matrix<f64>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
            if i == j {
                let d = a[(i, i)] - s;
                if d <= 0.0 {
                    return Err(Error::MetricNotSpd {
                        node: 0,
                        detail: "inverse Gram matrix is not positive definite".into(),
                    });
                }
                l[(i, i)] = d.sqrt();
            } else {
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of path `index` in a batch: `splitmix64(master ⊕ splitmix64(index))`.
pub fn path_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(index))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathParams {
    pub t_final: f64,
    pub dt: f64,
}

impl PathParams {
    pub fn new(t_final: f64, dt: f64) -> Result<Self> {
        if !(t_final > 0.0) {
            return Err(Error::Invalid(format!("T must be positive (got {t_final})")));
        }
        if !(dt > 0.0) || dt > 1e-2 {
            return Err(Error::Invalid(format!("dt must lie in (0, 1e-2] (got {dt})")));
        }
        let steps = t_final / dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::Invalid(format!("T/dt = {steps} is not an integer")));
        }
        Ok(Self { t_final, dt })
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Step-by-step integrator state for one path.
struct Stepper<'a> {
    diff: &'a FlatDiffusion,
    rng: ChaCha8Rng,
    sqrt_dt: f64,
    dt: f64,
    b0: Vec<f64>,
    b1: Vec<f64>,
    z: Vec<f64>,
    xi: Vec<f64>,
    pred: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(diff: &'a FlatDiffusion, dt: f64, seed: u64) -> Self {
        let d = diff.dim;
        Self {
            diff,
            rng: ChaCha8Rng::seed_from_u64(seed),
            sqrt_dt: dt.sqrt(),
            dt,
            b0: vec![0.0; d],
            b1: vec![0.0; d],
            z: vec![0.0; d],
            xi: vec![0.0; d],
            pred: vec![0.0; d],
        }
    }

    #[inline]
    fn step(&mut self, x: &mut [f64]) {
        let d = x.len();
        for zi in self.z.iter_mut() {
            *zi = StandardNormal.sample(&mut self.rng);
        }
        let l = &self.diff.noise;
        for i in 0..d {
            let mut s = 0.0;
            for k in 0..=i {
                s += l[(i, k)] * self.z[k];
            }
            self.xi[i] = s * self.sqrt_dt;
        }
        self.diff.drift_at(x, &mut self.b0);
        for i in 0..d {
            self.pred[i] = x[i] + self.b0[i] * self.dt + self.xi[i];
        }
        self.diff.drift_at(&self.pred, &mut self.b1);
        for i in 0..d {
            x[i] += 0.5 * (self.b0[i] + self.b1[i]) * self.dt + self.xi[i];
        }
    }
}

/// Lifted path sampled at `k·Δt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub dt: f64,
    pub seed: u64,
    /// Row-major `(steps + 1) × dim` positions in `ℝ^d`.
    pub positions: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn duration(&self) -> f64 {
        (self.len().saturating_sub(1)) as f64 * self.dt
    }

    /// Position on the torus (fractional part) at step `k`.
    pub fn torus_point(&self, k: usize) -> Vec<f64> {
        self.point(k).iter().map(|v| v - v.floor()).collect()
    }

    /// Every `stride`-th sample, as a path with step `stride·Δt`.
    pub fn subsample(&self, stride: usize) -> Trajectory {
        let positions = (0..self.len())
            .step_by(stride.max(1))
            .flat_map(|k| self.point(k).to_vec())
            .collect();
        Trajectory {
            dim: self.dim,
            dt: self.dt * stride as f64,
            seed: self.seed,
            positions,
        }
    }
}

pub fn simulate_path(diff: &FlatDiffusion, params: PathParams, x0: &[f64], seed: u64) -> Result<Trajectory> {
    if x0.len() != diff.dim {
        return Err(Error::Shape {
            expected: diff.dim,
            got: x0.len(),
        });
    }
    let steps = params.steps();
    let mut positions = Vec::with_capacity((steps + 1) * diff.dim);
    let mut x = x0.to_vec();
    positions.extend_from_slice(&x);
    let mut st = Stepper::new(diff, params.dt, seed);
    for _ in 0..steps {
        st.step(&mut x);
        positions.extend_from_slice(&x);
    }
    Ok(Trajectory {
        dim: diff.dim,
        dt: params.dt,
        seed,
        positions,
    })
}

/// `h_T = (X̃_T − X̃_0) / T`.
pub fn winding(traj: &Trajectory) -> Result<Vec<f64>> {
    let t = traj.duration();
    if !(t > 0.0) {
        return Err(Error::Invalid("winding of a zero-length path is undefined".into()));
    }
    let first = traj.point(0);
    let last = traj.point(traj.len() - 1);
    Ok(last.iter().zip(first).map(|(b, a)| (b - a) / t).collect())
}

/// Midpoint-rule Stratonovich integral `Σ ω((x_k + x_{k+1})/2)·(x_{k+1} − x_k)`
/// of a 1-form with closed-form components `ω_k`.
pub fn stratonovich_line_integral(form: &[Expr], traj: &Trajectory) -> Result<f64> {
    if form.len() != traj.dim {
        return Err(Error::Shape {
            expected: traj.dim,
            got: form.len(),
        });
    }
    let mut mid = vec![0.0; traj.dim];
    let mut total = 0.0;
    for k in 0..traj.len().saturating_sub(1) {
        let (a, b) = (traj.point(k), traj.point(k + 1));
        for i in 0..traj.dim {
            mid[i] = 0.5 * (a[i] + b[i]);
        }
        for i in 0..traj.dim {
            total += form[i].eval(&mid) * (b[i] - a[i]);
        }
    }
    Ok(total)
}

/// Occupation histogram on a uniform `bins^d` partition of the torus.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub dim: usize,
    pub bins: usize,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(dim: usize, bins: usize) -> Self {
        Self {
            dim,
            bins,
            counts: vec![0; bins.pow(dim as u32)],
        }
    }

    #[inline]
    pub fn bin_of(&self, p: &[f64]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for &v in p.iter().take(self.dim) {
            let frac = v - v.floor();
            let b = ((frac * self.bins as f64) as usize).min(self.bins - 1);
            idx += b * stride;
            stride *= self.bins;
        }
        idx
    }

    pub fn record(&mut self, p: &[f64]) {
        let b = self.bin_of(p);
        self.counts[b] += 1;
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let t = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    /// Total-variation distance to reference bin probabilities.
    pub fn tv_distance(&self, reference: &[f64]) -> f64 {
        0.5 * self
            .frequencies()
            .iter()
            .zip(reference)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    pub fn tv_to_uniform(&self) -> f64 {
        let u = 1.0 / self.counts.len() as f64;
        self.tv_distance(&vec![u; self.counts.len()])
    }

    /// Grid-shaped CSV: one line per bin row along the last axis in 2D,
    /// a single line in 1D, slices separated by blank lines in 3D.
    pub fn to_csv(&self) -> String {
        let f = self.frequencies();
        let b = self.bins;
        let mut out = String::new();
        match self.dim {
            1 => {
                let row: Vec<String> = f.iter().map(|v| format!("{v:.8}")).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
            _ => {
                let slices = if self.dim == 3 { b } else { 1 };
                for s in 0..slices {
                    if s > 0 {
                        out.push('\n');
                    }
                    for j in 0..b {
                        let row: Vec<String> =
                            (0..b).map(|i| format!("{:.8}", f[s * b * b + j * b + i])).collect();
                        out.push_str(&row.join(","));
                        out.push('\n');
                    }
                }
            }
        }
        out
    }
}

/// Occupation histogram of a single path sampled at every step after the start.
pub fn single_path_histogram(
    diff: &FlatDiffusion,
    params: PathParams,
    x0: &[f64],
    seed: u64,
    bins: usize,
) -> Result<Histogram> {
    let mut hist = Histogram::new(diff.dim, bins);
    run_path(diff, params, x0, seed, Some(&mut hist));
    Ok(hist)
}

fn run_path(diff: &FlatDiffusion, params: PathParams, x0: &[f64], seed: u64, mut hist: Option<&mut Histogram>) -> Vec<f64> {
    let mut x = x0.to_vec();
    let mut st = Stepper::new(diff, params.dt, seed);
    for _ in 0..params.steps() {
        st.step(&mut x);
        if let Some(h) = hist.as_deref_mut() {
            h.record(&x);
        }
    }
    x.iter().zip(x0).map(|(b, a)| (b - a) / params.t_final).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathSample {
    pub index: u64,
    pub seed: u64,
    pub h: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BatchConfig {
    pub n_paths: usize,
    pub params: PathParams,
    pub master_seed: u64,
    pub x0: Vec<f64>,
    /// Bins per axis of the aggregated occupation histogram (0 disables it).
    pub hist_bins: usize,
}

/// Batch statistics of the winding vectors.
#[derive(Clone, Debug)]
pub struct BatchStatistics {
    pub n_paths: usize,
    pub t_final: f64,
    pub dt: f64,
    pub master_seed: u64,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    /// Sample covariance of `h_T` times `T`.
    pub cov_t: Matrix<f64>,
    /// Standard error of each entry of `cov_t`.
    pub cov_t_se: Matrix<f64>,
    pub histogram: Option<Histogram>,
    pub samples: Vec<PathSample>,
}

impl BatchStatistics {
    /// One row per path: `index,seed,h_1,...`.
    pub fn samples_csv(&self) -> String {
        let d = self.mean.len();
        let mut out = String::from("index,seed");
        for i in 0..d {
            out.push_str(&format!(",h{}", i + 1));
        }
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format!("{},{}", s.index, s.seed));
            for v in &s.h {
                out.push_str(&format!(",{v:.17e}"));
            }
            out.push('\n');
        }
        out
    }

    /// Per-path products `T (h_i − mean_i)(h_j − mean_j)`.
    pub fn centered_products(&self, i: usize, j: usize) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| self.t_final * (s.h[i] - self.mean[i]) * (s.h[j] - self.mean[j]))
            .collect()
    }
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Simulate `n_paths` independent paths and aggregate in index order.
pub fn mc_batch(diff: &FlatDiffusion, cfg: &BatchConfig) -> Result<BatchStatistics> {
    if cfg.n_paths < 2 {
        return Err(Error::Invalid("a batch needs at least two paths".into()));
    }
    if cfg.x0.len() != diff.dim {
        return Err(Error::Shape {
            expected: diff.dim,
            got: cfg.x0.len(),
        });
    }
    let d = diff.dim;
    let results: Vec<(PathSample, Option<Histogram>)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|index| {
            let seed = path_seed(cfg.master_seed, index);
            let mut hist = (cfg.hist_bins > 0).then(|| Histogram::new(d, cfg.hist_bins));
            let h = run_path(diff, cfg.params, &cfg.x0, seed, hist.as_mut());
            (PathSample { index, seed, h }, hist)
        })
        .collect();
    let mut histogram = (cfg.hist_bins > 0).then(|| Histogram::new(d, cfg.hist_bins));
    let mut samples = Vec::with_capacity(cfg.n_paths);
    for (s, h) in results {
        if let (Some(acc), Some(h)) = (histogram.as_mut(), h.as_ref()) {
            acc.merge(h);
        }
        samples.push(s);
    }
    let mut mean = vec![0.0; d];
    let mut mean_se = vec![0.0; d];
    for i in 0..d {
        let col: Vec<f64> = samples.iter().map(|s| s.h[i]).collect();
        (mean[i], mean_se[i]) = mean_and_se(&col);
    }
    let mut stats = BatchStatistics {
        n_paths: cfg.n_paths,
        t_final: cfg.params.t_final,
        dt: cfg.params.dt,
        master_seed: cfg.master_seed,
        mean,
        mean_se,
        cov_t: Matrix::zeros(d, d),
        cov_t_se: Matrix::zeros(d, d),
        histogram,
        samples,
    };
    let n = cfg.n_paths as f64;
    for i in 0..d {
        for j in 0..d {
            let prods = stats.centered_products(i, j);
            let (m, se) = mean_and_se(&prods);
            stats.cov_t[(i, j)] = m * n / (n - 1.0);
            stats.cov_t_se[(i, j)] = se;
        }
    }
    Ok(stats)
}

/// Difference of the `(i, j)` covariance entries of two batches run with the
/// same seeds, with the standard error of the paired per-path differences.
pub fn paired_covariance_gap(a: &BatchStatistics, b: &BatchStatistics, i: usize, j: usize) -> Result<(f64, f64)> {
    if a.n_paths != b.n_paths || a.master_seed != b.master_seed {
        return Err(Error::Invalid("paired comparison needs batches with equal seeds and sizes".into()));
    }
    let pa = a.centered_products(i, j);
    let pb = b.centered_products(i, j);
    let diff: Vec<f64> = pb.iter().zip(&pa).map(|(x, y)| x - y).collect();
    let n = a.n_paths as f64;
    let (m, se) = mean_and_se(&diff);
    Ok((m * n / (n - 1.0), se))
}
