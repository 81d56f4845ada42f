//! Generator assembly, invariant measure, potential and non-reversible drift.

use std::fmt;
use std::str::FromStr;

use crate::callspec::CallSpec;
use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::grid::{DiscreteCalculus, MetricSpec, OneForm, ScalarField, WeightedMeasure};
use crate::hodge::HarmonicBasis;
use crate::linalg::{solve_bordered, CsrMatrix, Matrix, SolveOptions};
use crate::real::{max_abs, Real};

/// Drift specification in the configuration grammar.
#[derive(Clone, Debug, PartialEq)]
pub enum DriftSpec {
    /// `constant(v=[..])`: constant vector components.
    Constant { v: Vec<f64> },
    /// `stream(hbar=[a,b], psi="..")`: `b = hbar + (∂_yψ, −∂_xψ)` on `T²`.
    Stream { hbar: Vec<f64>, psi: Expr },
    /// `gradient(V0="..")`: `b = −½∇V₀`.
    Gradient { v0: Expr },
    /// `sharp_closed(eta=[..])`: `b = g⁻¹η` for a constant covector `η`.
    SharpClosed { eta: Vec<f64> },
    /// `components(b=["..", ".."])`: explicit vector components.
    Components { b: Vec<Expr> },
}

impl DriftSpec {
    pub fn zero(dim: usize) -> Self {
        DriftSpec::Constant { v: vec![0.0; dim] }
    }

    /// Class of the closed form `gb` when it is known from the spec alone.
    pub fn closed_class(&self, metric: &MetricSpec, dim: usize) -> Option<Vec<f64>> {
        match self {
            DriftSpec::SharpClosed { eta } => Some(eta.clone()),
            DriftSpec::Gradient { .. } => Some(vec![0.0; dim]),
            DriftSpec::Constant { v } => {
                let g = metric.flat_gram(dim)?;
                Some(g.mul_vec(v))
            }
            _ => None,
        }
    }

    /// Closed-form vector components `b^k(x)` for pointwise evaluation.
    pub fn pointwise(&self, metric: &MetricSpec, dim: usize) -> Result<Vec<Expr>> {
        let len_check = |v: &[f64], what: &str| -> Result<()> {
            if v.len() != dim {
                return Err(Error::Invalid(format!("drift {what} has length {} but dimension is {dim}", v.len())));
            }
            Ok(())
        };
        match self {
            DriftSpec::Constant { v } => {
                len_check(v, "v")?;
                Ok(v.iter().map(|&c| Expr::Const(c)).collect())
            }
            DriftSpec::Stream { hbar, psi } => {
                if dim != 2 {
                    return Err(Error::Invalid("stream drift requires dimension 2".into()));
                }
                len_check(hbar, "hbar")?;
                Ok(vec![
                    expr::add(Expr::Const(hbar[0]), psi.derivative(1)),
                    expr::sub(Expr::Const(hbar[1]), psi.derivative(0)),
                ])
            }
            DriftSpec::Gradient { v0 } => {
                let ginv = metric.inverse_exprs(dim)?;
                Ok((0..dim)
                    .map(|k| {
                        (0..dim).fold(Expr::Const(0.0), |acc, l| {
                            let term = expr::mul(
                                expr::mul(Expr::Const(-0.5), ginv[k][l].clone()),
                                v0.derivative(l),
                            );
                            expr::add(acc, term)
                        })
                    })
                    .collect())
            }
            DriftSpec::SharpClosed { eta } => {
                len_check(eta, "eta")?;
                let ginv = metric.inverse_exprs(dim)?;
                Ok((0..dim)
                    .map(|k| {
                        (0..dim).fold(Expr::Const(0.0), |acc, l| {
                            expr::add(acc, expr::mul(ginv[k][l].clone(), Expr::Const(eta[l])))
                        })
                    })
                    .collect())
            }
            DriftSpec::Components { b } => {
                if b.len() != dim {
                    return Err(Error::Invalid(format!("drift has {} components but dimension is {dim}", b.len())));
                }
                Ok(b.clone())
            }
        }
    }
}

impl FromStr for DriftSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let call = CallSpec::parse(s)?;
        let vec_arg = |key: &str| -> Result<Vec<f64>> {
            call.require(key)?
                .as_vec()
                .ok_or_else(|| Error::Invalid(format!("drift argument '{key}' must be a numeric list")))
        };
        let expr_arg = |key: &str| -> Result<Expr> {
            let src = call.require(key)?.as_str().ok_or_else(|| {
                Error::Invalid(format!("drift argument '{key}' must be a quoted expression"))
            })?;
            Expr::parse(src)
        };
        match call.name.as_str() {
            "constant" => {
                call.check_keys(&["v"])?;
                Ok(DriftSpec::Constant { v: vec_arg("v")? })
            }
            "stream" => {
                call.check_keys(&["hbar", "psi"])?;
                Ok(DriftSpec::Stream {
                    hbar: vec_arg("hbar")?,
                    psi: expr_arg("psi")?,
                })
            }
            "gradient" => {
                call.check_keys(&["V0"])?;
                Ok(DriftSpec::Gradient { v0: expr_arg("V0")? })
            }
            "sharp_closed" => {
                call.check_keys(&["eta"])?;
                Ok(DriftSpec::SharpClosed { eta: vec_arg("eta")? })
            }
            "components" => {
                call.check_keys(&["b"])?;
                let srcs = call
                    .require("b")?
                    .as_str_list()
                    .ok_or_else(|| Error::Invalid("components(b=[..]) expects quoted expressions".into()))?;
                Ok(DriftSpec::Components {
                    b: srcs.iter().map(|s| Expr::parse(s)).collect::<Result<_>>()?,
                })
            }
            other => Err(Error::Invalid(format!("unknown drift kind '{other}'"))),
        }
    }
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", items.join(", "))
}

impl fmt::Display for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftSpec::Constant { v } => write!(f, "constant(v={})", fmt_list(v)),
            DriftSpec::Stream { hbar, psi } => write!(f, "stream(hbar={}, psi=\"{psi}\")", fmt_list(hbar)),
            DriftSpec::Gradient { v0 } => write!(f, "gradient(V0=\"{v0}\")"),
            DriftSpec::SharpClosed { eta } => write!(f, "sharp_closed(eta={})", fmt_list(eta)),
            DriftSpec::Components { b } => {
                let items: Vec<String> = b.iter().map(|e| format!("\"{e}\"")).collect();
                write!(f, "components(b=[{}])", items.join(", "))
            }
        }
    }
}

/// Node-sampled drift vector field, components axis-major.
#[derive(Clone, Debug)]
pub struct DriftField<T> {
    dim: usize,
    nodes: usize,
    components: Vec<T>,
}

impl<T: Real> DriftField<T> {
    pub fn from_components(dim: usize, nodes: usize, components: Vec<T>) -> Result<Self> {
        if components.len() != dim * nodes {
            return Err(Error::Shape {
                expected: dim * nodes,
                got: components.len(),
            });
        }
        if components.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("drift has non-finite values".into()));
        }
        Ok(Self { dim, nodes, components })
    }

    pub fn from_spec(spec: &DriftSpec, calc: &DiscreteCalculus<T>) -> Result<Self> {
        let dom = calc.domain();
        let dim = dom.dim();
        let n = dom.len();
        let metric = calc.metric();
        let mut b = vec![T::zero(); dim * n];
        let check = |e: &Expr| -> Result<()> {
            if e.arity() > dim || !e.is_periodic(dim) {
                return Err(Error::Invalid(format!("drift coefficient '{e}' is not periodic on T^{dim}")));
            }
            Ok(())
        };
        match spec {
            DriftSpec::Constant { v } => {
                if v.len() != dim {
                    return Err(Error::Invalid(format!("drift v has length {} but dimension is {dim}", v.len())));
                }
                for k in 0..dim {
                    b[k * n..(k + 1) * n].fill(T::of(v[k]));
                }
            }
            DriftSpec::Stream { hbar, psi } => {
                if dim != 2 || hbar.len() != 2 {
                    return Err(Error::Invalid("stream drift requires dimension 2 and hbar of length 2".into()));
                }
                check(psi)?;
                let s: Vec<T> = dom.sample(|p| psi.eval(p));
                let res = dom.resolution();
                let half = T::of(0.5);
                let (nx, ny) = (T::of(res[0] as f64), T::of(res[1] as f64));
                for x in 0..n {
                    let dy = (s[dom.next(x, 1)] - s[dom.prev(x, 1)]) * half * ny;
                    let dx = (s[dom.next(x, 0)] - s[dom.prev(x, 0)]) * half * nx;
                    b[x] = T::of(hbar[0]) + dy;
                    b[n + x] = T::of(hbar[1]) - dx;
                }
            }
            DriftSpec::Gradient { v0 } => {
                check(v0)?;
                let grads: Vec<Vec<T>> = (0..dim)
                    .map(|l| {
                        let dl = v0.derivative(l);
                        dom.sample(|p| dl.eval(p))
                    })
                    .collect();
                for k in 0..dim {
                    for x in 0..n {
                        let s: T = (0..dim).map(|l| metric.g_inv(k, l, x) * grads[l][x]).sum();
                        b[k * n + x] = T::of(-0.5) * s;
                    }
                }
            }
            DriftSpec::SharpClosed { eta } => {
                if eta.len() != dim {
                    return Err(Error::Invalid(format!("eta has length {} but dimension is {dim}", eta.len())));
                }
                for k in 0..dim {
                    for x in 0..n {
                        b[k * n + x] = (0..dim).map(|l| metric.g_inv(k, l, x) * T::of(eta[l])).sum();
                    }
                }
            }
            DriftSpec::Components { b: exprs } => {
                if exprs.len() != dim {
                    return Err(Error::Invalid(format!(
                        "drift has {} components but dimension is {dim}",
                        exprs.len()
                    )));
                }
                for (k, e) in exprs.iter().enumerate() {
                    check(e)?;
                    let s: Vec<T> = dom.sample(|p| e.eval(p));
                    b[k * n..(k + 1) * n].copy_from_slice(&s);
                }
            }
        }
        Self::from_components(dim, n, b)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Components `b^k(x)`, axis-major.
    pub fn components(&self) -> &[T] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &[T] {
        &self.components[k * self.nodes..(k + 1) * self.nodes]
    }

    /// Centered flat divergence `Σ_k (b^k(x+e_k) − b^k(x−e_k)) n_k / 2`.
    pub fn flat_divergence(&self, calc: &DiscreteCalculus<T>) -> Vec<T> {
        let dom = calc.domain();
        let half = T::of(0.5);
        (0..self.nodes)
            .map(|x| {
                (0..self.dim)
                    .map(|k| {
                        let bk = self.component(k);
                        (bk[dom.next(x, k)] - bk[dom.prev(x, k)]) * half * T::of(dom.resolution()[k] as f64)
                    })
                    .sum()
            })
            .collect()
    }
}

/// Sparse generator `L = ½ d*_vol d + ⟨b, d·⟩` and the lifted generator on
/// 1-forms, `𝐋ω = ½ d*_vol ω + Σ_k b^k ω̄_k`, so that `𝐋(df) = Lf`.
#[derive(Clone, Debug)]
pub struct Generator<T> {
    matrix: CsrMatrix<T>,
    lifted: CsrMatrix<T>,
    drift: DriftField<T>,
    /// `max_k |b^k| Δx_k`.
    pub peclet: f64,
    /// Smallest off-diagonal entry (negative values break the M-matrix sign pattern).
    pub min_off_diagonal: f64,
    pub warnings: Vec<String>,
}

impl<T: Real> Generator<T> {
    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    /// `N × dN` matrix of the lifted generator.
    pub fn lifted(&self) -> &CsrMatrix<T> {
        &self.lifted
    }

    pub fn drift(&self) -> &DriftField<T> {
        &self.drift
    }

    pub fn apply(&self, f: &[T]) -> Vec<T> {
        self.matrix.mul_vec(f)
    }

    pub fn apply_lifted(&self, w: &OneForm<T>) -> Vec<T> {
        self.lifted.mul_vec(w.as_slice())
    }
}

pub fn assemble_generator<T: Real>(calc: &DiscreteCalculus<T>, b: &DriftField<T>) -> Result<Generator<T>> {
    let dom = calc.domain();
    let n = dom.len();
    let dim = dom.dim();
    if b.dim != dim || b.nodes != n {
        return Err(Error::Shape {
            expected: dim * n,
            got: b.dim * b.nodes,
        });
    }
    let half = T::of(0.5);
    let mut trip = Vec::with_capacity(2 * dim * n);
    for k in 0..dim {
        let bk = b.component(k);
        for x in 0..n {
            trip.push((x, k * n + x, half * bk[x]));
            trip.push((x, k * n + dom.prev(x, k), half * bk[x]));
        }
    }
    let advection = CsrMatrix::from_triplets(n, dim * n, trip);
    let lifted = calc
        .volume_measure()
        .codifferential_matrix()
        .scale(&vec![half; n], &vec![T::one(); dim * n])
        .add_scaled(T::one(), &advection);
    let matrix = lifted.matmul(calc.differential_matrix());
    let peclet = (0..dim)
        .map(|k| max_abs(b.component(k)).to_f64_lossy() * dom.spacing(k))
        .fold(0.0, f64::max);
    let min_off_diagonal = matrix.min_off_diagonal().map_or(0.0, |v| v.to_f64_lossy());
    let mut warnings = Vec::new();
    if peclet > 2.0 {
        warnings.push(format!(
            "cell Péclet number {peclet:.3} exceeds 2; the stationary solve may lose positivity"
        ));
    }
    if min_off_diagonal < 0.0 {
        warnings.push(format!("generator has negative off-diagonal entry {min_off_diagonal:e}"));
    }
    Ok(Generator {
        matrix,
        lifted,
        drift: b.clone(),
        peclet,
        min_off_diagonal,
        warnings,
    })
}

/// Invariant probability and the objects derived from it.
#[derive(Clone, Debug)]
pub struct InvariantMeasure<T> {
    /// Node probabilities (include the volume factor), summing to 1.
    pub m: Vec<T>,
    /// Density with respect to the Riemannian volume.
    pub density: Vec<T>,
    /// `V = −log density`, so that `m = e^{−V}·Vol`.
    pub potential: Vec<T>,
    /// `gr`: the Riesz representative of `ω ↦ m(𝐋ω)` in `⟪·,·⟫_m`.
    pub gr: OneForm<T>,
    /// Node vector field `r = g⁻¹ gr`, components axis-major.
    pub r: Vec<T>,
    pub measure: WeightedMeasure<T>,
    /// `‖Lᵀm‖_∞ / ‖m‖_∞`.
    pub stationarity_residual: f64,
    /// `‖d*_m gr‖_∞`.
    pub codifferential_residual: f64,
    pub solver_iterations: usize,
}

impl<T: Real> InvariantMeasure<T> {
    /// Node field `⟨r, ω⟩ = 𝐋ω − ½ d*_m ω`.
    pub fn r_pairing(&self, calc: &DiscreteCalculus<T>, gen: &Generator<T>, w: &OneForm<T>) -> ScalarField<T> {
        let lw = gen.apply_lifted(w);
        let cd = calc.codifferential(&self.measure, w);
        lw.iter().zip(&cd).map(|(&a, &b)| a - T::of(0.5) * b).collect()
    }

    /// `½ d*_m d + T_{gr}` where `T_ω f = ⟨ω, df⟩_m`; equals `L` whenever
    /// `m b^k` is constant along axis `k`, and in general differs from it by
    /// an m-symmetric term of second order in the grid spacing.
    pub fn symmetric_split_generator(&self, calc: &DiscreteCalculus<T>) -> CsrMatrix<T> {
        let half = vec![T::of(0.5); calc.nodes()];
        let lap = calc.laplacian(&self.measure);
        let ones = vec![T::one(); calc.nodes()];
        let t = calc.pairing_matrix(&self.measure, &self.gr).matmul(calc.differential_matrix());
        lap.scale(&half, &ones).add_scaled(T::one(), &t)
    }
}

pub fn invariant_measure<T: Real>(calc: &DiscreteCalculus<T>, gen: &Generator<T>) -> Result<InvariantMeasure<T>> {
    let n = calc.nodes();
    let lt = gen.matrix.transpose();
    let neg_lt = lt.scale(&vec![-T::one(); n], &vec![T::one(); n]);
    let total = calc.total_volume();
    let v: Vec<T> = calc.volume().iter().map(|&w| w / total).collect();
    let ones = vec![T::one(); n];
    let mut m = v.clone();
    let stats = solve_bordered(&neg_lt, &v, &ones, &v, &mut m, SolveOptions::new(1e-14, 40 * n.max(250)))
        .map_err(|e| e.context("stationary measure"))?;
    let mmax = max_abs(&m);
    if let Some((x, &val)) = m.iter().enumerate().find(|(_, &val)| !(val > T::zero())) {
        return Err(Error::NegativeDensity {
            node: x,
            value: (val / mmax).to_f64_lossy(),
        });
    }
    let s: T = m.iter().copied().sum();
    m.iter_mut().for_each(|v| *v = *v / s);
    let stationarity_residual = (max_abs(&lt.mul_vec(&m)) / max_abs(&m)).to_f64_lossy();
    let measure = calc.measure(&m)?;
    let functional = gen.lifted.tr_mul_vec(&m);
    let gr = calc.riesz(&measure, &functional)?;
    let codifferential_residual = max_abs(&calc.codifferential(&measure, &gr)).to_f64_lossy();
    let density: Vec<T> = m.iter().zip(calc.volume()).map(|(&a, &w)| a / w).collect();
    let potential = density.iter().map(|&d| -d.ln()).collect();
    let r = calc.sharp_at_nodes(&calc.average_to_nodes(&gr));
    Ok(InvariantMeasure {
        m,
        density,
        potential,
        gr,
        r,
        measure,
        stationarity_residual,
        codifferential_residual,
        solver_iterations: stats.iterations,
    })
}

/// Reversibility flags with the diagnostic value behind each.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReversibilityFlags {
    pub reversible: bool,
    pub quasi_reversible: bool,
    pub homologically_reversible: bool,
    pub typically_reversible: bool,
    /// `‖gr‖_m`.
    pub gr_norm: f64,
    /// Largest plaquette curl density of `gb`.
    pub curl_gb: f64,
    /// Largest m-standard deviation of `⟨r, η_c⟩` over unit `c`.
    pub r_pairing_std: f64,
    /// `|h̄|`.
    pub hbar_norm: f64,
    pub tolerance: f64,
}

pub fn classify_reversibility<T: Real>(
    calc: &DiscreteCalculus<T>,
    gen: &Generator<T>,
    inv: &InvariantMeasure<T>,
    basis: &HarmonicBasis<T>,
    tol: f64,
) -> ReversibilityFlags {
    let gr_norm = calc.norm_sq(&inv.measure, &inv.gr).sqrt().to_f64_lossy();
    let gb = calc.nodes_to_edges(&calc.flat_at_nodes(gen.drift.components()));
    let curl_gb = max_abs(&calc.curl(&gb)).to_f64_lossy();
    let dim = calc.dim();
    let fields: Vec<Vec<T>> = (0..dim).map(|i| inv.r_pairing(calc, gen, &basis.eta[i])).collect();
    let means: Vec<T> = fields.iter().map(|f| inv.measure.mean(f)).collect();
    let cov = Matrix::from_fn(dim, dim, |i, j| {
        let prod: Vec<T> = fields[i]
            .iter()
            .zip(&fields[j])
            .map(|(&a, &b)| (a - means[i]) * (b - means[j]))
            .collect();
        inv.measure.mean(&prod)
    });
    let r_pairing_std = cov
        .symmetric_eigenvalues()
        .last()
        .copied()
        .unwrap_or(T::zero())
        .max(T::zero())
        .sqrt()
        .to_f64_lossy();
    let hbar_norm = basis.hbar.iter().map(|h| h.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
    ReversibilityFlags {
        reversible: gr_norm < tol,
        quasi_reversible: curl_gb < tol,
        homologically_reversible: r_pairing_std < tol,
        typically_reversible: hbar_norm < tol,
        gr_norm,
        curl_gb,
        r_pairing_std,
        hbar_norm,
        tolerance: tol,
    }
}
