//! Periodic staggered grid on the unit torus `T^d` and a weighted exterior
//! calculus on 0- and 1-forms.
//!
//! Scalar fields live on nodes. The component `k` of a 1-form lives on the
//! edge from node `x` to `x + e_k`. The differential is the forward
//! difference and every weighted codifferential is defined as the negative
//! adjoint of `d` for the corresponding weighted inner product, so discrete
//! integration by parts holds to round-off.

use std::fmt;
use std::str::FromStr;

use crate::callspec::CallSpec;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::{conjugate_gradient, CsrMatrix, Matrix, SolveOptions};
use crate::real::Real;

/// Node-indexed 0-form.
pub type ScalarField<T> = Vec<T>;

/// Grid on the unit torus with `n_k` nodes per axis (x fastest).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TorusDomain {
    n: Vec<usize>,
    stride: Vec<usize>,
}

impl TorusDomain {
    pub fn new(resolution: &[usize]) -> Result<Self> {
        if !(1..=3).contains(&resolution.len()) {
            return Err(Error::Domain(format!(
                "dimension must be 1, 2 or 3 (got {})",
                resolution.len()
            )));
        }
        if let Some(&bad) = resolution.iter().find(|&&n| n < 8) {
            return Err(Error::Domain(format!("resolution {bad} below minimum of 8 nodes per axis")));
        }
        let mut stride = Vec::with_capacity(resolution.len());
        let mut s = 1;
        for &n in resolution {
            stride.push(s);
            s *= n;
        }
        Ok(Self {
            n: resolution.to_vec(),
            stride,
        })
    }

    pub fn uniform(dim: usize, n: usize) -> Result<Self> {
        Self::new(&vec![n; dim])
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.n
    }

    /// Total node count `N = Π n_k`.
    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing `1 / n_k` along axis `k`.
    pub fn spacing(&self, k: usize) -> f64 {
        1.0 / self.n[k] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.n.iter().map(|&n| 1.0 / n as f64).product()
    }

    #[inline]
    pub fn coord(&self, i: usize, k: usize) -> usize {
        (i / self.stride[k]) % self.n[k]
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.n)
            .zip(&self.stride)
            .map(|((&c, &n), &s)| (c % n) * s)
            .sum()
    }

    /// Node `x + e_k`.
    #[inline]
    pub fn next(&self, i: usize, k: usize) -> usize {
        if self.coord(i, k) + 1 == self.n[k] {
            i + self.stride[k] - self.n[k] * self.stride[k]
        } else {
            i + self.stride[k]
        }
    }

    /// Node `x − e_k`.
    #[inline]
    pub fn prev(&self, i: usize, k: usize) -> usize {
        if self.coord(i, k) == 0 {
            i + (self.n[k] - 1) * self.stride[k]
        } else {
            i - self.stride[k]
        }
    }

    /// Position of node `i` in `[0,1)^d`, padded with zeros to length 3.
    pub fn point(&self, i: usize) -> [f64; 3] {
        let mut p = [0.0; 3];
        for (k, pk) in p.iter_mut().enumerate().take(self.dim()) {
            *pk = self.coord(i, k) as f64 / self.n[k] as f64;
        }
        p
    }

    /// Midpoint of the edge from node `i` along axis `k`.
    pub fn edge_point(&self, i: usize, k: usize) -> [f64; 3] {
        let mut p = self.point(i);
        p[k] += 0.5 * self.spacing(k);
        p
    }

    /// Sample a function of position at every node.
    pub fn sample<T: Real>(&self, f: impl Fn(&[f64; 3]) -> f64) -> ScalarField<T> {
        (0..self.len()).map(|i| T::of(f(&self.point(i)))).collect()
    }
}

/// 1-form with one value per edge, stored axis-major: component `k` at
/// offset `k·N`.
#[derive(Clone, Debug, PartialEq)]
pub struct OneForm<T> {
    dim: usize,
    nodes: usize,
    data: Vec<T>,
}

impl<T: Real> OneForm<T> {
    pub fn zeros(dim: usize, nodes: usize) -> Self {
        Self {
            dim,
            nodes,
            data: vec![T::zero(); dim * nodes],
        }
    }

    pub fn from_vec(dim: usize, nodes: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != dim * nodes {
            return Err(Error::Shape {
                expected: dim * nodes,
                got: data.len(),
            });
        }
        Ok(Self { dim, nodes, data })
    }

    /// Constant-coefficient form `Σ c_k dx^k`.
    pub fn constant(nodes: usize, c: &[T]) -> Self {
        let mut w = Self::zeros(c.len(), nodes);
        for (k, &ck) in c.iter().enumerate() {
            w.component_mut(k).fill(ck);
        }
        w
    }

    /// Coordinate coform `dx^k`.
    pub fn coordinate(dim: usize, nodes: usize, k: usize) -> Self {
        let mut c = vec![T::zero(); dim];
        c[k] = T::one();
        Self::constant(nodes, &c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn component(&self, k: usize) -> &[T] {
        &self.data[k * self.nodes..(k + 1) * self.nodes]
    }

    pub fn component_mut(&mut self, k: usize) -> &mut [T] {
        &mut self.data[k * self.nodes..(k + 1) * self.nodes]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            dim: self.dim,
            nodes: self.nodes,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: T, other: &Self) -> Self {
        Self {
            dim: self.dim,
            nodes: self.nodes,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + s * b).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        crate::real::max_abs(&self.data)
    }
}

/// Metric specification in the configuration grammar.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricSpec {
    /// Constant Gram matrix; `None` means the identity.
    Flat { gram: Option<Vec<Vec<f64>>> },
    /// Position-dependent diagonal `g_kk(x)`; missing entries default to 1.
    Diag { entries: Vec<Option<Expr>> },
    /// `e^{2φ}·I`.
    Conformal { phi: Expr },
}

impl MetricSpec {
    pub fn identity() -> Self {
        MetricSpec::Flat { gram: None }
    }

    pub fn conformal(phi: &str) -> Result<Self> {
        Ok(MetricSpec::Conformal {
            phi: Expr::parse(phi)?,
        })
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, MetricSpec::Flat { .. })
    }

    /// Constant Gram matrix of a flat spec.
    pub fn flat_gram(&self, dim: usize) -> Option<Matrix<f64>> {
        match self {
            MetricSpec::Flat { gram: None } => Some(Matrix::identity(dim)),
            MetricSpec::Flat { gram: Some(rows) } => Some(Matrix::from_rows(rows)),
            _ => None,
        }
    }

    /// Closed-form inverse metric entries `g^kl(x)`.
    pub fn inverse_exprs(&self, dim: usize) -> Result<Vec<Vec<Expr>>> {
        let diag = |f: &dyn Fn(usize) -> Expr| -> Vec<Vec<Expr>> {
            (0..dim)
                .map(|k| (0..dim).map(|l| if k == l { f(k) } else { Expr::Const(0.0) }).collect())
                .collect()
        };
        match self {
            MetricSpec::Flat { .. } => {
                let g = self.flat_gram(dim).expect("flat");
                if g.rows() != dim || g.cols() != dim {
                    return Err(Error::Invalid(format!("Gram matrix must be {dim}x{dim}")));
                }
                let inv = g.inverse()?;
                Ok((0..dim)
                    .map(|k| (0..dim).map(|l| Expr::Const(inv[(k, l)])).collect())
                    .collect())
            }
            MetricSpec::Diag { entries } => Ok(diag(&|k| match entries.get(k).and_then(Option::as_ref) {
                Some(e) => crate::expr::div(Expr::Const(1.0), e.clone()),
                None => Expr::Const(1.0),
            })),
            MetricSpec::Conformal { phi } => Ok(diag(&|_| {
                Expr::Exp(Box::new(crate::expr::mul(Expr::Const(-2.0), phi.clone())))
            })),
        }
    }
}

impl FromStr for MetricSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let call = CallSpec::parse(s)?;
        let expr_arg = |key: &str| -> Result<Option<Expr>> {
            match call.get(key) {
                None => Ok(None),
                Some(v) => {
                    let src = v.as_str().ok_or_else(|| {
                        Error::Invalid(format!("metric argument '{key}' must be a quoted expression"))
                    })?;
                    Expr::parse(src).map(Some)
                }
            }
        };
        match call.name.as_str() {
            "flat" => {
                call.check_keys(&["gram"])?;
                let gram = match call.get("gram") {
                    None => None,
                    Some(v) => Some(v.as_matrix().ok_or_else(|| {
                        Error::Invalid("flat(gram=...) expects a nested numeric list".into())
                    })?),
                };
                Ok(MetricSpec::Flat { gram })
            }
            "diag" => {
                call.check_keys(&["gxx", "gyy", "gzz"])?;
                Ok(MetricSpec::Diag {
                    entries: vec![expr_arg("gxx")?, expr_arg("gyy")?, expr_arg("gzz")?],
                })
            }
            "conformal" => {
                call.check_keys(&["phi"])?;
                let phi = expr_arg("phi")?
                    .ok_or_else(|| Error::Invalid("conformal(...) requires argument 'phi'".into()))?;
                Ok(MetricSpec::Conformal { phi })
            }
            other => Err(Error::Invalid(format!("unknown metric kind '{other}'"))),
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricSpec::Flat { gram: None } => write!(f, "flat()"),
            MetricSpec::Flat { gram: Some(g) } => {
                let rows: Vec<String> = g
                    .iter()
                    .map(|r| {
                        let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
                        format!("[{}]", cells.join(", "))
                    })
                    .collect();
                write!(f, "flat(gram=[{}])", rows.join(", "))
            }
            MetricSpec::Diag { entries } => {
                let parts: Vec<String> = ["gxx", "gyy", "gzz"]
                    .iter()
                    .zip(entries)
                    .filter_map(|(k, e)| e.as_ref().map(|e| format!("{k}=\"{e}\"")))
                    .collect();
                write!(f, "diag({})", parts.join(", "))
            }
            MetricSpec::Conformal { phi } => write!(f, "conformal(phi=\"{phi}\")"),
        }
    }
}

#[derive(Clone, Debug)]
enum MetricKind<T> {
    Constant {
        gram: Matrix<T>,
        inverse: Matrix<T>,
        sqrt_det: T,
    },
    /// `g[k][x]` is the diagonal entry `g_kk` at node `x`.
    Diagonal { g: Vec<Vec<T>> },
}

/// Riemannian metric sampled on the grid.
#[derive(Clone, Debug)]
pub struct MetricField<T> {
    dim: usize,
    kind: MetricKind<T>,
    min_eigenvalue: T,
}

impl<T: Real> MetricField<T> {
    pub fn identity(dim: usize) -> Self {
        Self::constant(Matrix::identity(dim)).expect("identity is SPD")
    }

    pub fn constant(gram: Matrix<T>) -> Result<Self> {
        let dim = gram.rows();
        if gram.cols() != dim || !(1..=3).contains(&dim) {
            return Err(Error::Invalid(format!(
                "Gram matrix must be square of size 1..3 (got {}x{})",
                gram.rows(),
                gram.cols()
            )));
        }
        if gram.asymmetry() > T::of(1e-12) * (T::one() + gram.max_abs()) {
            return Err(Error::MetricNotSpd {
                node: 0,
                detail: "Gram matrix is not symmetric".into(),
            });
        }
        let gram = gram.symmetrized();
        let min_eigenvalue = gram.min_eigenvalue();
        if !(min_eigenvalue > T::zero()) {
            return Err(Error::MetricNotSpd {
                node: 0,
                detail: format!("smallest eigenvalue {min_eigenvalue}"),
            });
        }
        let inverse = gram.inverse()?.symmetrized();
        let det: T = gram.symmetric_eigenvalues().into_iter().fold(T::one(), |a, b| a * b);
        Ok(Self {
            dim,
            kind: MetricKind::Constant {
                gram,
                inverse,
                sqrt_det: det.sqrt(),
            },
            min_eigenvalue,
        })
    }

    /// Position-dependent diagonal metric, `g[k][x] = g_kk(x)`.
    pub fn diagonal(domain: &TorusDomain, g: Vec<Vec<T>>) -> Result<Self> {
        if g.len() != domain.dim() {
            return Err(Error::Shape {
                expected: domain.dim(),
                got: g.len(),
            });
        }
        let mut min_eigenvalue = T::infinity();
        for (k, gk) in g.iter().enumerate() {
            if gk.len() != domain.len() {
                return Err(Error::Shape {
                    expected: domain.len(),
                    got: gk.len(),
                });
            }
            for (x, &v) in gk.iter().enumerate() {
                if !(v > T::zero()) || !v.is_finite() {
                    return Err(Error::MetricNotSpd {
                        node: x,
                        detail: format!("g_{k}{k} = {v}"),
                    });
                }
                min_eigenvalue = min_eigenvalue.min(v);
            }
        }
        Ok(Self {
            dim: domain.dim(),
            kind: MetricKind::Diagonal { g },
            min_eigenvalue,
        })
    }

    pub fn from_spec(spec: &MetricSpec, domain: &TorusDomain) -> Result<Self> {
        let dim = domain.dim();
        let check_periodic = |e: &Expr| -> Result<()> {
            if e.arity() > dim || !e.is_periodic(dim) {
                return Err(Error::Invalid(format!("metric coefficient '{e}' is not periodic on T^{dim}")));
            }
            Ok(())
        };
        match spec {
            MetricSpec::Flat { gram: None } => Ok(Self::identity(dim)),
            MetricSpec::Flat { gram: Some(rows) } => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::Invalid(format!("Gram matrix must be {dim}x{dim}")));
                }
                let rows: Vec<Vec<T>> = rows.iter().map(|r| r.iter().map(|&v| T::of(v)).collect()).collect();
                Self::constant(Matrix::from_rows(&rows))
            }
            MetricSpec::Diag { entries } => {
                let mut g = Vec::with_capacity(dim);
                for k in 0..dim {
                    match entries.get(k).and_then(Option::as_ref) {
                        Some(e) => {
                            check_periodic(e)?;
                            g.push(domain.sample(|p| e.eval(p)));
                        }
                        None => g.push(vec![T::one(); domain.len()]),
                    }
                }
                if let Some(extra) = entries.iter().skip(dim).flatten().next() {
                    return Err(Error::Invalid(format!("metric entry '{extra}' exceeds dimension {dim}")));
                }
                Self::diagonal(domain, g)
            }
            MetricSpec::Conformal { phi } => {
                check_periodic(phi)?;
                let s: Vec<T> = domain.sample(|p| (2.0 * phi.eval(p)).exp());
                Self::diagonal(domain, vec![s; dim])
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, MetricKind::Constant { .. })
    }

    /// True when some off-diagonal inverse-metric entry is nonzero.
    pub fn has_cross_terms(&self) -> bool {
        match &self.kind {
            MetricKind::Constant { inverse, .. } => (0..self.dim)
                .any(|k| (0..self.dim).any(|l| k != l && inverse[(k, l)] != T::zero())),
            MetricKind::Diagonal { .. } => false,
        }
    }

    /// Smallest eigenvalue of `g` over all nodes.
    pub fn min_eigenvalue(&self) -> T {
        self.min_eigenvalue
    }

    /// `g_kl` at node `x`.
    pub fn g(&self, k: usize, l: usize, x: usize) -> T {
        match &self.kind {
            MetricKind::Constant { gram, .. } => gram[(k, l)],
            MetricKind::Diagonal { g } => {
                if k == l {
                    g[k][x]
                } else {
                    T::zero()
                }
            }
        }
    }

    /// `g^kl` at node `x`.
    pub fn g_inv(&self, k: usize, l: usize, x: usize) -> T {
        match &self.kind {
            MetricKind::Constant { inverse, .. } => inverse[(k, l)],
            MetricKind::Diagonal { g } => {
                if k == l {
                    g[k][x].recip()
                } else {
                    T::zero()
                }
            }
        }
    }

    /// `√|g|` at node `x`.
    pub fn sqrt_det(&self, x: usize) -> T {
        match &self.kind {
            MetricKind::Constant { sqrt_det, .. } => *sqrt_det,
            MetricKind::Diagonal { g } => g.iter().fold(T::one(), |a, gk| a * gk[x]).sqrt(),
        }
    }

    /// Constant Gram matrix, if the metric is constant.
    pub fn gram(&self) -> Option<&Matrix<T>> {
        match &self.kind {
            MetricKind::Constant { gram, .. } => Some(gram),
            MetricKind::Diagonal { .. } => None,
        }
    }

    /// Constant inverse metric, if the metric is constant.
    pub fn inverse_gram(&self) -> Option<&Matrix<T>> {
        match &self.kind {
            MetricKind::Constant { inverse, .. } => Some(inverse),
            MetricKind::Diagonal { .. } => None,
        }
    }
}

/// Positive node measure together with the weighted inner product on 1-forms
/// and the codifferential it induces.
#[derive(Clone, Debug)]
pub struct WeightedMeasure<T> {
    weights: Vec<T>,
    /// Diagonal edge weights `μ̄_e`.
    edge: Vec<T>,
    /// Full Gram matrix on edge space (diagonal plus constant-metric cross terms).
    gram: CsrMatrix<T>,
    codiff: CsrMatrix<T>,
    cross: bool,
}

impl<T: Real> WeightedMeasure<T> {
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn total(&self) -> T {
        self.weights.iter().copied().sum()
    }

    pub fn edge_weights(&self) -> &[T] {
        &self.edge
    }

    /// Edge-space Gram matrix of `⟪·,·⟫_μ`.
    pub fn gram(&self) -> &CsrMatrix<T> {
        &self.gram
    }

    /// `N × dN` matrix of the codifferential `d*_μ`.
    pub fn codifferential_matrix(&self) -> &CsrMatrix<T> {
        &self.codiff
    }

    pub fn integrate(&self, f: &[T]) -> T {
        self.weights.iter().zip(f).map(|(&w, &v)| w * v).sum()
    }

    /// `μ(f) / μ(1)`.
    pub fn mean(&self, f: &[T]) -> T {
        self.integrate(f) / self.total()
    }

    /// Variance of `f` under the normalized measure.
    pub fn variance(&self, f: &[T]) -> T {
        let mean = self.mean(f);
        let dev: Vec<T> = f.iter().map(|&v| (v - mean) * (v - mean)).collect();
        self.mean(&dev)
    }
}

/// Grid, metric, quadrature and the sparse operators of the calculus.
#[derive(Clone, Debug)]
pub struct DiscreteCalculus<T> {
    domain: TorusDomain,
    metric: MetricField<T>,
    /// Node weights `√|g|·ΔV` of the Riemannian volume.
    volume: Vec<T>,
    /// `W_e`: average over the endpoints of `√|g| g^kk ΔV`.
    edge_volume: Vec<T>,
    d: CsrMatrix<T>,
    /// Edge-to-node averaging `ᾱ_k(x) = ½(α_k(x) + α_k(x−e_k))`.
    avg: CsrMatrix<T>,
    volume_measure: WeightedMeasure<T>,
}

impl<T: Real> DiscreteCalculus<T> {
    pub fn new(domain: TorusDomain, metric: MetricField<T>) -> Result<Self> {
        if metric.dim() != domain.dim() {
            return Err(Error::Shape {
                expected: domain.dim(),
                got: metric.dim(),
            });
        }
        let n = domain.len();
        let dim = domain.dim();
        let dv = T::of(domain.cell_volume());
        let volume: Vec<T> = (0..n).map(|x| metric.sqrt_det(x) * dv).collect();
        let half = T::of(0.5);
        let mut edge_volume = vec![T::zero(); dim * n];
        let mut d_trip = Vec::with_capacity(2 * dim * n);
        let mut avg_trip = Vec::with_capacity(2 * dim * n);
        for k in 0..dim {
            let nk = T::of(domain.resolution()[k] as f64);
            for x in 0..n {
                let xp = domain.next(x, k);
                let xm = domain.prev(x, k);
                let e = k * n + x;
                let s = |y: usize| metric.sqrt_det(y) * metric.g_inv(k, k, y) * dv;
                edge_volume[e] = half * (s(x) + s(xp));
                d_trip.push((e, xp, nk));
                d_trip.push((e, x, -nk));
                avg_trip.push((e, e, half));
                avg_trip.push((e, k * n + xm, half));
            }
        }
        let d = CsrMatrix::from_triplets(dim * n, n, d_trip);
        let avg = CsrMatrix::from_triplets(dim * n, dim * n, avg_trip);
        let mut calc = Self {
            domain,
            metric,
            volume: volume.clone(),
            edge_volume,
            d,
            avg,
            volume_measure: WeightedMeasure {
                weights: Vec::new(),
                edge: Vec::new(),
                gram: CsrMatrix::identity(0),
                codiff: CsrMatrix::identity(0),
                cross: false,
            },
        };
        calc.volume_measure = calc.measure(&volume)?;
        Ok(calc)
    }

    pub fn from_spec(domain: TorusDomain, spec: &MetricSpec) -> Result<Self> {
        let metric = MetricField::from_spec(spec, &domain)?;
        Self::new(domain, metric)
    }

    pub fn domain(&self) -> &TorusDomain {
        &self.domain
    }

    pub fn metric(&self) -> &MetricField<T> {
        &self.metric
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn nodes(&self) -> usize {
        self.domain.len()
    }

    /// Node quadrature weights of the Riemannian volume.
    pub fn volume(&self) -> &[T] {
        &self.volume
    }

    pub fn total_volume(&self) -> T {
        self.volume.iter().copied().sum()
    }

    pub fn volume_measure(&self) -> &WeightedMeasure<T> {
        &self.volume_measure
    }

    /// `dN × N` matrix of the forward-difference differential.
    pub fn differential_matrix(&self) -> &CsrMatrix<T> {
        &self.d
    }

    /// `dN × dN` matrix averaging each edge component to nodes.
    pub fn averaging_matrix(&self) -> &CsrMatrix<T> {
        &self.avg
    }

    pub fn differential(&self, f: &[T]) -> OneForm<T> {
        OneForm {
            dim: self.dim(),
            nodes: self.nodes(),
            data: self.d.mul_vec(f),
        }
    }

    /// Node-collocated components `ᾱ_k(x)`, axis-major.
    pub fn average_to_nodes(&self, w: &OneForm<T>) -> Vec<T> {
        self.avg.mul_vec(w.as_slice())
    }

    /// Build the weighted calculus for a positive node measure.
    pub fn measure(&self, weights: &[T]) -> Result<WeightedMeasure<T>> {
        let n = self.nodes();
        let dim = self.dim();
        if weights.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: weights.len(),
            });
        }
        if let Some((x, &v)) = weights.iter().enumerate().find(|(_, &v)| !(v > T::zero()) || !v.is_finite()) {
            return Err(Error::NonPositiveWeight {
                node: x,
                value: v.to_f64_lossy(),
            });
        }
        let half = T::of(0.5);
        let density: Vec<T> = weights.iter().zip(&self.volume).map(|(&m, &w)| m / w).collect();
        let mut edge = vec![T::zero(); dim * n];
        let mut trip = Vec::with_capacity(dim * n);
        for k in 0..dim {
            for x in 0..n {
                let e = k * n + x;
                edge[e] = half * (density[x] + density[self.domain.next(x, k)]) * self.edge_volume[e];
                trip.push((e, e, edge[e]));
            }
        }
        let cross = self.metric.has_cross_terms();
        if cross {
            let quarter = T::of(0.25);
            for k in 0..dim {
                for l in 0..dim {
                    if k == l {
                        continue;
                    }
                    for x in 0..n {
                        let c = weights[x] * self.metric.g_inv(k, l, x) * quarter;
                        let ek = [k * n + x, k * n + self.domain.prev(x, k)];
                        let el = [l * n + x, l * n + self.domain.prev(x, l)];
                        for &a in &ek {
                            for &b in &el {
                                trip.push((a, b, c));
                            }
                        }
                    }
                }
            }
        }
        let gram = CsrMatrix::from_triplets(dim * n, dim * n, trip);
        let inv: Vec<T> = weights.iter().map(|&m| -m.recip()).collect();
        let codiff = self
            .d
            .transpose()
            .matmul(&gram)
            .scale(&inv, &vec![T::one(); dim * n]);
        Ok(WeightedMeasure {
            weights: weights.to_vec(),
            edge,
            gram,
            codiff,
            cross,
        })
    }

    /// `d*_μ ω`, the negative adjoint of `d` in the μ-weighted products.
    pub fn codifferential(&self, mu: &WeightedMeasure<T>, w: &OneForm<T>) -> ScalarField<T> {
        mu.codiff.mul_vec(w.as_slice())
    }

    /// Weighted Laplacian `d*_μ d` as an `N × N` matrix.
    pub fn laplacian(&self, mu: &WeightedMeasure<T>) -> CsrMatrix<T> {
        mu.codiff.matmul(&self.d)
    }

    /// `⟪α, β⟫_μ = μ(⟨α, β⟩)`.
    pub fn inner(&self, mu: &WeightedMeasure<T>, a: &OneForm<T>, b: &OneForm<T>) -> T {
        crate::real::dot(a.as_slice(), &mu.gram.mul_vec(b.as_slice()))
    }

    pub fn norm_sq(&self, mu: &WeightedMeasure<T>, a: &OneForm<T>) -> T {
        self.inner(mu, a, a)
    }

    /// `N × dN` matrix `R` with `(R β)(x) = ⟨ω, β⟩_μ(x)`, the node density of
    /// the weighted pairing: `Σ_x μ_x (Rβ)(x) = ⟪ω, β⟫_μ`.
    pub fn pairing_matrix(&self, mu: &WeightedMeasure<T>, w: &OneForm<T>) -> CsrMatrix<T> {
        let n = self.nodes();
        let dim = self.dim();
        let half = T::of(0.5);
        let mut trip = Vec::with_capacity(2 * dim * n * dim);
        let wv = w.as_slice();
        for k in 0..dim {
            for x in 0..n {
                let s = half / mu.weights[x];
                let e = k * n + x;
                let em = k * n + self.domain.prev(x, k);
                trip.push((x, e, s * mu.edge[e] * wv[e]));
                trip.push((x, em, s * mu.edge[em] * wv[em]));
            }
        }
        if mu.cross {
            let wbar = self.average_to_nodes(w);
            for k in 0..dim {
                for l in 0..dim {
                    if k == l {
                        continue;
                    }
                    for x in 0..n {
                        let c = half * self.metric.g_inv(k, l, x) * wbar[k * n + x];
                        trip.push((x, l * n + x, c));
                        trip.push((x, l * n + self.domain.prev(x, l), c));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(n, dim * n, trip)
    }

    /// Node field `⟨α, β⟩_μ(x)`.
    pub fn pairing(&self, mu: &WeightedMeasure<T>, a: &OneForm<T>, b: &OneForm<T>) -> ScalarField<T> {
        self.pairing_matrix(mu, a).mul_vec(b.as_slice())
    }

    /// Riesz representative: the form `ω` with `⟪ω, β⟫_μ = Σ_e v_e β_e`.
    pub fn riesz(&self, mu: &WeightedMeasure<T>, v: &[T]) -> Result<OneForm<T>> {
        let data = if mu.cross {
            let op = |x: &[T], y: &mut [T]| mu.gram.mul_vec_into(x, y);
            let inv_diag: Vec<T> = mu.gram.diagonal().iter().map(|d| d.recip()).collect();
            let pc = |r: &[T], z: &mut [T]| {
                for i in 0..r.len() {
                    z[i] = r[i] * inv_diag[i];
                }
            };
            let mut x: Vec<T> = v.iter().zip(&inv_diag).map(|(&a, &b)| a * b).collect();
            conjugate_gradient(&op, &pc, v, &mut x, SolveOptions::new(1e-14, 20 * v.len().max(100)))
                .map_err(|e| e.context("Riesz representative"))?;
            x
        } else {
            v.iter().zip(&mu.edge).map(|(&a, &b)| a / b).collect()
        };
        OneForm::from_vec(self.dim(), self.nodes(), data)
    }

    /// Discrete curl density `∂_k α_l − ∂_l α_k` on each elementary plaquette,
    /// one block of `N` values per axis pair `k < l`.
    pub fn curl(&self, w: &OneForm<T>) -> Vec<T> {
        let n = self.nodes();
        let dim = self.dim();
        let res = self.domain.resolution();
        let mut out = Vec::new();
        for k in 0..dim {
            for l in k + 1..dim {
                let (nk, nl) = (T::of(res[k] as f64), T::of(res[l] as f64));
                let (ak, al) = (w.component(k), w.component(l));
                for x in 0..n {
                    let xk = self.domain.next(x, k);
                    let xl = self.domain.next(x, l);
                    out.push((al[xk] - al[x]) * nk - (ak[xl] - ak[x]) * nl);
                }
            }
        }
        out
    }

    /// Lower a node vector field (axis-major components `v^k(x)`) to node
    /// covector components `g_kl v^l`.
    pub fn flat_at_nodes(&self, v: &[T]) -> Vec<T> {
        let n = self.nodes();
        let dim = self.dim();
        let mut out = vec![T::zero(); dim * n];
        for k in 0..dim {
            for x in 0..n {
                out[k * n + x] = (0..dim).map(|l| self.metric.g(k, l, x) * v[l * n + x]).sum();
            }
        }
        out
    }

    /// Raise node covector components to vector components `g^kl α_l`.
    pub fn sharp_at_nodes(&self, a: &[T]) -> Vec<T> {
        let n = self.nodes();
        let dim = self.dim();
        let mut out = vec![T::zero(); dim * n];
        for k in 0..dim {
            for x in 0..n {
                out[k * n + x] = (0..dim).map(|l| self.metric.g_inv(k, l, x) * a[l * n + x]).sum();
            }
        }
        out
    }

    /// Average node covector components onto edges.
    pub fn nodes_to_edges(&self, a: &[T]) -> OneForm<T> {
        let n = self.nodes();
        let dim = self.dim();
        let half = T::of(0.5);
        let mut w = OneForm::zeros(dim, n);
        for k in 0..dim {
            let comp = w.component_mut(k);
            for (x, c) in comp.iter_mut().enumerate() {
                *c = half * (a[k * n + x] + a[k * n + self.domain.next(x, k)]);
            }
        }
        w
    }
}
