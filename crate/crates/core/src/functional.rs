//! The joint rate `I(μ, j) = ½‖j − j_μ‖²_μ` on explicit measure/current pairs
//! and the constructed currents that bound `G` from above.

use crate::error::{Error, Result};
use crate::grid::{OneForm, WeightedMeasure};
use crate::linalg::{solve_bordered, SolveOptions};
use crate::model::Model;
use crate::real::{max_abs, Real};

/// Measure `μ = ϱ m` with a current `j(ω) = ⟪E♭, ω⟫_μ`.
#[derive(Clone, Debug)]
pub struct MeasureCurrentPair<T> {
    /// Density with respect to `m`.
    pub rho: Vec<T>,
    /// Velocity as an edge 1-form `E♭`.
    pub velocity: OneForm<T>,
    pub measure: WeightedMeasure<T>,
}

impl<T: Real> MeasureCurrentPair<T> {
    pub fn new(model: &Model<T>, rho: Vec<T>, velocity: OneForm<T>) -> Result<Self> {
        if let Some((x, &v)) = rho.iter().enumerate().find(|(_, &v)| !(v > T::zero())) {
            return Err(Error::NonPositiveWeight {
                node: x,
                value: v.to_f64_lossy(),
            });
        }
        let mass = model.inv.measure.integrate(&rho);
        if (mass - T::one()).abs() > T::of(1e-9) {
            return Err(Error::Invalid(format!("density has m-mean {mass}, expected 1")));
        }
        let weights: Vec<T> = rho.iter().zip(&model.inv.m).map(|(&r, &m)| r * m).collect();
        let measure = model.calc.measure(&weights)?;
        Ok(Self {
            rho,
            velocity,
            measure,
        })
    }

    /// `j(ω)`.
    pub fn pair(&self, model: &Model<T>, w: &OneForm<T>) -> T {
        model.calc.inner(&self.measure, &self.velocity, w)
    }

    /// `‖d*_μ E♭‖_∞`, zero exactly when `j` vanishes on exact forms.
    pub fn closedness_residual(&self, model: &Model<T>) -> f64 {
        max_abs(&model.calc.codifferential(&self.measure, &self.velocity)).to_f64_lossy()
    }

    /// Rotation number `j(η_i)`.
    pub fn rotation(&self, model: &Model<T>) -> Vec<T> {
        model.basis.eta.iter().map(|e| self.pair(model, e)).collect()
    }

    /// The pair with the current reversed.
    pub fn reversed(&self) -> Self {
        Self {
            rho: self.rho.clone(),
            velocity: self.velocity.scaled(-T::one()),
            measure: self.measure.clone(),
        }
    }
}

/// Riesz representative of `ω ↦ μ(𝐋ω)` in `⟪·,·⟫_μ` for `μ = ϱm`, i.e. the
/// velocity of the typical current `j_μ`.
pub fn typical_velocity<T: Real>(model: &Model<T>, measure: &WeightedMeasure<T>) -> Result<OneForm<T>> {
    let functional = model.gen.lifted().tr_mul_vec(measure.weights());
    model.calc.riesz(measure, &functional)
}

/// `I(μ, j) = ½‖E♭ − ω̄_ϱ‖²_μ`.
pub fn evaluate_i<T: Real>(model: &Model<T>, pair: &MeasureCurrentPair<T>) -> Result<T> {
    let typical = typical_velocity(model, &pair.measure)?;
    let diff = pair.velocity.axpy(-T::one(), &typical);
    Ok(T::of(0.5) * model.calc.norm_sq(&pair.measure, &diff))
}

/// `I(μ, j) − I(μ, −j) + 2 j(gr)`; vanishes for closed currents with `ϱ ≡ 1`.
pub fn antisymmetry_defect<T: Real>(model: &Model<T>, pair: &MeasureCurrentPair<T>) -> Result<T> {
    let forward = evaluate_i(model, pair)?;
    let backward = evaluate_i(model, &pair.reversed())?;
    Ok(forward - backward + T::of(2.0) * pair.pair(model, &model.inv.gr))
}

/// Closed current with `ϱ ≡ 1` and rotation number `h` of least rate:
/// `E♭ = gr + η^{h − h̄}`.
pub fn minimal_gaussian_current<T: Real>(model: &Model<T>, h: &[T]) -> Result<MeasureCurrentPair<T>> {
    let dh: Vec<T> = h.iter().zip(&model.basis.hbar).map(|(&a, &b)| a - b).collect();
    let velocity = model.inv.gr.axpy(T::one(), &model.basis.eta_of_homology(&dh));
    MeasureCurrentPair::new(model, vec![T::one(); model.calc.nodes()], velocity)
}

/// Perturbation pair around `(m, j_m)` in direction `h`.
#[derive(Clone, Debug)]
pub struct PerturbationPair<T> {
    pub pair: MeasureCurrentPair<T>,
    /// Mean-zero solution of `L†u = d*_m ω^h`.
    pub u: Vec<T>,
    pub epsilon: T,
    pub h: Vec<T>,
}

/// Solve `L†u = d*_m ω^h` with `m(u) = 0`, where `L† = m⁻¹ Lᵀ m` is the
/// adjoint of `L` in `L²(m)`.
pub fn adjoint_potential<T: Real>(model: &Model<T>, h: &[T]) -> Result<Vec<T>> {
    let n = model.calc.nodes();
    let omega = model.basis.omega_of_homology(h);
    let cod = model.calc.codifferential(&model.inv.measure, &omega);
    let rhs: Vec<T> = cod.iter().zip(&model.inv.m).map(|(&c, &m)| -(c * m)).collect();
    let neg_lt = model.gen.matrix().transpose().scale(&vec![-T::one(); n], &vec![T::one(); n]);
    let ones = vec![T::one(); n];
    let mut v = vec![T::zero(); n];
    solve_bordered(&neg_lt, &ones, &ones, &rhs, &mut v, SolveOptions::new(1e-13, 40 * n.max(250)))
        .map_err(|e| e.context("adjoint generator solve"))?;
    let mut u: Vec<T> = v.iter().zip(&model.inv.m).map(|(&a, &m)| a / m).collect();
    let mean = model.inv.measure.integrate(&u);
    u.iter_mut().for_each(|x| *x = *x - mean);
    Ok(u)
}

/// `ν = (1 + εu) m` with current `ι(ω) = ν(𝐋ω) + ε⟪ω^h, ω⟫_m`, closed with
/// rotation number `h̄ + εh`.
pub fn perturbation_pair<T: Real>(model: &Model<T>, h: &[T], epsilon: T) -> Result<PerturbationPair<T>> {
    let u = adjoint_potential(model, h)?;
    let umax = max_abs(&u);
    if epsilon.abs() * umax >= T::one() {
        return Err(Error::Invalid(format!(
            "epsilon {epsilon} too large: ε·max|u| = {} ≥ 1",
            epsilon.abs() * umax
        )));
    }
    let rho: Vec<T> = u.iter().map(|&v| T::one() + epsilon * v).collect();
    let weights: Vec<T> = rho.iter().zip(&model.inv.m).map(|(&r, &m)| r * m).collect();
    let measure = model.calc.measure(&weights)?;
    let typical = typical_velocity(model, &measure)?;
    let omega = model.basis.omega_of_homology(h);
    let push = model.inv.measure.gram().mul_vec(omega.as_slice());
    let correction = model.calc.riesz(&measure, &push)?;
    let velocity = typical.axpy(epsilon, &correction);
    let pair = MeasureCurrentPair::new(model, rho, velocity)?;
    Ok(PerturbationPair {
        pair,
        u,
        epsilon,
        h: h.to_vec(),
    })
}

impl<T: Real> PerturbationPair<T> {
    /// `(ε²/2) Σ_e m̄_e (ω^h_e)² / κ_e` with `κ_e = ν̄_e / m̄_e`: the discrete
    /// form of `(ε²/2)∫|ω^h|²/(1+εu) dm`, exact for diagonal metrics.
    pub fn closed_form_rate(&self, model: &Model<T>) -> T {
        let omega = model.basis.omega_of_homology(&self.h);
        let me = model.inv.measure.edge_weights();
        let ne = self.pair.measure.edge_weights();
        let s: T = omega
            .as_slice()
            .iter()
            .zip(me.iter().zip(ne))
            .map(|(&w, (&a, &b))| a * a * w * w / b)
            .sum();
        T::of(0.5) * self.epsilon * self.epsilon * s
    }
}

/// `ε⁻² I` along a geometric sequence of `ε`, and its Richardson
/// extrapolation to `ε → 0`.
#[derive(Clone, Debug)]
pub struct SmallFluctuation<T> {
    pub epsilons: Vec<T>,
    pub scaled_rates: Vec<T>,
    /// Observed order of the leading error term (1 when fewer than 3 points).
    pub order: T,
    pub limit: T,
}

pub fn small_fluctuation_limit<T: Real>(model: &Model<T>, h: &[T], epsilons: &[T]) -> Result<SmallFluctuation<T>> {
    if epsilons.is_empty() {
        return Err(Error::Invalid("no epsilon values given".into()));
    }
    let mut scaled = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let p = perturbation_pair(model, h, eps)?;
        scaled.push(evaluate_i(model, &p.pair)? / (eps * eps));
    }
    let n = scaled.len();
    let (order, limit) = if n >= 2 {
        let q = epsilons[n - 2] / epsilons[n - 1];
        let mut order = T::one();
        if n >= 3 {
            let ratio = (scaled[n - 3] - scaled[n - 2]) / (scaled[n - 2] - scaled[n - 1]);
            if ratio.is_finite() && ratio > T::one() {
                order = (ratio.ln() / q.ln()).max(T::one()).min(T::of(4.0));
            }
        }
        let limit = scaled[n - 1] + (scaled[n - 1] - scaled[n - 2]) / (q.powf(order) - T::one());
        (order, limit)
    } else {
        (T::one(), scaled[0])
    };
    Ok(SmallFluctuation {
        epsilons: epsilons.to_vec(),
        scaled_rates: scaled,
        order,
        limit,
    })
}
