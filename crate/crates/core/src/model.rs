//! A fully assembled diffusion: calculus, generator, invariant measure and
//! harmonic basis.

use crate::error::Result;
use crate::grid::{DiscreteCalculus, MetricSpec, TorusDomain};
use crate::hodge::HarmonicBasis;
use crate::real::Real;
use crate::stationary::{
    assemble_generator, classify_reversibility, invariant_measure, DriftField, DriftSpec, Generator,
    InvariantMeasure, ReversibilityFlags,
};

#[derive(Clone, Debug)]
pub struct Model<T> {
    pub metric_spec: MetricSpec,
    pub drift_spec: DriftSpec,
    pub calc: DiscreteCalculus<T>,
    pub gen: Generator<T>,
    pub inv: InvariantMeasure<T>,
    pub basis: HarmonicBasis<T>,
}

impl<T: Real> Model<T> {
    pub fn build(domain: TorusDomain, metric: &MetricSpec, drift: &DriftSpec) -> Result<Self> {
        let calc = DiscreteCalculus::from_spec(domain, metric).map_err(|e| e.context("grid"))?;
        let b = DriftField::from_spec(drift, &calc).map_err(|e| e.context("drift"))?;
        let gen = assemble_generator(&calc, &b).map_err(|e| e.context("generator"))?;
        let inv = invariant_measure(&calc, &gen).map_err(|e| e.context("stationary"))?;
        let basis = HarmonicBasis::build(&calc, &gen, &inv)?;
        Ok(Self {
            metric_spec: metric.clone(),
            drift_spec: drift.clone(),
            calc,
            gen,
            inv,
            basis,
        })
    }

    pub fn dim(&self) -> usize {
        self.calc.dim()
    }

    pub fn flags(&self, tol: f64) -> ReversibilityFlags {
        classify_reversibility(&self.calc, &self.gen, &self.inv, &self.basis, tol)
    }

    /// Class of `gb` when it is closed and known from the drift spec.
    pub fn closed_class(&self) -> Option<Vec<f64>> {
        self.drift_spec.closed_class(&self.metric_spec, self.dim())
    }
}
