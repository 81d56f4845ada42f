//! Large deviations of the random homology of diffusions on tori.
//!
//! The crate discretizes a diffusion `Lf = ½Δf + ⟨b, df⟩` on the unit torus
//! `T^d` with a Riemannian metric, computes its invariant measure, the
//! weighted Hodge objects (m-harmonic and 𝐋-harmonic forms, Gram matrices,
//! rotation number), the scaled cumulant generating function of the winding
//! as a tilted principal eigenvalue, its Legendre transform `G`, and Monte
//! Carlo winding statistics on flat tori.
//!
//! All numerical types are generic over [`Real`]; the aliases at the crate
//! root fix the scalar to `f64`.

pub mod callspec;
pub mod error;
pub mod expr;
pub mod functional;
pub mod grid;
pub mod harness;
pub mod hodge;
pub mod linalg;
pub mod model;
pub mod pathwise;
pub mod real;
pub mod spectral;
pub mod stationary;

pub use error::{Error, Result};
pub use real::Real;

pub type TorusDomain = grid::TorusDomain;
pub type MetricField = grid::MetricField<f64>;
pub type OneForm = grid::OneForm<f64>;
pub type DiscreteCalculus = grid::DiscreteCalculus<f64>;
pub type WeightedMeasure = grid::WeightedMeasure<f64>;
pub type DriftField = stationary::DriftField<f64>;
pub type Generator = stationary::Generator<f64>;
pub type InvariantMeasure = stationary::InvariantMeasure<f64>;
pub type HarmonicBasis = hodge::HarmonicBasis<f64>;
pub type Model = model::Model<f64>;
