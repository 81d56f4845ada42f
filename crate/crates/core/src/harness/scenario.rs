//! Scenario description and the built-in scenario library.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{MetricSpec, TorusDomain};
use crate::spectral::SpectralOptions;
use crate::stationary::DriftSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub eig_tol: f64,
    pub newton_tol: f64,
    pub c_max: f64,
    pub fd_step: f64,
    /// Threshold used by the reversibility classification.
    pub flag_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let o = SpectralOptions::default();
        Self {
            eig_tol: o.eig_tol,
            newton_tol: o.newton_tol,
            c_max: o.c_max,
            fd_step: o.fd_step,
            flag_tol: 1e-8,
        }
    }
}

impl SolverSettings {
    pub fn spectral_options(&self) -> SpectralOptions {
        SpectralOptions {
            eig_tol: self.eig_tol,
            newton_tol: self.newton_tol,
            c_max: self.c_max,
            fd_step: self.fd_step,
            ..SpectralOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    /// Zero disables Monte Carlo for the scenario.
    pub paths: usize,
    pub t_final: f64,
    pub dt: f64,
    pub seed: u64,
    /// Histogram bins per axis.
    pub bins: usize,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            paths: 1000,
            t_final: 50.0,
            dt: 1e-2,
            seed: 20240601,
            bins: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSettings {
    /// Directions `v` of the rays `h̄ + s v`.
    pub rays: Vec<Vec<f64>>,
    /// Points per ray, `s ∈ [0, radius]`.
    pub points: usize,
    pub radius: f64,
    /// Number of random homologies for the quadratic-bound check.
    pub samples: usize,
    pub seed: u64,
    /// Tilts for `scgf` tables and fluctuation-symmetry checks.
    pub tilts: Vec<Vec<f64>>,
}

impl RateSettings {
    pub(crate) fn for_dim(dim: usize) -> Self {
        let rays = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let tilts = match dim {
            1 => vec![vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]],
            2 => vec![
                vec![0.5, 0.0],
                vec![0.0, 0.5],
                vec![-0.7, 0.3],
                vec![1.0, -1.0],
                vec![0.2, 0.9],
            ],
            _ => (0..dim)
                .map(|i| (0..dim).map(|j| if i == j { 0.5 } else { 0.1 }).collect())
                .collect(),
        };
        Self {
            rays,
            points: 5,
            radius: 1.0,
            samples: 20,
            seed: 7,
            tilts,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub resolution: Vec<usize>,
    pub metric: MetricSpec,
    pub drift: DriftSpec,
    pub solver: SolverSettings,
    pub mc: McSettings,
    pub rate: RateSettings,
}

pub const BUILTIN_NAMES: [&str; 6] = ["S1", "S2", "S3", "S4", "flat-constant", "shear"];

const S3_PHI: &str = "0.5*cos(2*pi*x)";

impl Scenario {
    pub fn new(name: &str, resolution: &[usize], metric: &str, drift: &str) -> Result<Self> {
        let dim = resolution.len();
        Ok(Self {
            name: name.to_string(),
            resolution: resolution.to_vec(),
            metric: metric.parse()?,
            drift: drift.parse()?,
            solver: SolverSettings::default(),
            mc: McSettings::default(),
            rate: RateSettings::for_dim(dim),
        })
    }

    /// Look up a built-in scenario by name (case-insensitive).
    pub fn builtin(name: &str) -> Result<Self> {
        let key = name.to_ascii_lowercase();
        let mut s = match key.as_str() {
            "s1" => {
                let mut s = Self::new("S1", &[256], "flat()", "constant(v=[0.3])")?;
                s.mc = McSettings {
                    paths: 4000,
                    t_final: 50.0,
                    dt: 1e-2,
                    ..McSettings::default()
                };
                s
            }
            "s2" | "shear" => {
                let mut s = Self::new(
                    "S2",
                    &[64, 64],
                    "flat()",
                    "stream(hbar=[0.2, 0], psi=\"-cos(2*pi*y)/(2*pi)\")",
                )?;
                s.mc = McSettings {
                    paths: 4000,
                    t_final: 200.0,
                    dt: 5e-3,
                    ..McSettings::default()
                };
                s
            }
            "s3" => {
                let mut s = Self::new("S3", &[64, 64], &format!("conformal(phi=\"{S3_PHI}\")"), "constant(v=[0, 0])")?;
                s.rate.rays.push(vec![2.0, 0.0]);
                s.mc.paths = 0;
                s
            }
            "s4" => {
                let mut s = Self::new("S4", &[64, 64], &format!("conformal(phi=\"{S3_PHI}\")"), "sharp_closed(eta=[0.4, 0])")?;
                s.mc.paths = 0;
                s
            }
            "flat-constant" => {
                let mut s = Self::new("flat-constant", &[32, 32], "flat()", "constant(v=[0.2, 0])")?;
                s.mc = McSettings {
                    paths: 4000,
                    t_final: 200.0,
                    dt: 5e-3,
                    ..McSettings::default()
                };
                s
            }
            _ => {
                return Err(Error::Invalid(format!(
                    "unknown scenario '{name}' (built-ins: {})",
                    BUILTIN_NAMES.join(", ")
                )))
            }
        };
        if key == "shear" {
            s.name = "shear".into();
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn domain(&self) -> Result<TorusDomain> {
        TorusDomain::new(&self.resolution)
    }

    /// Whether paths can be simulated (constant metric).
    pub fn is_flat(&self) -> bool {
        self.metric.flat_gram(self.dim()).is_some()
    }

    pub fn with_resolution(mut self, resolution: &[usize]) -> Self {
        self.resolution = resolution.to_vec();
        self
    }

    pub fn echo(&self) -> ScenarioEcho {
        ScenarioEcho {
            name: self.name.clone(),
            resolution: self.resolution.clone(),
            metric: self.metric.to_string(),
            drift: self.drift.to_string(),
            solver: self.solver.clone(),
            mc: self.mc.clone(),
            rate: self.rate.clone(),
        }
    }
}

/// Serializable copy of a scenario for reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEcho {
    pub name: String,
    pub resolution: Vec<usize>,
    pub metric: String,
    pub drift: String,
    pub solver: SolverSettings,
    pub mc: McSettings,
    pub rate: RateSettings,
}
