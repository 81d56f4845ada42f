//! Scenario configuration files.
//!
//! ```toml
//! name = "tilted-shear"
//! base = "S2"            # optional: start from a built-in
//!
//! [domain]
//! resolution = [64, 64]
//!
//! [metric]
//! spec = "flat()"
//!
//! [drift]
//! spec = "stream(hbar=[0.2, 0], psi=\"-cos(2*pi*y)/(2*pi)\")"
//!
//! [solver]
//! eig_tol = 1e-10
//!
//! [mc]
//! paths = 4000
//! t_final = 200.0
//! dt = 5e-3
//!
//! [rate]
//! rays = [[1, 0]]
//! points = 5
//! ```

use serde::Deserialize;
use toml::Spanned;

use super::scenario::{McSettings, RateSettings, Scenario, SolverSettings};
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    base: Option<Spanned<String>>,
    domain: Option<RawDomain>,
    metric: Option<RawSpec>,
    drift: Option<RawSpec>,
    solver: Option<RawSolver>,
    mc: Option<RawMc>,
    rate: Option<RawRate>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    resolution: Spanned<Vec<usize>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    spec: Spanned<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    eig_tol: Option<f64>,
    newton_tol: Option<f64>,
    c_max: Option<f64>,
    fd_step: Option<f64>,
    flag_tol: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMc {
    paths: Option<usize>,
    t_final: Option<f64>,
    dt: Option<f64>,
    seed: Option<u64>,
    bins: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRate {
    rays: Option<Vec<Vec<f64>>>,
    points: Option<usize>,
    radius: Option<f64>,
    samples: Option<usize>,
    seed: Option<u64>,
    tilts: Option<Vec<Vec<f64>>>,
}

/// 1-based line and column of a byte offset.
fn line_column(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn at(src: &str, offset: usize, message: impl Into<String>) -> Error {
    let (line, column) = line_column(src, offset);
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Parse a spec string and attribute errors to its position in the file.
/// Parse errors inside the string are shifted by the opening quote.
fn spec_at<S: std::str::FromStr<Err = Error>>(src: &str, value: &Spanned<String>, what: &str) -> Result<S> {
    value.get_ref().parse::<S>().map_err(|e| match e {
        Error::Parse { column, message, .. } => at(src, value.span().start + column, format!("{what}: {message}")),
        other => at(src, value.span().start, format!("{what}: {other}")),
    })
}

pub fn parse_config(src: &str) -> Result<Scenario> {
    let raw: RawConfig = toml::from_str(src).map_err(|e| {
        let offset = e.span().map_or(0, |s| s.start);
        at(src, offset, e.message().to_string())
    })?;

    let mut scenario = match &raw.base {
        Some(b) => Scenario::builtin(b.get_ref()).map_err(|e| at(src, b.span().start, e.to_string()))?,
        None => {
            let (domain, metric, drift) = match (&raw.domain, &raw.metric, &raw.drift) {
                (Some(d), Some(m), Some(b)) => (d, m, b),
                _ => {
                    return Err(at(
                        src,
                        src.len(),
                        "[domain], [metric] and [drift] are required unless 'base' names a built-in scenario",
                    ))
                }
            };
            let resolution = domain.resolution.get_ref().clone();
            let dim = resolution.len();
            Scenario {
                name: "custom".into(),
                resolution,
                metric: spec_at(src, &metric.spec, "metric")?,
                drift: spec_at(src, &drift.spec, "drift")?,
                solver: SolverSettings::default(),
                mc: McSettings::default(),
                rate: RateSettings::for_dim(dim),
            }
        }
    };
    if raw.base.is_some() {
        if let Some(d) = &raw.domain {
            scenario.resolution = d.resolution.get_ref().clone();
        }
        if let Some(m) = &raw.metric {
            scenario.metric = spec_at(src, &m.spec, "metric")?;
        }
        if let Some(b) = &raw.drift {
            scenario.drift = spec_at(src, &b.spec, "drift")?;
        }
    }
    if let Some(d) = &raw.domain {
        crate::grid::TorusDomain::new(d.resolution.get_ref()).map_err(|e| at(src, d.resolution.span().start, e.to_string()))?;
    }
    if let Some(name) = raw.name {
        scenario.name = name;
    }
    if let Some(s) = raw.solver {
        let t = &mut scenario.solver;
        t.eig_tol = s.eig_tol.unwrap_or(t.eig_tol);
        t.newton_tol = s.newton_tol.unwrap_or(t.newton_tol);
        t.c_max = s.c_max.unwrap_or(t.c_max);
        t.fd_step = s.fd_step.unwrap_or(t.fd_step);
        t.flag_tol = s.flag_tol.unwrap_or(t.flag_tol);
    }
    if let Some(m) = raw.mc {
        let t = &mut scenario.mc;
        t.paths = m.paths.unwrap_or(t.paths);
        t.t_final = m.t_final.unwrap_or(t.t_final);
        t.dt = m.dt.unwrap_or(t.dt);
        t.seed = m.seed.unwrap_or(t.seed);
        t.bins = m.bins.unwrap_or(t.bins);
    }
    if let Some(r) = raw.rate {
        let t = &mut scenario.rate;
        t.rays = r.rays.unwrap_or(std::mem::take(&mut t.rays));
        t.points = r.points.unwrap_or(t.points);
        t.radius = r.radius.unwrap_or(t.radius);
        t.samples = r.samples.unwrap_or(t.samples);
        t.seed = r.seed.unwrap_or(t.seed);
        t.tilts = r.tilts.unwrap_or(std::mem::take(&mut t.tilts));
    }
    validate(&scenario)?;
    Ok(scenario)
}

impl Scenario {
    /// Render as a config file that parses back to the same scenario.
    pub fn to_config(&self) -> String {
        let list = |v: &[f64]| format!("[{}]", v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", "));
        let lists = |v: &[Vec<f64>]| format!("[{}]", v.iter().map(|x| list(x)).collect::<Vec<_>>().join(", "));
        let quote = |s: String| toml::Value::String(s).to_string();
        let res: Vec<String> = self.resolution.iter().map(|n| n.to_string()).collect();
        format!(
            "name = {}\n\n[domain]\nresolution = [{}]\n\n[metric]\nspec = {}\n\n[drift]\nspec = {}\n\n\
             [solver]\neig_tol = {:?}\nnewton_tol = {:?}\nc_max = {:?}\nfd_step = {:?}\nflag_tol = {:?}\n\n\
             [mc]\npaths = {}\nt_final = {:?}\ndt = {:?}\nseed = {}\nbins = {}\n\n\
             [rate]\nrays = {}\npoints = {}\nradius = {:?}\nsamples = {}\nseed = {}\ntilts = {}\n",
            quote(self.name.clone()),
            res.join(", "),
            quote(self.metric.to_string()),
            quote(self.drift.to_string()),
            self.solver.eig_tol,
            self.solver.newton_tol,
            self.solver.c_max,
            self.solver.fd_step,
            self.solver.flag_tol,
            self.mc.paths,
            self.mc.t_final,
            self.mc.dt,
            self.mc.seed,
            self.mc.bins,
            lists(&self.rate.rays),
            self.rate.points,
            self.rate.radius,
            self.rate.samples,
            self.rate.seed,
            lists(&self.rate.tilts),
        )
    }
}

fn validate(s: &Scenario) -> Result<()> {
    let d = s.dim();
    let bad = |m: String| Err(Error::Invalid(m));
    if s.rate.rays.iter().chain(&s.rate.tilts).any(|v| v.len() != d) {
        return bad(format!("rate rays and tilts must have {d} components"));
    }
    if s.rate.points < 2 {
        return bad("rate.points must be at least 2".into());
    }
    if !(s.solver.eig_tol > 0.0 && s.solver.newton_tol > 0.0 && s.solver.c_max > 0.0 && s.solver.fd_step > 0.0) {
        return bad("solver tolerances must be positive".into());
    }
    if s.mc.paths > 0 && s.mc.bins == 0 {
        return bad("mc.bins must be positive".into());
    }
    Ok(())
}

pub fn load_config(path: &std::path::Path) -> Result<Scenario> {
    let src = std::fs::read_to_string(path)?;
    parse_config(&src).map_err(|e| e.context(path.display().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_round_trip_through_config() {
        for name in super::super::scenario::BUILTIN_NAMES {
            let s = Scenario::builtin(name).unwrap();
            let back = parse_config(&s.to_config()).unwrap();
            assert_eq!(back.echo(), s.echo(), "{name}");
        }
    }

    #[test]
    fn syntax_error_has_position() {
        let src = "[domain]\nresolution = [64, , 64]\n";
        match parse_config(src) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_expression_points_into_string() {
        let src = "[domain]\nresolution = [8]\n[metric]\nspec = \"flat()\"\n[drift]\nspec = \"components(b=['sin(2*pi*x'])\"\n";
        match parse_config(src) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 6);
                assert!(column > 8, "{column}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let src = "base = \"S1\"\n[mc]\npath = 3\n";
        assert!(matches!(parse_config(src), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn base_with_overrides() {
        let s = parse_config("base = \"S2\"\nname = \"x\"\n[mc]\npaths = 10\n").unwrap();
        assert_eq!((s.name.as_str(), s.mc.paths, s.resolution.clone()), ("x", 10, vec![64, 64]));
    }
}
