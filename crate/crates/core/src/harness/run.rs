//! Subcommands of the command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::checks::{mc_block, rate_row, Verifier};
use super::config::load_config;
use super::report::{Check, CompareBlock, HodgeBlock, RateBlock, Report, ScgfBlock, ScgfRow};
use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::pathwise::{mc_batch, paired_covariance_gap};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "TORUS_HOMOLOGY_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Hodge,
    Scgf,
    Rate,
    Simulate,
    Compare,
    Verify,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Hodge => "hodge",
            Command::Scgf => "scgf",
            Command::Rate => "rate",
            Command::Simulate => "simulate",
            Command::Compare => "compare",
            Command::Verify => "verify",
            Command::Report => "report",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub scenario: Option<String>,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tol_scale: f64,
    pub ray: Option<Vec<f64>>,
    pub points: Option<usize>,
    pub a: Option<String>,
    pub b: Option<String>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            scenario: None,
            config: None,
            out: None,
            seed: None,
            tol_scale: 1.0,
            ray: None,
            points: None,
            a: None,
            b: None,
        }
    }
}

impl RunOptions {
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    /// 0 when every check passed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.report.passed {
            0
        } else {
            2
        }
    }
}

/// Built-in name or config path.
pub fn resolve_scenario(spec: &str) -> Result<Scenario> {
    let path = Path::new(spec);
    if path.is_file() {
        load_config(path)
    } else {
        Scenario::builtin(spec)
    }
}

fn scenario_from(opts: &RunOptions) -> Result<Scenario> {
    let mut s = match (&opts.config, &opts.scenario) {
        (Some(p), _) => load_config(p)?,
        (None, Some(name)) => resolve_scenario(name)?,
        (None, None) => return Err(Error::Invalid("either --scenario or --config is required".into())),
    };
    if let Some(seed) = opts.seed {
        s.mc.seed = seed;
    }
    if let Some(ray) = &opts.ray {
        if ray.len() != s.dim() {
            return Err(Error::Invalid(format!("--ray needs {} components", s.dim())));
        }
        s.rate.rays = vec![ray.clone()];
    }
    if let Some(p) = opts.points {
        if p < 2 {
            return Err(Error::Invalid("--points must be at least 2".into()));
        }
        s.rate.points = p;
    }
    Ok(s)
}

fn build(s: &Scenario) -> Result<Model<f64>> {
    Model::build(s.domain()?, &s.metric, &s.drift).map_err(|e| e.context(format!("scenario {}", s.name)))
}

fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)?;
        self.files.push(path);
        Ok(())
    }
}

fn hodge_block(s: &Scenario, model: &Model<f64>) -> HodgeBlock {
    let b = &model.basis;
    HodgeBlock {
        a: b.a.to_rows(),
        b: b.b.to_rows(),
        hbar: b.hbar.clone(),
        flags: model.flags(s.solver.flag_tol),
        diagnostics: b.diagnostics.clone(),
        stationarity_residual: model.inv.stationarity_residual,
        codifferential_residual: model.inv.codifferential_residual,
        peclet: model.gen.peclet,
        warnings: model.gen.warnings.clone(),
        tolerance: s.solver.eig_tol,
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:.12e}")
}

fn header(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}{i}")).collect()
}

/// Homologies `h̄ + s v` along each ray, `s` evenly spaced in `[0, radius]`.
pub fn ray_points(s: &Scenario, hbar: &[f64]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for ray in &s.rate.rays {
        for k in 0..s.rate.points {
            let t = s.rate.radius * k as f64 / (s.rate.points - 1) as f64;
            out.push(hbar.iter().zip(ray).map(|(h, v)| h + t * v).collect());
        }
    }
    out
}

pub fn rate_csv(d: usize, rows: &[super::report::RateRow]) -> String {
    let mut cols = header("h", d);
    cols.extend(["G", "Q", "gap"].map(String::from));
    cols.extend(header("c", d).into_iter().map(|c| format!("{c}*")));
    cols.push("iterations".into());
    let mut out = cols.join(",") + "\n";
    for r in rows {
        let mut cells: Vec<String> = r.h.iter().map(|&v| fmt_num(v)).collect();
        cells.extend([r.g, r.q, r.gap].map(fmt_num));
        cells.extend(r.c_star.iter().map(|&v| fmt_num(v)));
        cells.push(r.iterations.to_string());
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

fn scgf_csv(d: usize, rows: &[ScgfRow]) -> String {
    let mut cols = header("c", d);
    cols.push("lambda".into());
    cols.extend(header("dlambda", d));
    cols.push("residual".into());
    let mut out = cols.join(",") + "\n";
    for r in rows {
        let mut cells: Vec<String> = r.c.iter().map(|&v| fmt_num(v)).collect();
        cells.push(fmt_num(r.lambda));
        cells.extend(r.gradient.iter().map(|&v| fmt_num(v)));
        cells.push(fmt_num(r.residual));
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

pub fn run(cmd: Command, opts: &RunOptions) -> Result<Outcome> {
    let mut w = Writer::new(opts.out_dir())?;
    let report = match cmd {
        Command::Report => aggregate(&mut w)?,
        Command::Compare => compare(opts, &mut w)?,
        _ => single(cmd, opts, &mut w)?,
    };
    Ok(Outcome { report, files: w.files })
}

fn single(cmd: Command, opts: &RunOptions, w: &mut Writer) -> Result<Report> {
    let s = scenario_from(opts)?;
    let model = build(&s)?;
    let v = Verifier::new(&s, &model, opts.tol_scale);
    let d = s.dim();
    let stem = format!("{}-{}", cmd.name(), file_stem(&s.name));
    let mut report = Report::new(cmd.name(), Some(s.echo()));
    report.metadata.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    report.hodge = Some(hodge_block(&s, &model));
    match cmd {
        Command::Hodge => {
            report.extend(v.structural());
            report.extend(v.constant_length());
        }
        Command::Scgf => {
            let mut tilts = vec![vec![0.0; d]];
            tilts.extend(s.rate.tilts.iter().cloned());
            let mut rows = Vec::new();
            for c in &tilts {
                let ev = v.solver.evaluate(c, None).map_err(|e| e.context(format!("scgf at c = {c:?}")))?;
                rows.push(ScgfRow {
                    c: c.clone(),
                    lambda: ev.lambda,
                    gradient: ev.gradient.clone(),
                    residual: ev.residual,
                });
            }
            report.push(v.gradient_at_zero());
            report.push(v.gauge());
            let (gc, check) = v.fluctuation_symmetry();
            report.extend(check);
            w.write(&format!("{stem}.csv"), &scgf_csv(d, &rows))?;
            report.scgf = Some(ScgfBlock {
                rows,
                tolerance: s.solver.eig_tol,
            });
            report.rate = Some(RateBlock {
                rows: Vec::new(),
                gc_defects: gc,
                tolerance: s.solver.eig_tol,
            });
        }
        Command::Rate => {
            let hs = ray_points(&s, &model.basis.hbar);
            let mut rows = Vec::new();
            for (h, r) in hs.iter().zip(v.solver.legendre_many(&hs)) {
                rows.push(rate_row(&r.map_err(|e| e.context(format!("rate at h = {h:?}")))?));
            }
            let worst = rows.iter().map(|r| r.g - r.q).fold(f64::NEG_INFINITY, f64::max);
            report.push(Check::below("G <= Q along rays (max G - Q)", worst, 1e-6 * opts.tol_scale));
            let mut drop = 0.0f64;
            let mut at_hbar = 0.0f64;
            for ray in rows.chunks(s.rate.points) {
                at_hbar = at_hbar.max(ray[0].gap.abs());
                for pair in ray.windows(2) {
                    drop = drop.max(pair[0].gap - pair[1].gap);
                }
            }
            report.push(Check::below("Q - G nondecreasing along rays (max drop)", drop, 1e-7 * opts.tol_scale));
            report.push(Check::below("Q - G at hbar", at_hbar, 1e-8 * opts.tol_scale));
            w.write(&format!("{stem}.csv"), &rate_csv(d, &rows))?;
            report.rate = Some(RateBlock {
                rows,
                gc_defects: Vec::new(),
                tolerance: s.solver.newton_tol,
            });
        }
        Command::Simulate => {
            if !s.is_flat() {
                return Err(Error::Unsupported(format!(
                    "scenario {} has a non-constant metric; pathwise simulation needs a flat one",
                    s.name
                )));
            }
            let (stats, block, checks) = v.monte_carlo()?;
            report.extend(checks);
            report.metadata.insert("winding_convention".into(), "coordinate coframe on the lift, h_T = (X_T - X_0)/T".into());
            w.write(&format!("{stem}-samples.csv"), &stats.samples_csv())?;
            if let Some(h) = &stats.histogram {
                w.write(&format!("{stem}-histogram.csv"), &h.to_csv())?;
            }
            report.mc = Some(block);
        }
        Command::Verify => {
            report.extend(v.structural());
            report.push(v.gradient_at_zero());
            let (_, hess) = v.hessian_vs_b();
            report.push(hess);
            report.push(v.gauge());
            let (rows, bound) = v.quadratic_bound();
            report.push(bound);
            report.push(v.gaussian_current());
            report.extend(v.perturbation(0.1));
            let (gc, check) = v.fluctuation_symmetry();
            report.extend(check);
            report.extend(v.constant_length());
            report.extend(v.scenario_specific());
            if s.is_flat() && s.mc.paths > 1 {
                let (stats, block, checks) = v.monte_carlo()?;
                report.extend(checks);
                w.write(&format!("{stem}-samples.csv"), &stats.samples_csv())?;
                report.mc = Some(block);
            }
            w.write(&format!("{stem}-rate.csv"), &rate_csv(d, &rows))?;
            report.rate = Some(RateBlock {
                rows,
                gc_defects: gc,
                tolerance: s.solver.newton_tol,
            });
        }
        Command::Compare | Command::Report => unreachable!(),
    }
    w.write(&format!("{stem}.json"), &report.to_json()?)?;
    Ok(report)
}

fn compare(opts: &RunOptions, w: &mut Writer) -> Result<Report> {
    let (Some(a), Some(b)) = (&opts.a, &opts.b) else {
        return Err(Error::Invalid("compare needs --a and --b".into()));
    };
    let sa = resolve_scenario(a)?;
    let sb = resolve_scenario(b)?;
    if sa.dim() != sb.dim() {
        return Err(Error::Invalid("compared scenarios must have the same dimension".into()));
    }
    let ma = build(&sa)?;
    let mb = build(&sb)?;
    let va = Verifier::new(&sa, &ma, opts.tol_scale);
    let vb = Verifier::new(&sb, &mb, opts.tol_scale);
    let mut report = Report::new("compare", None);
    report.metadata.insert("a".into(), sa.name.clone());
    report.metadata.insert("b".into(), sb.name.clone());

    let hs = ray_points(&sa, &ma.basis.hbar);
    let rates = |v: &Verifier| -> Result<Vec<super::report::RateRow>> {
        v.solver.legendre_many(&hs).into_iter().map(|r| r.map(|r| rate_row(&r))).collect()
    };
    let rates_a = rates(&va)?;
    let rates_b = rates(&vb)?;
    let predicted_gap = mb.basis.b[(0, 0)] - ma.basis.b[(0, 0)];
    let mut block = CompareBlock {
        a: sa.name.clone(),
        b: sb.name.clone(),
        hbar_a: ma.basis.hbar.clone(),
        hbar_b: mb.basis.hbar.clone(),
        b_a: ma.basis.b.to_rows(),
        b_b: mb.basis.b.to_rows(),
        mc_a: None,
        mc_b: None,
        covariance_gap: None,
        predicted_gap,
        rates_a,
        rates_b,
    };
    report.push(Check::below(
        "equal rotation numbers",
        ma.basis.hbar.iter().zip(&mb.basis.hbar).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
        1e-6 * opts.tol_scale,
    ));

    if sa.is_flat() && sb.is_flat() && sa.mc.paths > 1 {
        // Common random numbers: both batches use a's settings and seed.
        let mut cfg = va.batch_config()?;
        if let Some(seed) = opts.seed {
            cfg.master_seed = seed;
        }
        cfg.hist_bins = 0;
        let st_a = mc_batch(&va.diffusion()?, &cfg)?;
        let st_b = mc_batch(&vb.diffusion()?, &cfg)?;
        let d = sa.dim();
        for (st, hbar, name) in [(&st_a, &ma.basis.hbar, &sa.name), (&st_b, &mb.basis.hbar, &sb.name)] {
            let z = (0..d).map(|i| ((st.mean[i] - hbar[i]) / st.mean_se[i]).abs()).fold(0.0, f64::max);
            report.push(Check::below(format!("MC mean winding of {name} vs hbar (in SE)"), z, 3.0));
        }
        let (gap, se) = paired_covariance_gap(&st_a, &st_b, 0, 0)?;
        report.push(Check::below("MC covariance gap vs B_b - B_a (in SE)", (gap - predicted_gap).abs() / se, 3.0));
        if predicted_gap.abs() > 1e-6 {
            report.push(Check::above("MC covariance gap significance (in SE)", gap * predicted_gap.signum() / se, 3.0));
        }
        w.write(&format!("compare-{}-samples.csv", file_stem(&sa.name)), &st_a.samples_csv())?;
        w.write(&format!("compare-{}-samples.csv", file_stem(&sb.name)), &st_b.samples_csv())?;
        block.mc_a = Some(mc_block(&st_a, None));
        block.mc_b = Some(mc_block(&st_b, None));
        block.covariance_gap = Some((gap, se));
    }
    report.compare = Some(block);
    let stem = format!("compare-{}-{}", file_stem(&sa.name), file_stem(&sb.name));
    w.write(&format!("{stem}.json"), &report.to_json()?)?;
    Ok(report)
}

/// Collect every report in the output directory into `summary.json`.
fn aggregate(w: &mut Writer) -> Result<Report> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&w.dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != "summary.json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Invalid(format!("no reports found in {}", w.dir.display())));
    }
    let mut summary = Report::new("report", None);
    for p in &paths {
        let src = std::fs::read_to_string(p)?;
        let r = Report::from_json(&src).map_err(|e| e.context(p.display().to_string()))?;
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        summary.metadata.insert(stem.clone(), if r.passed { "pass" } else { "fail" }.into());
        for mut c in r.checks {
            c.name = format!("{stem}: {}", c.name);
            summary.push(c);
        }
    }
    w.write("summary.json", &summary.to_json()?)?;
    Ok(summary)
}
