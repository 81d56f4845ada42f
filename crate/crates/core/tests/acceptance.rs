//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use torus_homology::functional::{evaluate_i, minimal_gaussian_current, perturbation_pair};
use torus_homology::grid::OneForm;
use torus_homology::harness::Scenario;
use torus_homology::pathwise::{mc_batch, paired_covariance_gap, BatchConfig, FlatDiffusion, PathParams};
use torus_homology::spectral::ScgfSolver;
use torus_homology::Model;

const I0_1: f64 = 1.2660658777520082;
const SCENARIOS: [&str; 5] = ["S1", "S2", "S3", "S4", "flat-constant"];

fn shear_b11() -> f64 {
    1.0 + 1.0 / (2.0 * PI * PI)
}

struct Models(BTreeMap<String, (Scenario, Model)>);

impl Models {
    fn get(&mut self, name: &str) -> &(Scenario, Model) {
        self.0.entry(name.to_string()).or_insert_with(|| {
            let s = Scenario::builtin(name).unwrap();
            let m = Model::build(s.domain().unwrap(), &s.metric, &s.drift).unwrap();
            (s, m)
        })
    }
}

fn solver<'a>(s: &Scenario, m: &'a Model) -> ScgfSolver<'a, f64> {
    ScgfSolver::new(m, s.solver.spectral_options())
}

/// `h̄ + r u`, `u` uniform on the sphere, `r` uniform in `[0, 1]`.
fn sample_h(m: &Model, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = m.dim();
    (0..count)
        .map(|_| {
            let u: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r: f64 = rng.random();
            u.iter().zip(&m.basis.hbar).map(|(v, h)| h + r * v / norm).collect()
        })
        .collect()
}

type Outcome = Result<(bool, String), String>;

fn criterion_1(ms: &mut Models) -> Outcome {
    let (s, m) = ms.get("S1");
    let sol = solver(s, m);
    let mut worst = 0.0f64;
    for k in [-2.0, -1.0, 1.0, 2.0] {
        let l = sol.lambda(&[k]).map_err(|e| e.to_string())?;
        worst = worst.max((l - (0.3 * k + 0.5 * k * k)).abs());
    }
    let g0 = sol.legendre(&[0.0]).map_err(|e| e.to_string())?.g;
    let gbar = sol.legendre(&m.basis.hbar).map_err(|e| e.to_string())?.g;
    let ok = worst < 1e-5 && (g0 - 0.045).abs() < 1e-5 && gbar.abs() < 1e-8;
    Ok((
        ok,
        format!(
            "n = {}, max |Lambda(k) - (0.3k + k^2/2)| = {worst:.2e} < 1e-5, |G(0) - 0.045| = {:.2e} < 1e-5, |G(hbar)| = {:.2e} < 1e-8",
            s.resolution[0],
            (g0 - 0.045).abs(),
            gbar.abs()
        ),
    ))
}

fn criterion_2(ms: &mut Models) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut parts = Vec::new();
    for name in SCENARIOS {
        let (s, m) = ms.get(name);
        let sol = solver(s, m);
        let hs = sample_h(m, 20, 0x51);
        let mut w = f64::NEG_INFINITY;
        for r in sol.legendre_many(&hs) {
            let r = r.map_err(|e| format!("{name}: {e}"))?;
            w = w.max(r.g - r.q);
        }
        parts.push(format!("{name} {w:.2e}"));
        worst = worst.max(w);
    }
    Ok((worst <= 1e-6, format!("max G - Q over 20 h per scenario = {worst:.2e} <= 1e-6 ({})", parts.join(", "))))
}

fn criterion_3() -> Outcome {
    let s = Scenario::builtin("S2").unwrap().with_resolution(&[128, 128]);
    let m = Model::build(s.domain().unwrap(), &s.metric, &s.drift).map_err(|e| e.to_string())?;
    let sol = solver(&s, &m);
    let hess = sol.hessian0().map_err(|e| e.to_string())?;
    let exact = [[shear_b11(), 0.0], [0.0, 1.0]];
    let mut hess_err = 0.0f64;
    let mut b_err = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            hess_err = hess_err.max((hess[(i, j)] - exact[i][j]).abs());
            b_err = b_err.max((m.basis.b[(i, j)] - exact[i][j]).abs());
        }
    }
    let sf = torus_homology::functional::small_fluctuation_limit(&m, &[1.0, 0.0], &[0.2, 0.1, 0.05])
        .map_err(|e| e.to_string())?;
    let target = 0.5 / shear_b11();
    let lim_err = (sf.limit - target).abs();
    let ok = hess_err < 1e-2 && b_err < 1e-4 && lim_err < 2e-2;
    Ok((
        ok,
        format!(
            "n = 128^2, |Hess Lambda(0) - diag(1 + 1/(2 pi^2), 1)| = {hess_err:.2e} < 1e-2, |B - closed form| = {b_err:.2e} < 1e-4, |eps-limit - {target:.6}| = {lim_err:.2e} < 2e-2"
        ),
    ))
}

fn criterion_4(ms: &mut Models) -> Outcome {
    let (s, m) = ms.get("flat-constant");
    let sol = solver(s, m);
    let mut eq = 0.0f64;
    for r in sol.legendre_many(&sample_h(m, 20, 0x4a)) {
        let r = r.map_err(|e| e.to_string())?;
        eq = eq.max((r.g - r.q).abs());
    }
    let (s, m) = ms.get("S3");
    let sol = solver(s, m);
    let r = sol.legendre(&[2.0, 0.0]).map_err(|e| e.to_string())?;
    let gap_floor = 10.0 * s.solver.newton_tol.max(s.solver.eig_tol);
    let s3_len = m.basis.constant_length_diagnostic(&m.calc, &m.gen, &m.inv).length_variance;
    let mut flat_len = 0.0f64;
    for name in ["S1", "S2", "flat-constant"] {
        let (_, m) = ms.get(name);
        flat_len = flat_len.max(m.basis.constant_length_diagnostic(&m.calc, &m.gen, &m.inv).length_variance);
    }
    let ok = eq < 1e-4 && r.g < r.q && r.gap() > gap_floor && flat_len < 1e-12 && s3_len > 0.1;
    Ok((
        ok,
        format!(
            "flat-constant max |G - Q| = {eq:.2e} < 1e-4; S3 G(2,0) = {:.6} < Q(2,0) = {:.6} (2 I0(1) = {:.6}), gap {:.2e} > {gap_floor:.0e}; length variance flat {flat_len:.2e} < 1e-12, S3 {s3_len:.3} > 0.1",
            r.g,
            r.q,
            2.0 * I0_1,
            r.gap()
        ),
    ))
}

fn criterion_5(ms: &mut Models) -> Outcome {
    let (s, m) = ms.get("S4");
    let sol = solver(s, m);
    let cbar = m.closed_class().ok_or("S4 drift has no closed class")?;
    let mut s4 = 0.0f64;
    for c in [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, 1.0]] {
        s4 = s4.max(sol.gc_defect(&c, &cbar).map_err(|e| e.to_string())?.abs());
    }
    let (s, m) = ms.get("S2");
    let sol = solver(s, m);
    let cbar = m.basis.a_inv.mul_vec(&m.basis.hbar);
    let s2 = sol.gc_defect(&[1.0, 0.0], &cbar).map_err(|e| e.to_string())?.abs();
    Ok((
        s4 < 1e-4 && s2 > 1e-2,
        format!("S4 max defect over 5 tilts = {s4:.2e} < 1e-4; S2 defect at (1,0) = {s2:.3e} > 1e-2"),
    ))
}

fn criterion_6(ms: &mut Models) -> Outcome {
    let mut gauss = 0.0f64;
    let mut closed = 0.0f64;
    let mut bound = f64::NEG_INFINITY;
    let eps = 0.1;
    for name in SCENARIOS {
        let (s, m) = ms.get(name);
        for h in sample_h(m, 10, 0x6c) {
            let p = minimal_gaussian_current(m, &h).map_err(|e| e.to_string())?;
            let i = evaluate_i(m, &p).map_err(|e| e.to_string())?;
            gauss = gauss.max((i - m.basis.q_rate(&h)).abs());
        }
        let sol = solver(s, m);
        for h in sample_h(m, 3, 0x6d) {
            let dir: Vec<f64> = h.iter().zip(&m.basis.hbar).map(|(a, b)| a - b).collect();
            let p = perturbation_pair(m, &dir, eps).map_err(|e| format!("{name}: {e}"))?;
            let i = evaluate_i(m, &p.pair).map_err(|e| e.to_string())?;
            closed = closed.max((i - p.closed_form_rate(m)).abs());
            let target: Vec<f64> = dir.iter().zip(&m.basis.hbar).map(|(v, b)| b + eps * v).collect();
            let g = sol.legendre(&target).map_err(|e| e.to_string())?.g;
            bound = bound.max(g - i);
        }
    }
    Ok((
        gauss < 1e-6 && closed < 1e-8 && bound <= 1e-6,
        format!(
            "max |I(Gaussian current) - Q| = {gauss:.2e} < 1e-6; max |I(perturbation) - closed form| = {closed:.2e} < 1e-8; max G(hbar + eps h) - I = {bound:.2e} <= 1e-6"
        ),
    ))
}

fn criterion_7(ms: &mut Models) -> Outcome {
    let (fc, mf) = ms.get("flat-constant");
    let flat = FlatDiffusion::from_specs(&mf.metric_spec, &mf.drift_spec, 2).map_err(|e| e.to_string())?;
    let cfg = BatchConfig {
        n_paths: 4000,
        params: PathParams::new(200.0, 5e-3).map_err(|e| e.to_string())?,
        master_seed: fc.mc.seed,
        x0: vec![0.0, 0.0],
        hist_bins: 0,
    };
    let (_, ms2) = ms.get("S2");
    let shear = FlatDiffusion::from_specs(&ms2.metric_spec, &ms2.drift_spec, 2).map_err(|e| e.to_string())?;
    let a = mc_batch(&flat, &cfg).map_err(|e| e.to_string())?;
    let b = mc_batch(&shear, &cfg).map_err(|e| e.to_string())?;
    let z_mean = |st: &torus_homology::pathwise::BatchStatistics| {
        let z0 = (st.mean[0] - 0.2).abs() / st.mean_se[0];
        let z1 = st.mean[1].abs() / st.mean_se[1];
        z0.max(z1)
    };
    let (za, zb) = (z_mean(&a), z_mean(&b));
    let ca = (a.cov_t[(0, 0)] - 1.0).abs() / a.cov_t_se[(0, 0)];
    let cb = (b.cov_t[(0, 0)] - shear_b11()).abs() / b.cov_t_se[(0, 0)];
    let (gap, se) = paired_covariance_gap(&a, &b, 0, 0).map_err(|e| e.to_string())?;
    let ok = za < 3.0 && zb < 3.0 && ca < 3.0 && cb < 3.0 && gap / se > 3.0;
    Ok((
        ok,
        format!(
            "4000 paths, T = 200, dt = 5e-3: mean z constant {za:.2}, shear {zb:.2} (< 3); cov*T(1,1) {:.4} z {ca:.2} vs 1, {:.4} z {cb:.2} vs {:.6} (< 3); gap {gap:.4} = {:.1} SE (> 3)",
            a.cov_t[(0, 0)],
            b.cov_t[(0, 0)],
            shear_b11(),
            gap / se
        ),
    ))
}

fn criterion_8(ms: &mut Models) -> Outcome {
    let mut adj = 0.0f64;
    let mut gauge = 0.0f64;
    let mut grad = 0.0f64;
    let mut resid = 0.0f64;
    let tau = 2.0 * PI;
    for name in SCENARIOS {
        let (s, m) = ms.get(name);
        let calc = &m.calc;
        let mu = &m.inv.measure;
        let n = calc.nodes();
        let d = m.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(0x8a);
        let f: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let w = OneForm::from_vec(d, n, (0..d * n).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap();
        let lhs: Vec<f64> = f.iter().zip(calc.codifferential(mu, &w)).map(|(a, b)| a * b).collect();
        let rhs = calc.inner(mu, &calc.differential(&f), &w);
        adj = adj.max((mu.integrate(&lhs) + rhs).abs() / (1.0 + rhs.abs()));

        let sol = solver(s, m);
        let c = vec![0.5; d];
        let dom = calc.domain();
        let u: Vec<f64> = (0..n)
            .map(|x| {
                let p = dom.point(x);
                0.3 * (tau * p[0]).sin() + 0.2 * (tau * p[d - 1]).cos()
            })
            .collect();
        let base = sol.lambda(&c).map_err(|e| e.to_string())?;
        let shifted = sol.principal_eigen(&sol.assemble_shifted(&c, &u), None).map_err(|e| e.to_string())?;
        gauge = gauge.max((base - shifted.lambda).abs());

        let ev = sol.evaluate(&vec![0.0; d], None).map_err(|e| e.to_string())?;
        for (g, h) in ev.gradient.iter().zip(&m.basis.hbar) {
            grad = grad.max((g - h).abs());
        }
        resid = resid.max(m.inv.stationarity_residual).max(m.inv.codifferential_residual);
    }

    let (_, m) = ms.get("S2");
    let diff = FlatDiffusion::from_specs(&m.metric_spec, &m.drift_spec, 2).map_err(|e| e.to_string())?;
    let cfg = BatchConfig {
        n_paths: 64,
        params: PathParams::new(5.0, 5e-3).map_err(|e| e.to_string())?,
        master_seed: 7,
        x0: vec![0.0, 0.0],
        hist_bins: 4,
    };
    let csv_with = |threads: usize| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        pool.install(|| mc_batch(&diff, &cfg)).map(|s| s.samples_csv()).map_err(|e| e.to_string())
    };
    let one = csv_with(1)?;
    let identical = [2, 4].iter().map(|&t| csv_with(t)).collect::<Result<Vec<_>, _>>()?.iter().all(|c| *c == one);

    let ok = adj < 1e-12 && gauge < 1e-8 && grad < 1e-6 && resid < 1e-8 && identical;
    Ok((
        ok,
        format!(
            "adjointness {adj:.1e} < 1e-12, gauge {gauge:.1e} < 1e-8, |grad Lambda(0) - hbar| {grad:.1e} < 1e-6, residuals {resid:.1e} < 1e-8, CSV identical across 1/2/4 threads: {identical}"
        ),
    ))
}

fn main() -> ExitCode {
    let mut ms = Models(BTreeMap::new());
    let criteria: Vec<(&str, Box<dyn FnOnce(&mut Models) -> Outcome>)> = vec![
        ("1 analytic Gaussian oracle (S1)", Box::new(criterion_1)),
        ("2 quadratic bound G <= Q", Box::new(criterion_2)),
        ("3 Hessian identity and small-fluctuation limit (S2)", Box::new(|_| criterion_3())),
        ("4 rigidity dichotomy", Box::new(criterion_4)),
        ("5 Gallavotti-Cohen symmetry", Box::new(criterion_5)),
        ("6 upper-bound oracles", Box::new(criterion_6)),
        ("7 Monte Carlo counterexample", Box::new(criterion_7)),
        ("8 structural invariants", Box::new(criterion_8)),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let (ok, detail) = match run(&mut ms) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        println!(
            "{} criterion {name}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        println!("acceptance: all 8 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 8 criteria failed");
        ExitCode::FAILURE
    }
}
