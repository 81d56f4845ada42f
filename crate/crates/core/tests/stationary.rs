use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;
use torus_homology::grid::{DiscreteCalculus, MetricSpec, TorusDomain};
use torus_homology::stationary::{assemble_generator, invariant_measure, DriftField, DriftSpec};
use torus_homology::Model;

const SHEAR: &str = "stream(hbar=[0.2, 0], psi=\"-cos(2*pi*y)/(2*pi)\")";
const S3_METRIC: &str = "conformal(phi=\"0.5*cos(2*pi*x)\")";

fn model(res: &[usize], metric: &str, drift: &str) -> Model {
    Model::build(TorusDomain::new(res).unwrap(), &metric.parse().unwrap(), &drift.parse().unwrap()).unwrap()
}

fn shear() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| model(&[32, 32], "flat()", SHEAR))
}

fn s4() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| model(&[32, 32], S3_METRIC, "sharp_closed(eta=[0.4, 0])"))
}

fn mixed() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| {
        model(
            &[24, 24],
            "diag(gxx=\"1+0.3*sin(2*pi*y)\", gyy=\"1.2+0.2*cos(2*pi*x)\")",
            "components(b=[\"0.5+cos(2*pi*y)+0.3*sin(2*pi*x)\", \"0.2*cos(2*pi*x)\"])",
        )
    })
}

#[test]
fn zero_drift_generator_is_half_laplacian() {
    let spec: MetricSpec = "flat()".parse().unwrap();
    let calc = DiscreteCalculus::<f64>::from_spec(TorusDomain::new(&[10, 12]).unwrap(), &spec).unwrap();
    let b = DriftField::from_spec(&DriftSpec::zero(2), &calc).unwrap();
    let gen = assemble_generator(&calc, &b).unwrap();
    let lap = calc.laplacian(calc.volume_measure());
    let l = gen.matrix();
    let n = calc.nodes();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let (a, c) = (l.mul_vec(&e), lap.mul_vec(&e));
        for j in 0..n {
            assert!((a[j] - 0.5 * c[j]).abs() < 1e-12);
        }
    }
    assert!(l.transpose().mul_vec(&vec![1.0; n]).iter().all(|v| v.abs() < 1e-10));
    let f: Vec<f64> = (0..n).map(|i| ((i * 7) as f64).sin()).collect();
    let q: f64 = f.iter().zip(l.mul_vec(&f)).map(|(a, b)| a * b).sum();
    assert!(q <= 0.0);
}

#[test]
fn constant_drift_advects() {
    let m = model(&[256], "flat()", "constant(v=[0.3])");
    let f = m.calc.domain().sample(|p| (2.0 * PI * p[0]).sin());
    let lf = m.gen.apply(&f);
    assert!((lf[0] - 0.3 * 2.0 * PI).abs() <= 1e-3, "{}", lf[0]);
}

#[test]
fn constants_are_annihilated() {
    for m in [shear(), s4(), mixed()] {
        let l1 = m.gen.apply(&vec![1.0; m.calc.nodes()]);
        assert!(l1.iter().all(|v| v.abs() < 1e-12));
    }
}

#[test]
fn divergence_free_drift_has_uniform_measure() {
    let m = shear();
    let n = m.calc.nodes() as f64;
    assert!(m.inv.m.iter().all(|&p| (p * n - 1.0).abs() < 1e-10));
    let b = m.gen.drift().components();
    assert!(m.inv.r.iter().zip(b).all(|(r, b)| (r - b).abs() < 1e-8));
    assert!(m.inv.stationarity_residual < 1e-10);
    assert!(m.inv.potential.iter().all(|v| (v - m.inv.potential[0]).abs() < 1e-10));
}

#[test]
fn zero_drift_measure_is_normalized_volume() {
    let m = model(&[32, 32], S3_METRIC, "constant(v=[0, 0])");
    let total = m.calc.total_volume();
    for (p, w) in m.inv.m.iter().zip(m.calc.volume()) {
        assert!((p - w / total).abs() < 1e-12);
    }
    assert!(m.inv.density.iter().all(|d| (d - 1.0 / total).abs() < 1e-10));
    assert!(m.inv.r.iter().all(|v| v.abs() < 1e-10));
    let f = m.flags(1e-8);
    assert!(f.reversible && f.quasi_reversible && f.homologically_reversible && f.typically_reversible);
}

#[test]
fn classification_of_builtin_drifts() {
    let s1 = model(&[64], "flat()", "constant(v=[0.3])");
    let f = s1.flags(1e-8);
    assert!(f.quasi_reversible && f.homologically_reversible);
    assert!(!f.typically_reversible && !f.reversible);

    let f = shear().flags(1e-8);
    assert!(!f.quasi_reversible && !f.homologically_reversible && !f.reversible);
    assert!((f.r_pairing_std - 0.5f64.sqrt()).abs() < 1e-2, "{}", f.r_pairing_std);

    let f = s4().flags(1e-8);
    assert!(f.quasi_reversible && !f.reversible);
}

#[test]
fn codifferential_of_gr_vanishes_at_fine_resolution() {
    let m = model(&[128, 128], S3_METRIC, "sharp_closed(eta=[0.4, 0])");
    assert!(m.inv.codifferential_residual < 1e-8, "{}", m.inv.codifferential_residual);
    assert!(m.inv.stationarity_residual < 1e-8);
}

fn apply_diff(m: &Model, seed: u64) -> f64 {
    let split = m.inv.symmetric_split_generator(&m.calc);
    let n = m.calc.nodes();
    let f: Vec<f64> = (0..n).map(|i| ((i as u64 ^ seed) as f64 * 0.618).sin()).collect();
    let a = m.gen.apply(&f);
    let b = split.mul_vec(&f);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn split_generator_matches_when_flux_is_axis_constant() {
    assert!(apply_diff(shear(), 3) < 1e-8);
    assert!(apply_diff(s4(), 5) < 1e-8);
}

#[test]
fn split_generator_defect_is_second_order() {
    let drift = "components(b=[\"0.5+cos(2*pi*y)+0.3*sin(2*pi*x)\", \"0.2*cos(2*pi*x)\"])";
    let smooth = |m: &Model| {
        let split = m.inv.symmetric_split_generator(&m.calc);
        let f = m.calc.domain().sample(|p| (2.0 * PI * p[0]).cos() * (2.0 * PI * p[1]).sin());
        let a = m.gen.apply(&f);
        let b = split.mul_vec(&f);
        a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    };
    let coarse = smooth(&model(&[16, 16], "flat()", drift));
    let fine = smooth(&model(&[32, 32], "flat()", drift));
    assert!(coarse > 1e-8);
    assert!(coarse / fine > 3.5, "{coarse} {fine}");
}

#[test]
fn stationary_solve_on_scaled_problem() {
    let spec: MetricSpec = "flat(gram=[[2, 0.5], [0.5, 1]])".parse().unwrap();
    let calc = DiscreteCalculus::<f64>::from_spec(TorusDomain::new(&[16, 16]).unwrap(), &spec).unwrap();
    let b = DriftField::from_spec(&"gradient(V0=\"cos(2*pi*x)*sin(2*pi*y)\")".parse().unwrap(), &calc).unwrap();
    let gen = assemble_generator(&calc, &b).unwrap();
    let inv = invariant_measure(&calc, &gen).unwrap();
    assert!((inv.m.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    assert!(inv.stationarity_residual < 1e-10);
}

#[test]
fn drift_specs_round_trip() {
    for s in [SHEAR, "constant(v=[0.3])", "gradient(V0=\"cos(2*pi*x)\")", "sharp_closed(eta=[0.4, 0])", "components(b=[\"1\", \"sin(2*pi*x)\"])"] {
        let spec: DriftSpec = s.parse().unwrap();
        let back: DriftSpec = spec.to_string().parse().unwrap();
        assert_eq!(back.to_string(), spec.to_string());
    }
    assert!("stream(hbar=[0.2])".parse::<DriftSpec>().is_err());
    assert!("vortex()".parse::<DriftSpec>().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn measure_annihilates_generator_range(a in -1.0f64..1.0, b in -1.0f64..1.0, k in 1u32..4, l in 0u32..3) {
        for m in [shear(), s4(), mixed()] {
            let f = m.calc.domain().sample(|p| a * (2.0 * PI * (k as f64 * p[0] + l as f64 * p[1])).sin() + b * (2.0 * PI * l as f64 * p[0]).cos());
            let lf = m.gen.apply(&f);
            let s: f64 = m.inv.m.iter().zip(&lf).map(|(p, v)| p * v).sum();
            let scale = lf.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            prop_assert!(s.abs() < 1e-10 * (1.0 + scale));
        }
    }
}
