use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;
use torus_homology::functional::{
    adjoint_potential, antisymmetry_defect, evaluate_i, minimal_gaussian_current, perturbation_pair,
    small_fluctuation_limit, typical_velocity, MeasureCurrentPair,
};
use torus_homology::grid::{OneForm, TorusDomain};
use torus_homology::spectral::{ScgfSolver, SpectralOptions};
use torus_homology::{Error, Model};

const SHEAR: &str = "stream(hbar=[0.2, 0], psi=\"-cos(2*pi*y)/(2*pi)\")";
const S3_METRIC: &str = "conformal(phi=\"0.5*cos(2*pi*x)\")";
const I0_1: f64 = 1.2660658777520082;

fn model(res: &[usize], metric: &str, drift: &str) -> Model {
    Model::build(TorusDomain::new(res).unwrap(), &metric.parse().unwrap(), &drift.parse().unwrap()).unwrap()
}

fn flat_zero() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| model(&[32, 32], "flat()", "constant(v=[0, 0])"))
}

fn shear() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| model(&[32, 32], "flat()", SHEAR))
}

fn s3() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| model(&[32, 32], S3_METRIC, "constant(v=[0, 0])"))
}

fn mixed() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| {
        model(
            &[16, 16],
            "diag(gxx=\"1+0.3*sin(2*pi*y)\", gyy=\"1.2+0.2*cos(2*pi*x)\")",
            "components(b=[\"0.5+cos(2*pi*y)+0.3*sin(2*pi*x)\", \"0.2*cos(2*pi*x)\"])",
        )
    })
}

fn ones(m: &Model) -> Vec<f64> {
    vec![1.0; m.calc.nodes()]
}

#[test]
fn typical_velocity_examples() {
    let m = flat_zero();
    let v = typical_velocity(m, &m.inv.measure).unwrap();
    assert!(v.max_abs() < 1e-12);

    let m = shear();
    let v = typical_velocity(m, &m.inv.measure).unwrap();
    assert!(v.axpy(-1.0, &m.inv.gr).max_abs() < 1e-12);
    let dom = m.calc.domain();
    for x in 0..m.calc.nodes() {
        let y = dom.point(x)[1];
        assert!((v.component(0)[x] - (0.2 + (2.0 * PI * y).sin())).abs() < 1e-2);
        assert!(v.component(1)[x].abs() < 1e-8);
    }

    let m = flat_zero();
    let rho = m.calc.domain().sample::<f64>(|p| 1.0 + 0.1 * (2.0 * PI * p[0]).sin());
    let pair = MeasureCurrentPair::new(m, rho, OneForm::zeros(2, m.calc.nodes())).unwrap();
    let v = typical_velocity(m, &pair.measure).unwrap();
    let mut worst = 0.0f64;
    for x in 0..m.calc.nodes() {
        let xe = dom.edge_point(x, 0)[0];
        let s = (2.0 * PI * xe).sin();
        let exact = -0.05 * 2.0 * PI * (2.0 * PI * xe).cos() / (1.0 + 0.1 * s);
        worst = worst.max((v.component(0)[x] - exact).abs());
        assert!(v.component(1)[x].abs() < 1e-10);
    }
    assert!(worst < 5e-3 * 0.1 * PI, "{worst}");
}

#[test]
fn rate_of_explicit_pairs() {
    let m = mixed();
    let typical = typical_velocity(m, &m.inv.measure).unwrap();
    let pair = MeasureCurrentPair::new(m, ones(m), typical).unwrap();
    assert!(evaluate_i(m, &pair).unwrap().abs() < 1e-14);
    assert!(pair.closedness_residual(m) < 1e-8);

    let m = flat_zero();
    let e = OneForm::coordinate(2, m.calc.nodes(), 0);
    let pair = MeasureCurrentPair::new(m, ones(m), e).unwrap();
    assert!((evaluate_i(m, &pair).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn invalid_densities_are_rejected() {
    let m = flat_zero();
    let n = m.calc.nodes();
    let mut rho = ones(m);
    rho[5] = -1.0;
    assert!(matches!(
        MeasureCurrentPair::new(m, rho, OneForm::zeros(2, n)),
        Err(Error::NonPositiveWeight { node: 5, .. })
    ));
    assert!(MeasureCurrentPair::new(m, vec![2.0; n], OneForm::zeros(2, n)).is_err());
}

#[test]
fn minimal_gaussian_current_attains_quadratic_rate() {
    let m = flat_zero();
    let p = minimal_gaussian_current(m, &[1.0, 0.0]).unwrap();
    let e = OneForm::coordinate(2, m.calc.nodes(), 0);
    assert!(p.velocity.axpy(-1.0, &e).max_abs() < 1e-12);
    assert!((evaluate_i(m, &p).unwrap() - 0.5).abs() < 1e-12);

    let m = s3();
    let p = minimal_gaussian_current(m, &[1.0, 0.0]).unwrap();
    let i = evaluate_i(m, &p).unwrap();
    assert!((i - m.basis.q_rate(&[1.0, 0.0])).abs() < 1e-10);
    assert!((i - I0_1 / 2.0).abs() < 5e-3, "{i}");

    for m in [shear(), mixed()] {
        let p = minimal_gaussian_current(m, &m.basis.hbar).unwrap();
        assert!(evaluate_i(m, &p).unwrap().abs() < 1e-12);
    }
}

#[test]
fn perturbation_at_zero_is_the_typical_pair() {
    let m = mixed();
    let p = perturbation_pair(m, &[1.0, -0.5], 0.0).unwrap();
    assert!(p.pair.rho.iter().all(|&r| r == 1.0));
    assert!(evaluate_i(m, &p.pair).unwrap().abs() < 1e-14);
}

#[test]
fn perturbation_pair_is_closed_with_shifted_rotation() {
    let m = mixed();
    let h = [1.0, -0.5];
    let eps = 0.1;
    let p = perturbation_pair(m, &h, eps).unwrap();
    assert!(m.inv.measure.integrate(&p.u).abs() < 1e-12);
    assert!(p.pair.closedness_residual(m) < 1e-8);
    let rot = p.pair.rotation(m);
    for i in 0..2 {
        assert!((rot[i] - (m.basis.hbar[i] + eps * h[i])).abs() < 1e-8);
    }
    let i = evaluate_i(m, &p.pair).unwrap();
    assert!((i - p.closed_form_rate(m)).abs() < 1e-8);

    let target: Vec<f64> = (0..2).map(|k| m.basis.hbar[k] + eps * h[k]).collect();
    let g = ScgfSolver::new(m, SpectralOptions::default()).legendre(&target).unwrap();
    assert!(g.g <= i + 1e-6);
}

#[test]
fn adjoint_potential_solves_the_dual_equation() {
    let m = mixed();
    let h = [0.3, 0.8];
    let u = adjoint_potential(m, &h).unwrap();
    let w = m.basis.omega_of_homology(&h);
    let rhs = m.calc.codifferential(&m.inv.measure, &w);
    let mu: Vec<f64> = u.iter().zip(&m.inv.m).map(|(a, b)| a * b).collect();
    let ltu = m.gen.matrix().transpose().mul_vec(&mu);
    for x in 0..m.calc.nodes() {
        assert!((ltu[x] / m.inv.m[x] - rhs[x]).abs() < 1e-8);
    }
}

#[test]
fn oversized_perturbation_is_rejected() {
    let m = shear();
    let u = adjoint_potential(m, &[1.0, 0.0]).unwrap();
    let umax = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(matches!(perturbation_pair(m, &[1.0, 0.0], 1.5 / umax), Err(Error::Invalid(_))));
}

#[test]
fn shear_small_fluctuation_limit() {
    let m = shear();
    let sf = small_fluctuation_limit(m, &[1.0, 0.0], &[0.2, 0.1, 0.05]).unwrap();
    let expect = 0.5 / (1.0 + 1.0 / (2.0 * PI * PI));
    assert!((sf.limit - expect).abs() < 2e-2, "{}", sf.limit);
    assert!((sf.limit - 0.5 * m.basis.b_inv[(0, 0)]).abs() < 1e-3);
    assert_eq!(sf.scaled_rates.len(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn rate_antisymmetry_on_closed_currents(h in prop::array::uniform2(-2.0f64..2.0)) {
        let m = mixed();
        let p = minimal_gaussian_current(m, &h).unwrap();
        prop_assert!(p.closedness_residual(m) < 1e-8);
        prop_assert!(antisymmetry_defect(m, &p).unwrap().abs() < 1e-8);
    }

    #[test]
    fn gaussian_current_rate_matches_quadratic(h in prop::array::uniform2(-2.0f64..2.0)) {
        for m in [shear(), mixed()] {
            let p = minimal_gaussian_current(m, &h).unwrap();
            let rot = p.rotation(m);
            prop_assert!((rot[0] - h[0]).abs() < 1e-8 && (rot[1] - h[1]).abs() < 1e-8);
            prop_assert!((evaluate_i(m, &p).unwrap() - m.basis.q_rate(&h)).abs() < 1e-6);
        }
    }
}
