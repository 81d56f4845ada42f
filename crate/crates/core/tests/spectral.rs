use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;
use torus_homology::grid::TorusDomain;
use torus_homology::spectral::{Representative, ScgfSolver, SpectralOptions};
use torus_homology::{Error, Model};

const SHEAR: &str = "stream(hbar=[0.2, 0], psi=\"-cos(2*pi*y)/(2*pi)\")";
const S3_METRIC: &str = "conformal(phi=\"0.5*cos(2*pi*x)\")";
const I0_1: f64 = 1.2660658777520082;

fn model(res: &[usize], metric: &str, drift: &str) -> Model {
    Model::build(TorusDomain::new(res).unwrap(), &metric.parse().unwrap(), &drift.parse().unwrap()).unwrap()
}

fn solver(m: &Model) -> ScgfSolver<'_, f64> {
    ScgfSolver::new(m, SpectralOptions::default())
}

fn s1() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| model(&[256], "flat()", "constant(v=[0.3])"))
}

fn shear() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| model(&[32, 32], "flat()", SHEAR))
}

fn s3() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| model(&[32, 32], S3_METRIC, "constant(v=[0, 0])"))
}

fn s4() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| model(&[32, 32], S3_METRIC, "sharp_closed(eta=[0.4, 0])"))
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

#[test]
fn untilted_operator_is_the_generator() {
    let m = mixed();
    let op = solver(m).assemble(&[0.0, 0.0]);
    assert_eq!(op.representative, Representative::Harmonic);
    let n = m.calc.nodes();
    let f: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
    assert_eq!(op.matrix.mul_vec(&f), m.gen.apply(&f));
}

#[test]
fn untilted_eigenpair_is_stationary() {
    for m in [s1(), mixed()] {
        let ev = solver(m).evaluate(&vec![0.0; m.dim()], None).unwrap();
        assert!(ev.lambda.abs() < 1e-12, "{}", ev.lambda);
        assert!(ev.right.iter().all(|v| (v - 1.0).abs() < 1e-9));
        let ratio: Vec<f64> = ev.left.iter().zip(&m.inv.m).map(|(l, w)| l / w).collect();
        let r0 = ratio[0];
        assert!(ratio.iter().all(|r| (r / r0 - 1.0).abs() < 1e-8));
        for (g, h) in ev.gradient.iter().zip(&m.basis.hbar) {
            assert!((g - h).abs() < 1e-6);
        }
    }
}

#[test]
fn circle_scgf_is_gaussian() {
    let s = solver(s1());
    for k in [-2.0, -0.5, 1.0, 1.5] {
        let ev = s.evaluate(&[k], None).unwrap();
        let exact = 0.3 * k + 0.5 * k * k;
        assert!((ev.lambda - exact).abs() < 1e-6, "{k}: {}", ev.lambda);
        assert!((ev.gradient[0] - (0.3 + k)).abs() < 1e-6);
        assert!(ev.residual < 1e-8);
    }
    let g = s.legendre(&[0.0]).unwrap();
    assert!((g.g - 0.045).abs() < 1e-5);
    assert!((g.c_star[0] + 0.3).abs() < 1e-6);
}

#[test]
fn shear_gradient_is_rotation_number() {
    let ev = solver(shear()).evaluate(&[0.0, 0.0], None).unwrap();
    assert!((ev.gradient[0] - 0.2).abs() < 1e-6);
    assert!(ev.gradient[1].abs() < 1e-6);
}

#[test]
fn shifted_representative_is_conjugate() {
    let m = mixed();
    let s = solver(m);
    let c = [0.7, -0.4];
    let base = s.evaluate(&c, None).unwrap().lambda;
    let u = m.calc.domain().sample::<f64>(|p| 0.3 * (2.0 * PI * p[0]).sin() + 0.2 * (2.0 * PI * p[1]).cos());
    let op = s.assemble_shifted(&c, &u);
    assert!(matches!(op.representative, Representative::Shifted(_)));
    let shifted = s.principal_eigen(&op, None).unwrap();
    assert!((shifted.lambda - base).abs() < 1e-8);
    assert!(shifted.gradient.is_empty());
}

#[test]
fn hessian_at_zero_matches_gram() {
    let flat = model(&[16, 16], "flat()", "constant(v=[0.2, 0])");
    let h = solver(&flat).hessian0().unwrap();
    assert!(h.sub(&torus_homology::linalg::Matrix::identity(2)).max_abs() < 1e-4);

    let h = solver(shear()).hessian0().unwrap();
    assert!((h[(0, 0)] - (1.0 + 1.0 / (2.0 * PI * PI))).abs() < 1e-2);
    assert!((h[(1, 1)] - 1.0).abs() < 1e-2);
    assert!(h.sub(&shear().basis.b).max_abs() < 1e-6);

    let h = solver(s3()).hessian0().unwrap();
    assert!((h[(0, 0)] - 1.0 / I0_1).abs() < 1e-2);
    assert!(h.sub(&s3().basis.a).max_abs() < 1e-6);
}

#[test]
fn rate_vanishes_at_rotation_number() {
    for m in [shear(), s4(), mixed()] {
        let r = solver(m).legendre(&m.basis.hbar).unwrap();
        assert!(r.g.abs() < 1e-8, "{}", r.g);
        assert!(r.hessian_min_eigenvalue > 0.0);
    }
}

#[test]
fn conformal_rate_is_strictly_below_gaussian_bound() {
    let r = solver(s3()).legendre(&[2.0, 0.0]).unwrap();
    assert!((r.q - 2.0 * I0_1).abs() < 5e-3);
    assert!(r.gap() > 10.0 * 1e-6, "{}", r.gap());
    assert!(r.g > 0.0);
}

#[test]
fn flat_constant_rate_equals_gaussian() {
    let m = model(&[16, 16], "flat()", "constant(v=[0.2, 0])");
    let s = solver(&m);
    for h in [[1.0, 0.0], [-0.5, 0.7], [0.2, -1.3]] {
        let r = s.legendre(&h).unwrap();
        assert!((r.g - r.q).abs() < 1e-4);
    }
}

#[test]
fn tilt_outside_trust_region_is_reported() {
    let s = ScgfSolver::new(s1(), SpectralOptions { c_max: 2.0, ..Default::default() });
    match s.legendre(&[5.0]) {
        Err(Error::OutOfRange { c_max, .. }) => assert_eq!(c_max, 2.0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn gallavotti_cohen_symmetry() {
    let flat = model(&[16, 16], "flat()", "constant(v=[0, 0])");
    assert!(solver(&flat).gc_defect(&[0.8, -0.3], &[0.0, 0.0]).unwrap().abs() < 1e-8);

    let s = solver(s4());
    let cbar = s4().closed_class().unwrap();
    assert_eq!(cbar, vec![0.4, 0.0]);
    for c in [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, 1.0]] {
        assert!(s.gc_defect(&c, &cbar).unwrap().abs() < 1e-4);
    }

    let s = solver(shear());
    let cbar = shear().basis.a_inv.mul_vec(&shear().basis.hbar);
    assert!(s.gc_defect(&[1.0, 0.0], &cbar).unwrap().abs() > 1e-2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn scgf_is_midpoint_convex(c in prop::array::uniform2(-2.0f64..2.0), d in prop::array::uniform2(-2.0f64..2.0)) {
        let s = solver(mixed());
        let mid = [(c[0] + d[0]) / 2.0, (c[1] + d[1]) / 2.0];
        let lhs = s.lambda(&mid).unwrap();
        let rhs = (s.lambda(&c).unwrap() + s.lambda(&d).unwrap()) / 2.0;
        prop_assert!(lhs <= rhs + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rate_is_sandwiched(h in prop::array::uniform2(-1.5f64..2.0)) {
        let r = solver(mixed()).legendre(&h).unwrap();
        prop_assert!(r.g >= -1e-10);
        prop_assert!(r.g <= r.q + 1e-6);
        prop_assert!(r.gradient_error < 1e-8);
    }
}
