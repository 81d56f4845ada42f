use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;
use torus_homology::grid::{OneForm, TorusDomain};
use torus_homology::hodge::HarmonicBasis;
use torus_homology::linalg::Matrix;
use torus_homology::Model;

const SHEAR: &str = "stream(hbar=[0.2, 0], psi=\"-cos(2*pi*y)/(2*pi)\")";
const S3_METRIC: &str = "conformal(phi=\"0.5*cos(2*pi*x)\")";
// I_0(1)
const I0_1: f64 = 1.2660658777520082;

fn model(res: &[usize], metric: &str, drift: &str) -> Model {
    Model::build(TorusDomain::new(res).unwrap(), &metric.parse().unwrap(), &drift.parse().unwrap()).unwrap()
}

fn shear() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| model(&[64, 64], "flat()", SHEAR))
}

fn s3() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| model(&[128, 128], S3_METRIC, "constant(v=[0, 0])"))
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

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn flat_zero_drift_has_coordinate_basis() {
    let m = model(&[16, 16], "flat()", "constant(v=[0, 0])");
    let b = &m.basis;
    for i in 0..2 {
        let dx = OneForm::coordinate(2, m.calc.nodes(), i);
        assert!(max_diff(b.eta[i].as_slice(), dx.as_slice()) < 1e-12);
        assert!(max_diff(b.omega[i].as_slice(), dx.as_slice()) < 1e-12);
        assert!(b.hbar[i].abs() < 1e-14);
    }
    assert!(b.a.sub(&Matrix::identity(2)).max_abs() < 1e-12);
    assert!((b.q_rate(&[1.0, 0.0]) - 0.5).abs() < 1e-12);
    let eta = b.eta_of_homology(&[1.0, 0.0]);
    assert!(max_diff(eta.as_slice(), OneForm::coordinate(2, m.calc.nodes(), 0).as_slice()) < 1e-12);
}

#[test]
fn constant_gram_metric_gives_inverse_gram() {
    let m = model(&[16, 16], "flat(gram=[[2, 0.5], [0.5, 1]])", "constant(v=[0.1, 0.2])");
    let ginv = [[1.0 / 1.75, -0.5 / 1.75], [-0.5 / 1.75, 2.0 / 1.75]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((m.basis.a[(i, j)] - ginv[i][j]).abs() < 1e-10);
            assert!((m.basis.b[(i, j)] - ginv[i][j]).abs() < 1e-10);
        }
    }
}

#[test]
fn conformal_metric_gram_is_scaled_identity() {
    let b = &s3().basis;
    for i in 0..2 {
        assert!((b.a[(i, i)] - 1.0 / I0_1).abs() < 1e-4, "{}", b.a[(i, i)]);
        assert!(b.f[i].iter().all(|v| v.abs() < 1e-8));
    }
    assert!(b.a[(0, 1)].abs() < 1e-10);
    assert!(b.b.sub(&b.a).max_abs() < 1e-8);
    assert!((b.q_rate(&[1.0, 0.0]) - I0_1 / 2.0).abs() < 1e-4);
    assert!(b.hbar.iter().all(|h| h.abs() < 1e-12));
}

#[test]
fn shear_cell_problem() {
    let m = shear();
    let b = &m.basis;
    let corr = 1.0 / (2.0 * PI * PI);
    // Second order in the grid spacing; 64² sits near 1.2e-4.
    assert!((b.b[(0, 0)] - (1.0 + corr)).abs() < 5e-4, "{}", b.b[(0, 0)]);
    assert!((b.b[(1, 1)] - 1.0).abs() < 1e-8);
    assert!(b.b[(0, 1)].abs() < 1e-8);
    assert!((b.hbar[0] - 0.2).abs() < 1e-10 && b.hbar[1].abs() < 1e-10);

    let exact = m.calc.domain().sample::<f64>(|p| (2.0 * PI * p[1]).sin() / (2.0 * PI * PI));
    let amp = exact.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(max_diff(&b.u[0], &exact) < 2e-3 * amp);

    let lw = m.gen.apply_lifted(&b.omega[0]);
    assert!(lw.iter().all(|v| (v - 0.2).abs() < 1e-6));

    let lv = b.constant_length_diagnostic(&m.calc, &m.gen, &m.inv);
    assert!(lv.length_variance < 1e-12);
    assert!((lv.r_pairing_variance - 0.5).abs() < 1e-2);

    let w = b.omega_of_homology(&[1.0, 0.0]);
    let expect = b.omega[0].scaled(1.0 / b.b[(0, 0)]);
    assert!(max_diff(w.as_slice(), expect.as_slice()) < 1e-10);
}

#[test]
fn conformal_length_variance_is_large() {
    let m = s3();
    let lv = m.basis.constant_length_diagnostic(&m.calc, &m.gen, &m.inv);
    assert!(lv.length_variance > 0.1, "{}", lv.length_variance);
}

#[test]
fn basis_diagnostics_on_general_model() {
    let m = mixed();
    let d = &m.basis.diagnostics;
    assert!(d.eta_codifferential_residual < 1e-9);
    assert!(d.lifted_constant_residual < 1e-8);
    assert!(d.exact_part_defect < 1e-8);
    assert!(d.b_minus_a_min_eigenvalue > -1e-10);
    for e in &m.basis.eta {
        assert!(m.calc.curl(e).iter().all(|v| v.abs() < 1e-10));
    }
    assert!(m.basis.q_rate(&m.basis.hbar).abs() < 1e-15);
}

#[test]
fn basis_is_gauge_independent() {
    let m = mixed();
    for i in 0..2 {
        let shifted: Vec<f64> = m.basis.f[i].iter().map(|v| v + 3.5).collect();
        let mut rebuilt = m.calc.differential(&shifted);
        rebuilt.component_mut(i).iter_mut().for_each(|v| *v += 1.0);
        assert!(max_diff(rebuilt.as_slice(), m.basis.eta[i].as_slice()) < 1e-12);
    }
}

#[test]
fn gram_matrices_are_mutually_inverse() {
    let b = &mixed().basis;
    let id = Matrix::identity(2);
    assert!(b.a.matmul(&b.a_inv).sub(&id).max_abs() < 1e-12);
    assert!(b.b_inv.matmul(&b.b).sub(&id).max_abs() < 1e-12);
}

#[test]
fn rebuild_is_deterministic() {
    let m = mixed();
    let again = HarmonicBasis::build(&m.calc, &m.gen, &m.inv).unwrap();
    assert_eq!(again.a.max_abs(), m.basis.a.max_abs());
    assert_eq!(again.hbar, m.basis.hbar);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn homology_pairing_identity(h in prop::array::uniform2(-3.0f64..3.0), c in prop::array::uniform2(-3.0f64..3.0)) {
        let m = mixed();
        let eh = m.basis.eta_of_homology(&h);
        let ec = m.basis.eta_of_class(&c);
        let lhs = m.calc.inner(&m.inv.measure, &eh, &ec);
        prop_assert!((lhs - (h[0] * c[0] + h[1] * c[1])).abs() < 1e-10);
    }

    #[test]
    fn quadratic_rate_is_strictly_convex(h in prop::array::uniform2(-3.0f64..3.0), k in prop::array::uniform2(-3.0f64..3.0)) {
        let b = &mixed().basis;
        let mid = [(h[0] + k[0]) / 2.0, (h[1] + k[1]) / 2.0];
        let gap = (b.q_rate(&h) + b.q_rate(&k)) / 2.0 - b.q_rate(&mid);
        let dist = (h[0] - k[0]).powi(2) + (h[1] - k[1]).powi(2);
        prop_assert!(gap >= 0.0);
        prop_assert!(gap >= 1e-3 * dist);
    }
}
