use std::sync::OnceLock;

use proptest::prelude::*;
use weyl_core::forward::{assemble_operators, forward_solve, BoundaryCondition, EigenSystem};
use weyl_core::mesh::{build_interval_mesh, build_rect_mesh, Mesh, Topology};
use weyl_core::metric::{sample_metric, MetricDescriptor, MetricField};
use weyl_core::probe::{
    apply_spectral_laplacian, bump, probe_quadratic_form, probe_quadratic_form_fit, recover_metric_at, smoothstep,
    ProbeConfig, SpectralLaplacian,
};
use weyl_core::Error;

const SINE: &str = "ln(1 + 0.5*sin(2*pi*x))";

struct Case {
    mesh: Mesh,
    metric: MetricField,
    eig: EigenSystem,
}

impl Case {
    fn new(mesh: Mesh, descriptor: MetricDescriptor, k: Option<usize>) -> Case {
        let metric = sample_metric(&descriptor, &mesh).unwrap();
        let bc = BoundaryCondition::default_for(&mesh);
        let free = mesh.n_vertices() - if bc == BoundaryCondition::Dirichlet { mesh.boundary().len() } else { 0 };
        let eig = forward_solve(&mesh, &metric, bc, k.unwrap_or(free)).unwrap();
        Case { mesh, metric, eig }
    }

    fn laplacian(&self, k: usize) -> SpectralLaplacian {
        SpectralLaplacian::new(&self.eig.frequencies, &self.eig.fields, &self.eig.weights, k).unwrap()
    }

    fn full(&self) -> SpectralLaplacian {
        self.laplacian(self.eig.frequencies.len())
    }
}

fn constant(m: Vec<Vec<f64>>) -> MetricDescriptor {
    MetricDescriptor::Constant { matrix: m }
}

fn sine(n: usize, k: usize) -> Case {
    Case::new(build_interval_mesh(n, 1.0).unwrap(), MetricDescriptor::Conformal { u: SINE.into() }, Some(k))
}

fn sine_201() -> &'static Case {
    static CELL: OnceLock<Case> = OnceLock::new();
    CELL.get_or_init(|| sine(201, 120))
}

fn sine_101() -> &'static Case {
    static CELL: OnceLock<Case> = OnceLock::new();
    CELL.get_or_init(|| sine(101, 60))
}

fn shear_torus() -> &'static Case {
    static CELL: OnceLock<Case> = OnceLock::new();
    CELL.get_or_init(|| {
        let mesh = build_rect_mesh(49, 49, 1.0, 1.0, Topology::Torus2).unwrap();
        Case::new(mesh, constant(vec![vec![1.0, 1.0], vec![1.0, 2.0]]), None)
    })
}

fn windowed(mesh: &Mesh, x0: f64) -> ProbeConfig {
    ProbeConfig { window: Some(0.3), ..ProbeConfig::auto(mesh, &[x0]).unwrap() }
}

fn sine_inverse_metric(x: f64) -> f64 {
    (1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).sin()).powi(-2)
}

fn max_entry_error(got: &[f64], want: &[f64]) -> f64 {
    got.iter().zip(want).map(|(a, b)| (a - b).abs() / b.abs().max(1e-300)).fold(0.0, f64::max)
}

#[test]
fn smoothstep_and_bump_shape() {
    assert_eq!(smoothstep(0.0), 0.0);
    assert_eq!(smoothstep(1.0), 1.0);
    assert_eq!(smoothstep(0.5), 0.5);
    assert_eq!(bump(0.0, 0.3), 1.0);
    assert_eq!(bump(0.3, 0.3), 0.0);
    assert!(bump(0.1, 0.3) > bump(0.2, 0.3));
}

#[test]
fn eigenfunctions_are_eigenvectors() {
    let case = sine_201();
    let lap = case.laplacian(120);
    let l2 = case.eig.frequencies[4].powi(2);
    let out = apply_spectral_laplacian(&lap, &case.eig.fields[4]);
    for (o, e) in out.iter().zip(&case.eig.fields[4]) {
        assert!((o + l2 * e).abs() <= 1e-8 * l2);
    }
}

#[test]
fn constants_are_harmonic_on_a_closed_manifold() {
    let case = shear_torus();
    let out = apply_spectral_laplacian(&case.full(), &vec![1.0; case.mesh.n_vertices()]);
    assert!(out.iter().all(|v| v.abs() <= 1e-8));
}

#[test]
fn full_basis_matches_the_assembled_operator() {
    let mesh = build_rect_mesh(17, 15, 1.0, 1.2, Topology::Torus2).unwrap();
    let case = Case::new(mesh, constant(vec![vec![1.0, 1.0], vec![1.0, 2.0]]), None);
    let ops = assemble_operators(&case.mesh, &case.metric, BoundaryCondition::None).unwrap();
    let f: Vec<f64> = (0..case.mesh.n_vertices()).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
    let kf = ops.stiffness.mul_vec(&f);
    let want: Vec<f64> = kf.iter().zip(&ops.mass).map(|(k, m)| -k / m).collect();
    let got = apply_spectral_laplacian(&case.full(), &f);
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-6 * scale);
    }
}

#[test]
fn flat_interval_gives_unit_form() {
    let mesh = build_interval_mesh(201, 1.0).unwrap();
    let case = Case::new(mesh, constant(vec![vec![1.0]]), None);
    let cfg = ProbeConfig::auto(&case.mesh, &[0.5]).unwrap();
    let q = probe_quadratic_form(&case.full(), &case.mesh, &cfg, &[1.0]).unwrap();
    assert!((q - 1.0).abs() <= 0.02, "{q}");
}

#[test]
fn scaled_plane_gives_inverse_metric() {
    let mesh = build_rect_mesh(33, 33, 1.0, 1.0, Topology::Rectangle).unwrap();
    let case = Case::new(mesh, constant(vec![vec![4.0, 0.0], vec![0.0, 4.0]]), None);
    let cfg = ProbeConfig::auto(&case.mesh, &[0.5, 0.5]).unwrap();
    let q = probe_quadratic_form(&case.full(), &case.mesh, &cfg, &[1.0, 0.0]).unwrap();
    assert!((q - 0.25).abs() <= 0.05 * 0.25, "{q}");
}

#[test]
fn flat_plane_metric_within_three_percent() {
    let mesh = build_rect_mesh(33, 33, 1.0, 1.0, Topology::Rectangle).unwrap();
    let case = Case::new(mesh, constant(vec![vec![1.0, 0.0], vec![0.0, 1.0]]), None);
    let cfg = ProbeConfig::auto(&case.mesh, &[0.5, 0.5]).unwrap();
    let probe = recover_metric_at(&case.full(), &case.mesh, &cfg).unwrap();
    for (g, w) in probe.metric.iter().zip([1.0, 0.0, 0.0, 1.0]) {
        assert!((g - w).abs() <= 0.03, "{:?}", probe.metric);
    }
}

#[test]
fn sine_metric_at_quarter_point() {
    let case = sine_201();
    let cfg = windowed(&case.mesh, 0.25);
    let q = probe_quadratic_form(&case.laplacian(120), &case.mesh, &cfg, &[1.0]).unwrap();
    let want = 1.0 / 2.25;
    assert!((q - want).abs() <= 0.05 * want, "{q}");
}

#[test]
fn shear_torus_metric_within_five_percent() {
    let case = shear_torus();
    let cfg = ProbeConfig::auto(&case.mesh, &[0.5, 0.5]).unwrap();
    let probe = recover_metric_at(&case.full(), &case.mesh, &cfg).unwrap();
    let want = [1.0, 1.0, 1.0, 2.0];
    assert!(max_entry_error(&probe.metric, &want) <= 0.05, "{:?}", probe.metric);
    assert_eq!(probe.metric[1], probe.metric[2]);
}

#[test]
fn conformal_metric_at_quarter_point() {
    let mesh = build_rect_mesh(57, 57, 1.0, 1.0, Topology::Rectangle).unwrap();
    let u = "0.3*sin(2*pi*x1)*sin(2*pi*x2)";
    let case = Case::new(mesh, MetricDescriptor::Conformal { u: u.into() }, None);
    let cfg = ProbeConfig::auto(&case.mesh, &[0.25, 0.25]).unwrap();
    let probe = recover_metric_at(&case.full(), &case.mesh, &cfg).unwrap();
    let s = 0.6f64.exp();
    assert!((probe.metric[0] - s).abs() <= 0.05 * s && (probe.metric[3] - s).abs() <= 0.05 * s);
    assert!(probe.metric[1].abs() <= 0.05 * s);
}

#[test]
fn metric_error_improves_with_resolution() {
    for x0 in [0.25, 0.4, 0.5] {
        let err = |case: &Case, k: usize| {
            let q = probe_quadratic_form(&case.laplacian(k), &case.mesh, &windowed(&case.mesh, x0), &[1.0]).unwrap();
            (1.0 / q - 1.0 / sine_inverse_metric(x0)).abs()
        };
        let (coarse, fine) = (err(sine_101(), 60), err(sine_201(), 120));
        assert!(fine < coarse, "x0 = {x0}: {coarse} then {fine}");
    }
}

#[test]
fn invalid_probe_configurations() {
    let case = sine_201();
    let lap = case.laplacian(120);
    let mut cfg = windowed(&case.mesh, 0.25);
    cfg.lambdas = vec![10.0, 20.0, 200.0];
    assert!(matches!(probe_quadratic_form(&lap, &case.mesh, &cfg, &[1.0]), Err(Error::ResolutionTooCoarse(_))));
    let mut cfg = windowed(&case.mesh, 0.25);
    cfg.r = 0.5;
    assert!(matches!(probe_quadratic_form(&lap, &case.mesh, &cfg, &[1.0]), Err(Error::InvalidArgument(_))));
    let mut cfg = windowed(&case.mesh, 0.25);
    cfg.lambdas.truncate(2);
    assert!(matches!(probe_quadratic_form(&lap, &case.mesh, &cfg, &[1.0]), Err(Error::InvalidArgument(_))));
    assert!(ProbeConfig::auto(&case.mesh, &[0.0]).is_err());
}

#[test]
fn tight_fit_tolerance_flags_the_probe() {
    let case = sine_101();
    let mut cfg = windowed(&case.mesh, 0.5);
    cfg.fit_tol = 1e-12;
    let err = probe_quadratic_form(&case.laplacian(60), &case.mesh, &cfg, &[1.0]).unwrap_err();
    assert!(matches!(err, Error::UnreliableProbe { .. }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn probes_ignore_mode_signs(signs in proptest::collection::vec(any::<bool>(), 120), x0 in 0.2f64..0.8) {
        let case = sine_201();
        let cfg = windowed(&case.mesh, x0);
        let base = recover_metric_at(&case.laplacian(120), &case.mesh, &cfg).unwrap();
        let fields: Vec<Vec<f64>> = case.eig.fields[..120]
            .iter()
            .zip(&signs)
            .map(|(f, &s)| f.iter().map(|v| if s { *v } else { -v }).collect())
            .collect();
        let lap = SpectralLaplacian::new(&case.eig.frequencies, &fields, &case.eig.weights, 120).unwrap();
        prop_assert_eq!(recover_metric_at(&lap, &case.mesh, &cfg).unwrap(), base);
    }

    #[test]
    fn opposite_directions_agree(angle in 0.0f64..std::f64::consts::TAU) {
        let case = shear_torus();
        let cfg = ProbeConfig::auto(&case.mesh, &[0.5, 0.5]).unwrap();
        let lap = case.full();
        let v = [angle.cos(), angle.sin()];
        let plus = probe_quadratic_form_fit(&lap, &case.mesh, &cfg, &v).unwrap();
        let minus = probe_quadratic_form_fit(&lap, &case.mesh, &cfg, &[-v[0], -v[1]]).unwrap();
        prop_assert!((plus.q - minus.q).abs() <= 1e-10 * plus.q.abs().max(1.0));
        prop_assert!(plus.q > 0.0);
    }
}
