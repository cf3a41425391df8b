use proptest::prelude::*;
use weyl_core::forward::{forward_solve, synthesize_local_weyl, BoundaryCondition, EigenSystem, LocalWeylTable};
use weyl_core::io::{
    emit_plot_data, from_json, ingest_sampled_table, read_json, sample_table, to_json, write_json, PlotArtifact,
    PlotKind, WeylInput, DEFAULT_JUMP_TOL,
};
use weyl_core::mesh::build_interval_mesh;
use weyl_core::metric::{sample_metric, MetricDescriptor};
use weyl_core::probe::ProbeConfig;
use weyl_core::Error;

fn flat_interval_table(n: usize, k: usize) -> LocalWeylTable {
    let mesh = build_interval_mesh(n, 1.0).unwrap();
    let g = sample_metric(&MetricDescriptor::Constant { matrix: vec![vec![1.0]] }, &mesh).unwrap();
    synthesize_local_weyl(&forward_solve(&mesh, &g, BoundaryCondition::Dirichlet, k).unwrap())
}

fn grid(step: f64, top: f64) -> Vec<f64> {
    (0..=(top / step).round() as usize).map(|i| i as f64 * step).collect()
}

#[test]
fn events_pass_through() {
    let table = flat_interval_table(21, 5);
    assert_eq!(ingest_sampled_table(&WeylInput::Events(table.clone()), DEFAULT_JUMP_TOL).unwrap(), table);
}

#[test]
fn fine_samples_recover_the_jumps() {
    let table = flat_interval_table(101, 10);
    let step = 0.01;
    let sampled = sample_table(&table, &grid(step, 33.0));
    let text = to_json(&WeylInput::Sampled(sampled)).unwrap();
    assert!(text.contains("\"format\":\"sampled\""));
    let got = ingest_sampled_table(&from_json(&text).unwrap(), DEFAULT_JUMP_TOL).unwrap();
    assert_eq!(got.jump_frequencies.len(), 10);
    for (a, b) in got.jump_frequencies.iter().zip(&table.jump_frequencies) {
        assert!((a - b).abs() <= step / 2.0 + 1e-12, "{a} vs {b}");
    }
    for (a, b) in got.jump_fields.iter().zip(&table.jump_fields) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn coarse_samples_are_rejected() {
    let table = flat_interval_table(101, 10);
    let sampled = sample_table(&table, &grid(7.0, 35.0));
    let err = ingest_sampled_table(&WeylInput::Sampled(sampled), DEFAULT_JUMP_TOL).unwrap_err();
    assert!(matches!(err, Error::ResolutionTooCoarse(_)));
}

#[test]
fn decreasing_samples_are_corrupt() {
    let table = flat_interval_table(21, 3);
    let mut sampled = sample_table(&table, &grid(0.5, 10.0));
    sampled.values[5][19] = 0.0;
    assert!(matches!(
        ingest_sampled_table(&WeylInput::Sampled(sampled), DEFAULT_JUMP_TOL),
        Err(Error::CorruptTable(_))
    ));
}

#[test]
fn staircase_repeats_lambda_at_jumps() {
    let table = LocalWeylTable {
        jump_frequencies: vec![1.5, 2.5],
        jump_fields: vec![vec![0.5, 2.0], vec![1.0, 0.25]],
        weights: vec![1.0, 0.25],
        bc: BoundaryCondition::None,
    };
    let csv = emit_plot_data(&PlotArtifact::Staircase { table: &table, vertex: 0 }, PlotKind::Staircase).unwrap();
    assert_eq!(csv, "lambda,N\n0,0\n1.5,0\n1.5,0.5\n2.5,0.5\n2.5,1.5\n");
}

#[test]
fn mu_and_error_columns() {
    let coords = vec![vec![0.0], vec![0.5]];
    let csv =
        emit_plot_data(&PlotArtifact::Mu { coords, recovered: &[1.0, 2.0], truth: Some(&[1.0, 2.5]) }, PlotKind::Mu)
            .unwrap();
    assert_eq!(csv, "x,mu_recovered,mu_true\n0,1,1\n0.5,2,2.5\n");
    let csv = emit_plot_data(&PlotArtifact::MetricErrorVsK { points: &[(10, 0.5)] }, PlotKind::MetricErrorVsK).unwrap();
    assert_eq!(csv, "K,error\n10,0.5\n");
}

#[test]
fn tori_columns() {
    let a = [(0.0, 1), (1.0, 4)];
    let b = [(0.0, 1), (1.0, 2), (2.0, 2)];
    let csv = emit_plot_data(&PlotArtifact::Tori { a: &a, b: &b }, PlotKind::Tori).unwrap();
    assert_eq!(csv, "lambda,N_a,N_b,diff\n0,1,1,0\n1,5,3,2\n2,5,5,0\n");
}

#[test]
fn unknown_or_mismatched_plot_kind() {
    assert!(matches!("bogus".parse::<PlotKind>(), Err(Error::InvalidArgument(_))));
    assert_eq!("metric-error-vs-k".parse::<PlotKind>().unwrap(), PlotKind::MetricErrorVsK);
    let err = emit_plot_data(&PlotArtifact::MetricErrorVsK { points: &[] }, PlotKind::Mu).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn json_files_are_written_whole() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.json");
    let table = flat_interval_table(21, 4);
    write_json(&path, &table).unwrap();
    write_json(&path, &table).unwrap();
    assert_eq!(read_json::<LocalWeylTable>(&path).unwrap(), table);
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 1);
    assert!(matches!(read_json::<LocalWeylTable>(&dir.path().join("missing.json")), Err(Error::Io { .. })));
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        proptest::num::f64::NORMAL,
        proptest::num::f64::SUBNORMAL,
        proptest::num::f64::ZERO,
        Just(f64::MAX),
        Just(f64::MIN_POSITIVE),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigensystems_round_trip(
        freqs in proptest::collection::vec(finite(), 1..6),
        vals in proptest::collection::vec(finite(), 4),
    ) {
        let eig = EigenSystem {
            fields: freqs.iter().map(|_| vals.clone()).collect(),
            frequencies: freqs,
            weights: vals.clone(),
            bc: BoundaryCondition::Neumann,
        };
        prop_assert_eq!(from_json::<EigenSystem>(&to_json(&eig).unwrap()).unwrap(), eig);
    }

    #[test]
    fn probe_configs_round_trip(x in finite(), r in finite(), l in proptest::collection::vec(finite(), 3), w in proptest::option::of(finite())) {
        let cfg = ProbeConfig { x0: vec![x, r], r, lambdas: l, fit_tol: x, window: w };
        prop_assert_eq!(from_json::<ProbeConfig>(&to_json(&cfg).unwrap()).unwrap(), cfg);
    }

    #[test]
    fn sampled_inputs_round_trip(vals in proptest::collection::vec(finite(), 6)) {
        let input = WeylInput::Sampled(weyl_core::io::SampledWeylInput {
            lambdas: vals[..3].to_vec(),
            values: vec![vals[3..].to_vec()],
            weights: vec![vals[0]],
            bc: BoundaryCondition::Dirichlet,
        });
        prop_assert_eq!(from_json::<WeylInput>(&to_json(&input).unwrap()).unwrap(), input);
    }
}
