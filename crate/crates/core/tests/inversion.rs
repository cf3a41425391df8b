use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;
use weyl_core::forward::{forward_solve, synthesize_local_weyl, BoundaryCondition, EigenSystem, LocalWeylTable};
use weyl_core::inversion::{
    adjacency_graph, check_frequency_gaps, check_simplicity, extract_spectrum, nodal_partition, propagate_signs,
    recover_eigenfunction, recover_signed_eigenfunctions, DomainGraph, NodalPartition, SignAssignment, Step1Options,
    DEFAULT_GAP_TOL, DEFAULT_ZERO_TOL,
};
use weyl_core::mesh::{build_interval_mesh, build_rect_mesh, Mesh, Topology};
use weyl_core::metric::{sample_metric, MetricDescriptor, MetricField};
use weyl_core::Error;

const PHI: f64 = 1.618_033_988_749_895;

fn identity(mesh: &Mesh) -> MetricField {
    let d = mesh.dimension();
    let m = (0..d).map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    sample_metric(&MetricDescriptor::Constant { matrix: m }, mesh).unwrap()
}

fn interval() -> &'static (Mesh, EigenSystem) {
    static CELL: OnceLock<(Mesh, EigenSystem)> = OnceLock::new();
    CELL.get_or_init(|| {
        let mesh = build_interval_mesh(201, 1.0).unwrap();
        let eig = forward_solve(&mesh, &identity(&mesh), BoundaryCondition::Dirichlet, 20).unwrap();
        (mesh, eig)
    })
}

fn golden_rectangle() -> &'static (Mesh, EigenSystem) {
    static CELL: OnceLock<(Mesh, EigenSystem)> = OnceLock::new();
    CELL.get_or_init(|| {
        let mesh = build_rect_mesh(64, 64, 1.0, PHI, Topology::Rectangle).unwrap();
        let eig = forward_solve(&mesh, &identity(&mesh), BoundaryCondition::Dirichlet, 30).unwrap();
        (mesh, eig)
    })
}

fn max_dev_up_to_sign(a: &[f64], b: &[f64]) -> f64 {
    let plus = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let minus = a.iter().zip(b).map(|(x, y)| (x + y).abs()).fold(0.0, f64::max);
    plus.min(minus)
}

fn assert_two_coloured(graph: &DomainGraph, signs: &SignAssignment) {
    for (a, ns) in graph.neighbors.iter().enumerate() {
        for &b in ns {
            assert_eq!(signs.signs[a], -signs.signs[b], "domains {a} and {b}");
        }
    }
    let last: BTreeSet<usize> = signs.trace.last().unwrap().iter().copied().collect();
    assert_eq!(last, (0..graph.m).collect());
}

#[test]
fn interval_spectrum_is_read_back_exactly() {
    let (mesh, eig) = interval();
    let table = synthesize_local_weyl(eig);
    let spec = extract_spectrum(&table).unwrap();
    assert_eq!(spec.frequencies, eig.frequencies);
    for (k, amp) in spec.amplitudes.iter().enumerate() {
        for (x, a) in amp.iter().enumerate() {
            assert!((a - eig.fields[k][x].abs()).abs() <= 1e-12);
        }
        let xm = mesh.vertex(37)[0];
        let closed = 2f64.sqrt() * ((k + 1) as f64 * PI * xm).sin().abs();
        assert!((amp[37] - closed).abs() < 0.01 * (k + 1) as f64, "mode {k}");
    }
}

#[test]
fn constant_jump_gives_constant_amplitude() {
    let table = LocalWeylTable {
        jump_frequencies: vec![0.0],
        jump_fields: vec![vec![0.25; 5]],
        weights: vec![0.8; 5],
        bc: BoundaryCondition::None,
    };
    let spec = extract_spectrum(&table).unwrap();
    assert_eq!(spec.amplitudes[0], vec![0.5; 5]);
}

#[test]
fn negative_table_entries_are_rejected() {
    let mut table = LocalWeylTable {
        jump_frequencies: vec![1.0],
        jump_fields: vec![vec![0.5, -1e-13, 0.5]],
        weights: vec![1.0; 3],
        bc: BoundaryCondition::None,
    };
    assert_eq!(extract_spectrum(&table).unwrap().amplitudes[0][1], 0.0);
    table.jump_fields[0][1] = -1e-6;
    assert!(matches!(extract_spectrum(&table), Err(Error::CorruptTable(_))));
}

#[test]
fn gap_check_examples() {
    assert!(check_frequency_gaps(&[PI, 2.0 * PI, 3.0 * PI], 1e-6).is_empty());
    assert_eq!(check_frequency_gaps(&[1.0, 1.0 + 1e-9], 1e-6), vec![(0, 1)]);
}

#[test]
fn torus_table_is_flagged_with_multiplicity_four() {
    let mesh = build_rect_mesh(17, 17, 1.0, 1.0, Topology::Torus2).unwrap();
    let eig = forward_solve(&mesh, &identity(&mesh), BoundaryCondition::None, 9).unwrap();
    let diag = check_simplicity(&synthesize_local_weyl(&eig), DEFAULT_GAP_TOL);
    assert!(!diag.is_simple());
    let (j, integral) = diag.multiplicity_flags[0];
    assert_eq!(j, 1);
    assert!((integral - 4.0).abs() < 1e-8);
}

#[test]
fn simple_spectrum_passes_the_check() {
    let (_, eig) = interval();
    assert!(check_simplicity(&synthesize_local_weyl(eig), DEFAULT_GAP_TOL).is_simple());
}

#[test]
fn sine_two_has_two_domains() {
    let mesh = build_interval_mesh(101, 1.0).unwrap();
    let amp: Vec<f64> = (0..101).map(|i| (2.0 * PI * mesh.vertex(i)[0]).sin().abs()).collect();
    let p = nodal_partition(&amp, &mesh, DEFAULT_ZERO_TOL).unwrap();
    assert_eq!(p.m, 2);
    assert!(p.labels[0].is_none() && p.labels[100].is_none() && p.labels[50].is_none());
    assert_eq!(p.labels[10], Some(0));
    assert_eq!(p.labels[90], Some(1));
    let g = adjacency_graph(&p, 1);
    assert!(g.has_edge(0, 1));
    assert_eq!(propagate_signs(&g).unwrap().signs, vec![1, -1]);
}

#[test]
fn constant_field_is_one_domain() {
    let mesh = build_rect_mesh(6, 5, 1.0, 1.0, Topology::Torus2).unwrap();
    let amp = vec![0.7; mesh.n_vertices()];
    let p = nodal_partition(&amp, &mesh, DEFAULT_ZERO_TOL).unwrap();
    assert_eq!(p.m, 1);
    assert!(p.labels.iter().all(|l| *l == Some(0)));
    let g = adjacency_graph(&p, 2);
    assert!(g.neighbors[0].is_empty());
    let s = propagate_signs(&g).unwrap();
    assert_eq!(recover_eigenfunction(&amp, &p, &s), amp);
}

#[test]
fn zero_field_is_degenerate() {
    let mesh = build_interval_mesh(11, 1.0).unwrap();
    assert!(matches!(nodal_partition(&[0.0; 11], &mesh, DEFAULT_ZERO_TOL), Err(Error::DegenerateField)));
}

#[test]
fn second_rectangle_mode_has_two_domains() {
    let (mesh, eig) = golden_rectangle();
    let amp: Vec<f64> = eig.fields[1].iter().map(|v| v.abs()).collect();
    assert_eq!(nodal_partition(&amp, mesh, DEFAULT_ZERO_TOL).unwrap().m, 2);
}

#[test]
fn checkerboard_mode_has_cyclic_adjacency() {
    let (a, b) = (1.0, 1.1);
    let mesh = build_rect_mesh(41, 45, a, b, Topology::Rectangle).unwrap();
    let eig = forward_solve(&mesh, &identity(&mesh), BoundaryCondition::Dirichlet, 12).unwrap();
    let want = PI * (4.0 / (a * a) + 4.0 / (b * b)).sqrt();
    let j = (0..12)
        .min_by(|&i, &k| (eig.frequencies[i] - want).abs().total_cmp(&(eig.frequencies[k] - want).abs()))
        .unwrap();
    let amp: Vec<f64> = eig.fields[j].iter().map(|v| v.abs()).collect();
    let p = nodal_partition(&amp, &mesh, DEFAULT_ZERO_TOL).unwrap();
    assert_eq!(p.m, 4);
    let g = adjacency_graph(&p, 2);
    // Quadrant of each domain from its first vertex.
    let quadrant = |d: usize| {
        let v = p.labels.iter().position(|l| *l == Some(d)).unwrap();
        let x = mesh.vertex(v);
        (usize::from(x[0] > 0.5 * a), usize::from(x[1] > 0.5 * b))
    };
    for d in 0..4 {
        for e in d + 1..4 {
            let (qd, qe) = (quadrant(d), quadrant(e));
            let diagonal = qd.0 != qe.0 && qd.1 != qe.1;
            assert_eq!(g.has_edge(d, e), !diagonal, "{qd:?} {qe:?}");
        }
    }
    let s = propagate_signs(&g).unwrap();
    assert_two_coloured(&g, &s);
    let rec = recover_eigenfunction(&amp, &p, &s);
    assert!(max_dev_up_to_sign(&rec, &eig.fields[j]) <= 1e-8);
}

#[test]
fn four_cycle_alternates() {
    let g = DomainGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
    assert_eq!(propagate_signs(&g).unwrap().signs, vec![1, -1, 1, -1]);
}

#[test]
fn path_alternates() {
    let g = DomainGraph::from_edges(3, &[(0, 1), (1, 2)]);
    let s = propagate_signs(&g).unwrap();
    assert_eq!(s.signs, vec![1, -1, 1]);
    assert_eq!(s.trace, vec![vec![0], vec![0, 1], vec![0, 1, 2]]);
}

#[test]
fn triangle_is_an_odd_cycle() {
    let g = DomainGraph::from_edges(3, &[(0, 1), (1, 2), (2, 0)]);
    match propagate_signs(&g) {
        Err(Error::OddCycle { cycle }) => {
            assert_eq!(cycle.len(), 3);
            assert_eq!(cycle.iter().copied().collect::<BTreeSet<_>>(), (0..3).collect());
        }
        other => panic!("expected an odd cycle, got {other:?}"),
    }
}

#[test]
fn disconnected_graph_is_reported() {
    let g = DomainGraph::from_edges(3, &[(0, 1)]);
    assert!(matches!(propagate_signs(&g), Err(Error::Disconnected { .. })));
}

#[test]
fn interval_modes_round_trip() {
    let (mesh, eig) = interval();
    let out = recover_signed_eigenfunctions(&synthesize_local_weyl(eig), mesh, Step1Options::default()).unwrap();
    for k in 0..20 {
        assert_eq!(out.modes[k].domains, k + 1);
        assert!(max_dev_up_to_sign(&out.fields[k], &eig.fields[k]) <= 1e-10, "mode {k}");
    }
}

#[test]
fn rectangle_modes_round_trip_and_obey_courant() {
    let (mesh, eig) = golden_rectangle();
    let table = synthesize_local_weyl(eig);
    let out = recover_signed_eigenfunctions(&table, mesh, Step1Options::default()).unwrap();
    for k in 0..30 {
        assert!(out.modes[k].domains <= k + 1, "mode {} has {} domains", k + 1, out.modes[k].domains);
        let amp: Vec<f64> = eig.fields[k].iter().map(|v| v.abs()).collect();
        let p = nodal_partition(&amp, mesh, DEFAULT_ZERO_TOL).unwrap();
        assert_two_coloured(&adjacency_graph(&p, 2), &out.modes[k].signs);
    }
    for k in 0..20 {
        assert!(max_dev_up_to_sign(&out.fields[k], &eig.fields[k]) <= 1e-8, "mode {k}");
    }
}

#[test]
fn non_simple_table_is_refused() {
    let mesh = build_rect_mesh(9, 9, 1.0, 1.0, Topology::Torus2).unwrap();
    let eig = forward_solve(&mesh, &identity(&mesh), BoundaryCondition::None, 6).unwrap();
    let err = recover_signed_eigenfunctions(&synthesize_local_weyl(&eig), &mesh, Step1Options::default()).unwrap_err();
    assert!(matches!(err, Error::NotSimple { .. }));
}

fn check_partition(p: &NodalPartition, mesh: &Mesh, amp: &[f64]) {
    let max = amp.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (v, l) in p.labels.iter().enumerate() {
        assert_eq!(l.is_none(), amp[v] <= p.zero_tol * max || mesh.is_boundary(v) && amp[v] == 0.0);
    }
    let adj = mesh.adjacency();
    for d in 0..p.m {
        let members: Vec<usize> = (0..amp.len()).filter(|&v| p.labels[v] == Some(d)).collect();
        let mut seen = BTreeSet::from([members[0]]);
        let mut stack = vec![members[0]];
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if p.labels[w] == Some(d) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        assert_eq!(seen.len(), members.len(), "domain {d} is not connected");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bipartite_graphs_are_two_coloured(
        side in proptest::collection::vec(any::<bool>(), 2..12),
        extra in proptest::collection::vec((0usize..12, 0usize..12), 0..30),
    ) {
        let m = side.len();
        // A spanning path across the two sides keeps the graph connected.
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&i| (i % 2, i));
        let mut edges = Vec::new();
        let mut colour = side.clone();
        for w in order.windows(2) {
            colour[w[1]] = !colour[w[0]];
            edges.push((w[0], w[1]));
        }
        for (a, b) in extra {
            let (a, b) = (a % m, b % m);
            if colour[a] != colour[b] {
                edges.push((a, b));
            }
        }
        let g = DomainGraph::from_edges(m, &edges);
        let s = propagate_signs(&g).unwrap();
        prop_assert_eq!(s.signs[0], 1);
        assert_two_coloured(&g, &s);
    }

    #[test]
    fn odd_cycles_are_found(len in 1usize..7, tail in 0usize..5) {
        let n = 2 * len + 1;
        let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        for t in 0..tail {
            edges.push((n + t, if t == 0 { 0 } else { n + t - 1 }));
        }
        let g = DomainGraph::from_edges(n + tail, &edges);
        match propagate_signs(&g) {
            Err(Error::OddCycle { cycle }) => {
                prop_assert_eq!(cycle.len() % 2, 1);
                for i in 0..cycle.len() {
                    prop_assert!(g.has_edge(cycle[i], cycle[(i + 1) % cycle.len()]));
                }
            }
            other => prop_assert!(false, "expected an odd cycle, got {:?}", other),
        }
    }

    #[test]
    fn partitions_are_connected_labelings(
        coeffs in proptest::collection::vec(-1.0f64..1.0, 1..6), n in 11usize..40
    ) {
        let mesh = build_rect_mesh(n, n, 1.0, 1.0, Topology::Rectangle).unwrap();
        let amp: Vec<f64> = (0..mesh.n_vertices())
            .map(|v| {
                let x = mesh.vertex(v);
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * ((k + 1) as f64 * PI * x[0]).sin() * ((k % 3 + 1) as f64 * PI * x[1]).sin())
                    .sum::<f64>()
                    .abs()
            })
            .collect();
        prop_assume!(amp.iter().any(|a| *a > 1e-3));
        let p = nodal_partition(&amp, &mesh, DEFAULT_ZERO_TOL).unwrap();
        prop_assert!(p.m >= 1);
        check_partition(&p, &mesh, &amp);
    }

    #[test]
    fn interval_modes_do_not_depend_on_the_input_sign(k in 0usize..20) {
        let (mesh, eig) = interval();
        let recover = |sign: f64| {
            let amp: Vec<f64> = eig.fields[k].iter().map(|v| (sign * v).abs()).collect();
            let p = nodal_partition(&amp, mesh, DEFAULT_ZERO_TOL).unwrap();
            let s = propagate_signs(&adjacency_graph(&p, 1)).unwrap();
            recover_eigenfunction(&amp, &p, &s)
        };
        let rec = recover(1.0);
        prop_assert_eq!(&rec, &recover(-1.0));
        let dev = rec.iter().zip(&eig.fields[k]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(dev <= 1e-10);
    }
}
