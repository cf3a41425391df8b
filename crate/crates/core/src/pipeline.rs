//! Round-trip experiments: forward solve, table synthesis, the three inverse
//! steps, comparison with ground truth and the consistency re-solve.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::density::{euclidean_weights, recover_density_from_basis, DensityRecovery};
use crate::error::{Error, Result};
use crate::forward::{forward_solve, synthesize_local_weyl, BoundaryCondition, EigenSystem, LocalWeylTable};
use crate::inversion::{check_simplicity, recover_signed_eigenfunctions, SimplicityDiagnostics, Step1Options};
use crate::mesh::{build_interval_mesh, build_rect_mesh, Mesh, Topology};
use crate::metric::{sample_metric, MetricBounds, MetricDescriptor, MetricField};
use crate::probe::{recover_metric_at, MetricProbe, ProbeConfig, SpectralLaplacian};

/// Structured chart to build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MeshSpec {
    Interval { n: usize, length: f64 },
    Rectangle { nx: usize, ny: usize, a: f64, b: f64 },
    Torus2 { nx: usize, ny: usize, a: f64, b: f64 },
}

impl MeshSpec {
    pub fn build(&self) -> Result<Mesh> {
        match *self {
            MeshSpec::Interval { n, length } => build_interval_mesh(n, length),
            MeshSpec::Rectangle { nx, ny, a, b } => build_rect_mesh(nx, ny, a, b, Topology::Rectangle),
            MeshSpec::Torus2 { nx, ny, a, b } => build_rect_mesh(nx, ny, a, b, Topology::Torus2),
        }
    }
}

/// Where Steps 2 and 3 take their signed eigenfunctions from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignSource {
    /// Signs recovered by Step 1 from the table alone.
    #[default]
    Recovered,
    /// The forward eigenfunctions; isolates Steps 2 and 3 from Step 1.
    Forward,
}

/// Reference measure `dV_g̃` for Step 2.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceMeasure {
    #[default]
    Euclidean,
}

/// Pass/fail thresholds for the consistency re-solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyTolerances {
    /// Largest relative frequency difference.
    pub frequency: f64,
    /// Largest relative weighted L² difference of jump fields; `None` reports only.
    #[serde(default)]
    pub field: Option<f64>,
}

impl Default for ConsistencyTolerances {
    fn default() -> Self {
        ConsistencyTolerances { frequency: 0.01, field: None }
    }
}

fn default_fit_tol() -> f64 {
    0.1
}

/// Everything needed to re-run an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundTripConfig {
    pub id: String,
    pub mesh: MeshSpec,
    pub metric: MetricDescriptor,
    /// Boundary condition; defaults to Dirichlet on bounded charts.
    #[serde(default)]
    pub bc: Option<BoundaryCondition>,
    /// Modes solved, inverted and used in Steps 2 and 3.
    pub k: usize,
    /// Probe points in chart coordinates.
    #[serde(default)]
    pub probes: Vec<Vec<f64>>,
    /// Spectral taper start for the probes.
    #[serde(default)]
    pub probe_window: Option<f64>,
    #[serde(default = "default_fit_tol")]
    pub fit_tol: f64,
    #[serde(default)]
    pub reference: ReferenceMeasure,
    #[serde(default)]
    pub step1: Step1Options,
    #[serde(default)]
    pub sign_source: SignSource,
    /// Runs the consistency re-solve when present.
    #[serde(default)]
    pub consistency: Option<ConsistencyTolerances>,
}

/// Step-one status of one mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeStatus {
    pub index: usize,
    pub frequency: f64,
    pub domains: usize,
    /// `min(‖ẽ − e‖∞, ‖ẽ + e‖∞)` against the forward eigenfunction.
    pub deviation: f64,
    pub recovered: bool,
}

/// Step-two summary against `μ = √det g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub k: usize,
    pub condition: Option<f64>,
    /// Relative weighted L² error.
    pub l2_error: f64,
    /// Relative L∞ error over kept vertices.
    pub linf_error: f64,
    pub mu: Vec<f64>,
    pub mu_true: Vec<f64>,
}

/// Step-three result at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probe: MetricProbe,
    /// Row-major true metric at the probe vertex.
    pub truth: Vec<f64>,
    /// Largest entrywise error relative to the largest true diagonal entry.
    pub error: f64,
}

/// Consistency verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyVerdict {
    pub interpolation: String,
    pub frequency_differences: Vec<f64>,
    pub field_differences: Vec<f64>,
    pub max_frequency_difference: f64,
    pub max_field_difference: f64,
    pub tolerances: ConsistencyTolerances,
    pub passed: bool,
}

/// Self-contained record of one round trip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundTripReport {
    pub config: RoundTripConfig,
    pub simplicity: SimplicityDiagnostics,
    pub modes: Vec<ModeStatus>,
    pub density: Option<DensityReport>,
    pub probes: Vec<ProbeReport>,
    pub consistency: Option<ConsistencyVerdict>,
    /// Seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

/// Recovered model fed to the consistency check.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveredModel {
    pub metric: MetricField,
    pub interpolation: String,
}

/// Name recorded for [`build_recovered_metric`].
pub const DENSITY_SHAPE_INTERPOLATION: &str =
    "g = (mu w_ref / w_euclid)^(2/n) G, G the unit-determinant probe metric (piecewise linear in 1D, nearest probe in 2D, identity without probes)";

/// Metric field from the recovered density and probe shapes.
///
/// The density fixes `√det g` at every vertex; probes contribute only the
/// unit-determinant shape `G = g/det(g)^{1/n}`.
pub fn build_recovered_metric(
    mesh: &Mesh,
    density: &DensityRecovery,
    probes: &[MetricProbe],
) -> Result<RecoveredModel> {
    let d = mesh.dimension();
    let eucl = euclidean_weights(mesh);
    let shapes: Vec<(Vec<f64>, DMatrix<f64>)> = probes
        .iter()
        .map(|p| {
            let g = p.metric_matrix();
            let s = g.determinant().powf(1.0 / d as f64);
            (p.x0.clone(), g / s)
        })
        .collect();
    let mut values = Vec::with_capacity(mesh.n_vertices() * d * d);
    for x in 0..mesh.n_vertices() {
        let vol = density.mu[x] * density.reference_weights[x] / eucl[x];
        let scale = vol.powf(2.0 / d as f64);
        let shape = shape_at(mesh, x, &shapes, d);
        values.extend((scale * shape).transpose().iter().copied());
    }
    let metric = MetricField::from_values(mesh, values, MetricDescriptor::Table, MetricBounds::default())?;
    Ok(RecoveredModel { metric, interpolation: DENSITY_SHAPE_INTERPOLATION.to_string() })
}

fn shape_at(mesh: &Mesh, x: usize, shapes: &[(Vec<f64>, DMatrix<f64>)], d: usize) -> DMatrix<f64> {
    if shapes.is_empty() {
        return DMatrix::identity(d, d);
    }
    let p = mesh.vertex(x);
    if d == 1 {
        let mut sorted: Vec<&(Vec<f64>, DMatrix<f64>)> = shapes.iter().collect();
        sorted.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
        let t = p[0];
        if t <= sorted[0].0[0] {
            return sorted[0].1.clone();
        }
        for w in sorted.windows(2) {
            let (a, b) = (w[0].0[0], w[1].0[0]);
            if t <= b {
                let s = (t - a) / (b - a);
                return &w[0].1 * (1.0 - s) + &w[1].1 * s;
            }
        }
        return sorted[sorted.len() - 1].1.clone();
    }
    let dist = |q: &[f64]| -> f64 { p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum() };
    shapes.iter().min_by(|a, b| dist(&a.0).total_cmp(&dist(&b.0))).map(|s| s.1.clone()).expect("non-empty")
}

/// Re-solves on the recovered model and compares with `table`.
///
/// Frequencies are compared index by index against the jump frequencies; fields
/// compare `e_j²` of the model with `E_j` in weighted L², relative to `‖E_j‖`.
pub fn verify_consistency(
    table: &LocalWeylTable,
    model: &RecoveredModel,
    mesh: &Mesh,
    tolerances: ConsistencyTolerances,
) -> Result<ConsistencyVerdict> {
    let k = table.jump_frequencies.len();
    let eig = forward_solve(mesh, &model.metric, table.bc, k)?;
    let mut frequency_differences = Vec::with_capacity(k);
    let mut field_differences = Vec::with_capacity(k);
    for j in 0..k {
        let f = table.jump_frequencies[j];
        frequency_differences.push(if f == 0.0 {
            eig.frequencies[j].abs()
        } else {
            (eig.frequencies[j] - f).abs() / f
        });
        let (mut num, mut den) = (0.0, 0.0);
        for x in 0..table.weights.len() {
            let e = eig.fields[j][x];
            num += (e * e - table.jump_fields[j][x]).powi(2) * table.weights[x];
            den += table.jump_fields[j][x].powi(2) * table.weights[x];
        }
        field_differences.push(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() });
    }
    let max_frequency_difference = frequency_differences.iter().cloned().fold(0.0, f64::max);
    let max_field_difference = field_differences.iter().cloned().fold(0.0, f64::max);
    let passed =
        max_frequency_difference <= tolerances.frequency && tolerances.field.is_none_or(|t| max_field_difference <= t);
    Ok(ConsistencyVerdict {
        interpolation: model.interpolation.clone(),
        frequency_differences,
        field_differences,
        max_frequency_difference,
        max_field_difference,
        tolerances,
        passed,
    })
}

/// Per-stage intermediate results of a round trip, for callers that need more
/// than the report.
#[derive(Clone, Debug)]
pub struct RoundTripArtifacts {
    pub mesh: Mesh,
    pub metric: MetricField,
    pub eigensystem: EigenSystem,
    pub table: LocalWeylTable,
    pub fields: Vec<Vec<f64>>,
    pub density: DensityRecovery,
    pub model: Option<RecoveredModel>,
}

fn sign_deviation(a: &[f64], b: &[f64]) -> f64 {
    let plus = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let minus = a.iter().zip(b).map(|(x, y)| (x + y).abs()).fold(0.0, f64::max);
    plus.min(minus)
}

/// Runs every stage; the first failure is returned wrapped with its stage name.
pub fn run_roundtrip(config: &RoundTripConfig) -> Result<RoundTripReport> {
    run_roundtrip_with_artifacts(config).map(|(r, _)| r)
}

pub fn run_roundtrip_with_artifacts(config: &RoundTripConfig) -> Result<(RoundTripReport, RoundTripArtifacts)> {
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, t: &mut Instant| {
        timings.insert(name.to_string(), t.elapsed().as_secs_f64());
        *t = Instant::now();
    };

    let mesh = config.mesh.build().map_err(|e| e.in_stage("mesh"))?;
    let metric = sample_metric(&config.metric, &mesh).map_err(|e| e.in_stage("metric"))?;
    let bc = config.bc.unwrap_or_else(|| BoundaryCondition::default_for(&mesh));
    let eig = forward_solve(&mesh, &metric, bc, config.k).map_err(|e| e.in_stage("forward"))?;
    let table = synthesize_local_weyl(&eig);
    lap("forward", &mut clock);

    let simplicity = check_simplicity(&table, config.step1.gap_tol);
    if !simplicity.is_simple() {
        return Err(Error::NotSimple {
            close_pairs: simplicity.close_pairs,
            multiplicities: simplicity.multiplicity_flags,
        }
        .in_stage("check_simplicity"));
    }

    let (fields, modes) = match config.sign_source {
        SignSource::Recovered => {
            let out = recover_signed_eigenfunctions(&table, &mesh, config.step1).map_err(|e| e.in_stage("step1"))?;
            let modes = out
                .modes
                .iter()
                .enumerate()
                .map(|(j, m)| {
                    let deviation = sign_deviation(&out.fields[j], &eig.fields[j]);
                    ModeStatus {
                        index: j,
                        frequency: out.frequencies[j],
                        domains: m.domains,
                        deviation,
                        recovered: deviation <= 1e-8,
                    }
                })
                .collect();
            (out.fields, modes)
        }
        SignSource::Forward => (eig.fields.clone(), Vec::new()),
    };
    lap("step1", &mut clock);

    let reference = match config.reference {
        ReferenceMeasure::Euclidean => euclidean_weights(&mesh),
    };
    let density = recover_density_from_basis(&fields, &reference, config.k, &mesh).map_err(|e| e.in_stage("step2"))?;
    let mu_true: Vec<f64> = (0..mesh.n_vertices()).map(|x| metric.sqrt_det(x)).collect();
    let (mut num, mut den, mut linf) = (0.0, 0.0, 0.0f64);
    for x in 0..mesh.n_vertices() {
        num += (density.mu[x] - mu_true[x]).powi(2) * reference[x];
        den += mu_true[x].powi(2) * reference[x];
        if density.kept[x] {
            linf = linf.max(((density.mu[x] - mu_true[x]) / mu_true[x]).abs());
        }
    }
    let density_report = DensityReport {
        k: config.k,
        condition: density.condition,
        l2_error: (num / den).sqrt(),
        linf_error: linf,
        mu: density.mu.clone(),
        mu_true,
    };
    lap("step2", &mut clock);

    let mut probes = Vec::with_capacity(config.probes.len());
    if !config.probes.is_empty() {
        let lap_op = SpectralLaplacian::new(&table.jump_frequencies, &fields, &density.volume_weights(), config.k)
            .map_err(|e| e.in_stage("step3"))?;
        for x0 in &config.probes {
            let mut cfg = ProbeConfig::auto(&mesh, x0).map_err(|e| e.in_stage("step3"))?;
            cfg.window = config.probe_window;
            cfg.fit_tol = config.fit_tol;
            let probe = recover_metric_at(&lap_op, &mesh, &cfg).map_err(|e| e.in_stage("step3"))?;
            let truth = metric.at(probe.vertex);
            let rec = probe.metric_matrix();
            let scale = truth.diagonal().max();
            let error = (&rec - &truth).abs().max() / scale;
            probes.push(ProbeReport { probe, truth: truth.transpose().as_slice().to_vec(), error });
        }
    }
    lap("step3", &mut clock);

    let mut model = None;
    let consistency = match config.consistency {
        None => None,
        Some(tol) => {
            let m =
                build_recovered_metric(&mesh, &density, &probes.iter().map(|p| p.probe.clone()).collect::<Vec<_>>())
                    .map_err(|e| e.in_stage("consistency"))?;
            let verdict = verify_consistency(&table, &m, &mesh, tol).map_err(|e| e.in_stage("consistency"))?;
            model = Some(m);
            Some(verdict)
        }
    };
    lap("consistency", &mut clock);

    let report = RoundTripReport {
        config: config.clone(),
        simplicity,
        modes,
        density: Some(density_report),
        probes,
        consistency,
        timings,
    };
    let artifacts = RoundTripArtifacts { mesh, metric, eigensystem: eig, table, fields, density, model };
    Ok((report, artifacts))
}
