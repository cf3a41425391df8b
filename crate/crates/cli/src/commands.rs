//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use weyl_core::density::{euclidean_weights, recover_density_from_basis, DensityRecovery};
use weyl_core::forward::{forward_solve, synthesize_local_weyl, BoundaryCondition, EigenSystem, LocalWeylTable};
use weyl_core::inversion::{recover_signed_eigenfunctions, Step1Options, Step1Output};
use weyl_core::io::{
    emit_plot_data, ingest_sampled_table, read_json, read_text, to_json, write_atomic, ChartFile, PlotArtifact,
    PlotKind, WeylInput,
};
use weyl_core::mesh::Mesh;
use weyl_core::metric::{sample_metric, MetricField};
use weyl_core::pipeline::{run_roundtrip, RoundTripConfig, RoundTripReport};
use weyl_core::probe::{recover_metric_at, MetricProbe, ProbeConfig, SpectralLaplacian};
use weyl_tori::enumerate::{first_difference, same_spectrum, torus_spectrum, NormSpectrum};
use weyl_tori::form::{format_rational, parse_rational_str, LatticeForm};
use weyl_tori::isometry::search_isometry;
use weyl_tori::ToriError;

use crate::{Cli, Command, Format, ForwardArgs, InvertStep, ToriAction};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] weyl_core::Error),
    #[error(transparent)]
    Tori(#[from] ToriError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        let validation = match self {
            CliError::Core(e) => e.is_validation(),
            CliError::Tori(e) => e.is_validation(),
            CliError::Usage(_) => true,
        };
        if validation {
            2
        } else {
            3
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Spectra of two tori and where they first differ.
#[derive(Debug, Serialize, Deserialize)]
pub struct ToriComparison {
    pub same: bool,
    pub first_difference: Option<usize>,
    pub determinant_a: String,
    pub determinant_b: String,
    pub a: NormSpectrum,
    pub b: NormSpectrum,
}

pub fn run(cli: &Cli) -> Result<String> {
    std::fs::create_dir_all(&cli.out)
        .map_err(|source| weyl_core::Error::Io { path: cli.out.display().to_string(), source })?;
    match &cli.command {
        Command::Chart { config } => chart(cli, config),
        Command::Forward(args) => forward(cli, args),
        Command::Invert { step } => invert(cli, step),
        Command::Roundtrip { config } => roundtrip(cli, config),
        Command::Tori { action } => tori(cli, action),
        Command::Ingest { input, jump_tol } => ingest(cli, input, *jump_tol),
        Command::Plot { kind, input, vertex } => plot(cli, kind, input, *vertex),
    }
}

fn json_only(cli: &Cli, what: &str) -> Result<()> {
    match cli.format {
        Format::Json => Ok(()),
        Format::Csv => Err(CliError::Usage(format!("{what} has no CSV form"))),
    }
}

fn emit<T: Serialize>(cli: &Cli, name: &str, value: &T) -> Result<PathBuf> {
    let path = cli.out.join(name);
    write_atomic(&path, to_json(value)?.as_bytes())?;
    Ok(path)
}

fn emit_text(cli: &Cli, name: &str, text: &str) -> Result<PathBuf> {
    let path = cli.out.join(name);
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

fn load_chart(path: &Path) -> Result<(Mesh, Option<MetricField>)> {
    Ok(read_json::<ChartFile>(path)?.load()?)
}

fn parse_bc(s: &str) -> Result<BoundaryCondition> {
    serde_json::from_value(serde_json::Value::String(s.to_lowercase()))
        .map_err(|_| CliError::Usage(format!("unknown boundary condition {s:?} (none, dirichlet, neumann)")))
}

fn chart(cli: &Cli, config: &Path) -> Result<String> {
    json_only(cli, "chart")?;
    let cfg: RoundTripConfig = read_json(config)?;
    let mesh = cfg.mesh.build()?;
    let metric = sample_metric(&cfg.metric, &mesh)?;
    let path = emit(cli, "chart.json", &ChartFile::new(&mesh, Some(&metric)))?;
    Ok(format!("{} vertices written to {}", mesh.n_vertices(), path.display()))
}

fn forward(cli: &Cli, args: &ForwardArgs) -> Result<String> {
    let (mesh, metric, mut bc, k) = match (&args.chart, &args.config) {
        (Some(chart), _) => {
            let (mesh, metric) = load_chart(chart)?;
            let metric = metric.ok_or_else(|| CliError::Usage("chart file has no metric section".into()))?;
            let k = args.k.ok_or_else(|| CliError::Usage("--k is required with --chart".into()))?;
            let bc = BoundaryCondition::default_for(&mesh);
            (mesh, metric, bc, k)
        }
        (None, Some(config)) => {
            let cfg: RoundTripConfig = read_json(config)?;
            let mesh = cfg.mesh.build()?;
            let metric = sample_metric(&cfg.metric, &mesh)?;
            let bc = cfg.bc.unwrap_or_else(|| BoundaryCondition::default_for(&mesh));
            (mesh, metric, bc, args.k.unwrap_or(cfg.k))
        }
        (None, None) => return Err(CliError::Usage("pass --chart or --config".into())),
    };
    if let Some(s) = &args.bc {
        bc = parse_bc(s)?;
    }
    let mut eig = forward_solve(&mesh, &metric, bc, k)?;
    if args.resign {
        let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
        for f in &mut eig.fields {
            if rng.random::<bool>() {
                f.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }
    let table = synthesize_local_weyl(&eig);
    let mut summary = format!(
        "{} modes, {} jumps, λ in [{:.6}, {:.6}]",
        eig.frequencies.len(),
        table.jump_frequencies.len(),
        eig.frequencies[0],
        eig.frequencies[eig.frequencies.len() - 1]
    );
    match cli.format {
        Format::Json => {
            emit(cli, "chart.json", &ChartFile::new(&mesh, Some(&metric)))?;
            emit(cli, "eigensystem.json", &eig)?;
            let path = emit(cli, "table.json", &table)?;
            let _ = write!(summary, "; table written to {}", path.display());
        }
        Format::Csv => {
            if args.vertex >= mesh.n_vertices() {
                return Err(CliError::Usage(format!("vertex {} out of range", args.vertex)));
            }
            let mut csv = String::from("lambda,E\n");
            for (l, e) in table.jump_frequencies.iter().zip(&table.jump_fields) {
                let _ = writeln!(csv, "{l},{}", e[args.vertex]);
            }
            let path = emit_text(cli, "table.csv", &csv)?;
            let _ = write!(summary, "; CSV written to {}", path.display());
        }
    }
    Ok(summary)
}

/// Signed fields from either a step-one output or an eigensystem file.
fn read_signed_fields(path: &Path) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    let text = read_text(path)?;
    if let Ok(out) = serde_json::from_str::<Step1Output>(&text) {
        return Ok((out.frequencies, out.fields, out.weights));
    }
    let eig: EigenSystem = serde_json::from_str(&text).map_err(weyl_core::Error::from)?;
    Ok((eig.frequencies, eig.fields, eig.weights))
}

fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad probe coordinate in {s:?}"))))
        .collect()
}

fn invert(cli: &Cli, step: &InvertStep) -> Result<String> {
    json_only(cli, "invert")?;
    match step {
        InvertStep::Step1 { table, chart, zero_tol, min_links, gap_tol } => {
            let (mesh, _) = load_chart(chart)?;
            let table: LocalWeylTable = read_json(table)?;
            let opts = Step1Options { zero_tol: *zero_tol, adjacency_min_links: *min_links, gap_tol: *gap_tol };
            let out = recover_signed_eigenfunctions(&table, &mesh, opts)?;
            let path = emit(cli, "step1.json", &out)?;
            let domains: Vec<usize> = out.modes.iter().map(|m| m.domains).collect();
            Ok(format!("{} modes signed, domain counts {domains:?}; written to {}", out.fields.len(), path.display()))
        }
        InvertStep::Step2 { step1, chart, k } => {
            let (mesh, _) = load_chart(chart)?;
            let (_, fields, _) = read_signed_fields(step1)?;
            let k = k.unwrap_or(fields.len());
            let rec = recover_density_from_basis(&fields, &euclidean_weights(&mesh), k, &mesh)?;
            let path = emit(cli, "density.json", &rec)?;
            let (lo, hi) = rec.mu.iter().fold((f64::INFINITY, 0.0f64), |(a, b), m| (a.min(*m), b.max(*m)));
            Ok(format!("K = {k}, μ in [{lo:.6}, {hi:.6}]; written to {}", path.display()))
        }
        InvertStep::Step3 { step1, density, chart, probes, window, fit_tol, k } => {
            let (mesh, _) = load_chart(chart)?;
            let (freqs, fields, _) = read_signed_fields(step1)?;
            let rec: DensityRecovery = read_json(density)?;
            let k = k.unwrap_or(rec.k);
            let lap = SpectralLaplacian::new(&freqs, &fields, &rec.volume_weights(), k)?;
            let mut out: Vec<MetricProbe> = Vec::with_capacity(probes.len());
            let mut summary = String::new();
            for p in probes {
                let x0 = parse_point(p)?;
                let cfg = ProbeConfig { window: *window, fit_tol: *fit_tol, ..ProbeConfig::auto(&mesh, &x0)? };
                let probe = recover_metric_at(&lap, &mesh, &cfg)?;
                let _ = writeln!(summary, "g({x0:?}) = {:?}", probe.metric);
                out.push(probe);
            }
            let path = emit(cli, "probes.json", &out)?;
            let _ = write!(summary, "written to {}", path.display());
            Ok(summary)
        }
    }
}

fn report_summary(r: &RoundTripReport) -> String {
    let mut s = format!("round trip {}\n", r.config.id);
    if !r.modes.is_empty() {
        let exact = r.modes.iter().filter(|m| m.recovered).count();
        let _ = writeln!(s, "step 1: {exact}/{} modes match the forward eigenfunctions", r.modes.len());
    }
    if let Some(d) = &r.density {
        let _ = writeln!(s, "step 2: K = {}, μ relative L2 error {:.3e}, L∞ {:.3e}", d.k, d.l2_error, d.linf_error);
    }
    for p in &r.probes {
        let _ = writeln!(s, "step 3: x0 = {:?}, g = {:?}, error {:.3e}", p.probe.x0, p.probe.metric, p.error);
    }
    if let Some(c) = &r.consistency {
        let _ = writeln!(
            s,
            "consistency: max frequency difference {:.3e}, max field difference {:.3e}, {}",
            c.max_frequency_difference,
            c.max_field_difference,
            if c.passed { "passed" } else { "failed" }
        );
    }
    s.trim_end().to_string()
}

fn mu_csv(r: &RoundTripReport) -> Result<String> {
    let d = r.density.as_ref().ok_or_else(|| CliError::Usage("report has no density".into()))?;
    let mesh = r.config.mesh.build()?;
    let coords = (0..mesh.n_vertices()).map(|v| mesh.vertex(v).to_vec()).collect();
    Ok(emit_plot_data(&PlotArtifact::Mu { coords, recovered: &d.mu, truth: Some(&d.mu_true) }, PlotKind::Mu)?)
}

fn roundtrip(cli: &Cli, config: &Path) -> Result<String> {
    let cfg: RoundTripConfig = read_json(config)?;
    let report = run_roundtrip(&cfg)?;
    let summary = report_summary(&report);
    match cli.format {
        Format::Json => {
            emit(cli, "report.json", &report)?;
            emit_text(cli, "summary.txt", &format!("{summary}\n"))?;
        }
        Format::Csv => {
            emit_text(cli, "mu.csv", &mu_csv(&report)?)?;
        }
    }
    Ok(summary)
}

fn read_form(path: &Path) -> Result<LatticeForm> {
    Ok(LatticeForm::from_json(&read_text(path)?)?)
}

fn spectrum_csv(s: &NormSpectrum) -> String {
    let mut csv = String::from("norm,value,multiplicity\n");
    for (e, (v, m)) in s.entries.iter().zip(s.frequencies()) {
        let _ = writeln!(csv, "{},{},{m}", format_rational(&e.norm), v);
    }
    csv
}

fn tori(cli: &Cli, action: &ToriAction) -> Result<String> {
    match action {
        ToriAction::Spectrum { gram, bound } => {
            let form = read_form(gram)?;
            let s = torus_spectrum(&form, &parse_rational_str(bound)?)?;
            let path = match cli.format {
                Format::Json => emit(cli, "spectrum.json", &s)?,
                Format::Csv => emit_text(cli, "spectrum.csv", &spectrum_csv(&s))?,
            };
            Ok(format!(
                "{} distinct norms, {} lattice points; written to {}",
                s.entries.len(),
                s.total_points(),
                path.display()
            ))
        }
        ToriAction::Compare { a, b, bound } => {
            let (fa, fb) = (read_form(a)?, read_form(b)?);
            let bound = parse_rational_str(bound)?;
            let (sa, sb) = (torus_spectrum(&fa, &bound)?, torus_spectrum(&fb, &bound)?);
            let cmp = ToriComparison {
                same: same_spectrum(&sa, &sb),
                first_difference: first_difference(&sa, &sb),
                determinant_a: format_rational(&fa.determinant()),
                determinant_b: format_rational(&fb.determinant()),
                a: sa,
                b: sb,
            };
            let path = match cli.format {
                Format::Json => emit(cli, "compare.json", &cmp)?,
                Format::Csv => emit_text(cli, "compare.csv", &tori_csv(&cmp)?)?,
            };
            Ok(format!(
                "{} up to B = {}; determinants {} and {}; written to {}",
                if cmp.same { "isospectral" } else { "spectra differ" },
                format_rational(&cmp.a.bound),
                cmp.determinant_a,
                cmp.determinant_b,
                path.display()
            ))
        }
        ToriAction::Isometry { a, b } => {
            json_only(cli, "tori isometry")?;
            let found = search_isometry(&read_form(a)?, &read_form(b)?)?;
            let path = emit(cli, "isometry.json", &found)?;
            Ok(match &found.isometry {
                Some(u) => format!("isometry U = {u:?}; written to {}", path.display()),
                None => format!("no isometry ({}); written to {}", found.certificate.statement, path.display()),
            })
        }
    }
}

fn tori_csv(cmp: &ToriComparison) -> Result<String> {
    let (a, b) = (cmp.a.frequencies(), cmp.b.frequencies());
    Ok(emit_plot_data(&PlotArtifact::Tori { a: &a, b: &b }, PlotKind::Tori)?)
}

fn ingest(cli: &Cli, input: &Path, jump_tol: f64) -> Result<String> {
    json_only(cli, "ingest")?;
    let input: WeylInput = read_json(input)?;
    let table = ingest_sampled_table(&input, jump_tol)?;
    let path = emit(cli, "table.json", &table)?;
    Ok(format!("{} jumps; written to {}", table.jump_frequencies.len(), path.display()))
}

fn plot(cli: &Cli, kind: &str, input: &Path, vertex: usize) -> Result<String> {
    let kind: PlotKind = kind.parse()?;
    let csv = match kind {
        PlotKind::Staircase => {
            let table: LocalWeylTable = read_json(input)?;
            emit_plot_data(&PlotArtifact::Staircase { table: &table, vertex }, kind)?
        }
        PlotKind::Mu => mu_csv(&read_json(input)?)?,
        PlotKind::MetricErrorVsK => {
            let reports: Vec<RoundTripReport> = read_json(input)?;
            let points: Vec<(usize, f64)> =
                reports.iter().map(|r| (r.config.k, r.probes.iter().map(|p| p.error).fold(0.0, f64::max))).collect();
            emit_plot_data(&PlotArtifact::MetricErrorVsK { points: &points }, kind)?
        }
        PlotKind::Tori => tori_csv(&read_json(input)?)?,
    };
    let name = match kind {
        PlotKind::Staircase => "staircase.csv",
        PlotKind::Mu => "mu.csv",
        PlotKind::MetricErrorVsK => "metric-error-vs-k.csv",
        PlotKind::Tori => "tori.csv",
    };
    let path = emit_text(cli, name, &csv)?;
    Ok(format!("{} rows written to {}", csv.lines().count() - 1, path.display()))
}
