//! File formats: chart JSON, tables, sampled-table ingestion and plot CSV.
//!
//! JSON floats are written with 17 significant digits so that every `f64`
//! survives a write/read cycle unchanged.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{CompactFormatter, Formatter};

use crate::error::{Error, Result};
use crate::forward::{BoundaryCondition, LocalWeylTable};
use crate::mesh::{Mesh, Topology};
use crate::metric::{MetricBounds, MetricDescriptor, MetricField};

/// Compact JSON with `{:.16e}` floats.
#[derive(Clone, Copy, Debug, Default)]
pub struct FullPrecision;

impl Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        CompactFormatter.write_f32(writer, value)
    }
}

/// Serialises with [`FullPrecision`]. Non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

fn io_err(path: &Path, source: io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

/// Writes `contents` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name =
        path.file_name().ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(io_err(path, e));
    }
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    from_json(&read_text(path)?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = to_json(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Metric block of a chart file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSection {
    pub descriptor: MetricDescriptor,
    pub per_vertex: Vec<Vec<Vec<f64>>>,
}

/// On-disk mesh with an optional metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartFile {
    pub dimension: usize,
    pub topology: Topology,
    pub vertices: Vec<Vec<f64>>,
    pub cells: Vec<Vec<usize>>,
    pub boundary: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricSection>,
}

impl ChartFile {
    pub fn new(mesh: &Mesh, metric: Option<&MetricField>) -> ChartFile {
        ChartFile {
            dimension: mesh.dimension(),
            topology: mesh.topology(),
            vertices: (0..mesh.n_vertices()).map(|v| mesh.vertex(v).to_vec()).collect(),
            cells: mesh.cells().to_vec(),
            boundary: mesh.boundary().to_vec(),
            period: mesh.period().map(|p| p.to_vec()),
            metric: metric.map(|g| MetricSection { descriptor: g.descriptor().clone(), per_vertex: g.as_table() }),
        }
    }

    pub fn mesh(&self) -> Result<Mesh> {
        Mesh::new(
            self.dimension,
            self.topology,
            self.vertices.clone(),
            self.cells.clone(),
            self.boundary.clone(),
            self.period.clone(),
        )
    }

    /// Rebuilds mesh and metric, re-validating both.
    pub fn load(&self) -> Result<(Mesh, Option<MetricField>)> {
        let mesh = self.mesh()?;
        let metric = match &self.metric {
            None => None,
            Some(sec) => {
                let flat = MetricField::from_table(&mesh, &sec.per_vertex, MetricBounds::default())?;
                Some(MetricField::from_values(
                    &mesh,
                    flat.values().to_vec(),
                    sec.descriptor.clone(),
                    MetricBounds::default(),
                )?)
            }
        };
        Ok((mesh, metric))
    }
}

/// `N(x, λ)` sampled on a grid of `λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledWeylInput {
    pub lambdas: Vec<f64>,
    /// `values[x][i] = N(x, lambdas[i])`.
    pub values: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub bc: BoundaryCondition,
}

/// Ingestion input: exact jump events or samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "lowercase")]
pub enum WeylInput {
    Events(LocalWeylTable),
    Sampled(SampledWeylInput),
}

/// Default weight-integrated increment that counts as a jump.
pub const DEFAULT_JUMP_TOL: f64 = 0.5;

impl SampledWeylInput {
    fn validate(&self) -> Result<()> {
        let n = self.weights.len();
        if self.values.len() != n {
            return Err(Error::DimensionMismatch(format!("{} sampled rows for {n} weights", self.values.len())));
        }
        if self.lambdas.len() < 2 || self.lambdas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("lambda grid must have at least 2 strictly ascending values".into()));
        }
        for (x, row) in self.values.iter().enumerate() {
            if row.len() != self.lambdas.len() {
                return Err(Error::DimensionMismatch(format!("vertex {x} has {} samples", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) || row.windows(2).any(|w| w[1] < w[0] - 1e-12) {
                return Err(Error::CorruptTable(format!("N({x}, ·) is not finite and nondecreasing")));
            }
        }
        let total: f64 = self.values.iter().zip(&self.weights).map(|(r, w)| r[r.len() - 1] * w).sum();
        if (total - total.round()).abs() > 0.01 {
            return Err(Error::CorruptTable(format!("final count integrates to {total}, not an integer")));
        }
        Ok(())
    }
}

/// Jump table from an ingestion input; events pass through unchanged.
pub fn ingest_sampled_table(input: &WeylInput, jump_tol: f64) -> Result<LocalWeylTable> {
    let s = match input {
        WeylInput::Events(t) => return Ok(t.clone()),
        WeylInput::Sampled(s) => s,
    };
    s.validate()?;
    let integrate = |i: usize| -> f64 { s.values.iter().zip(&s.weights).map(|(r, w)| r[i] * w).sum() };
    if integrate(0) > jump_tol {
        return Err(Error::ResolutionTooCoarse(format!(
            "N already integrates to {:.3} at the first sample λ = {}",
            integrate(0),
            s.lambdas[0]
        )));
    }
    let mut table =
        LocalWeylTable { jump_frequencies: Vec::new(), jump_fields: Vec::new(), weights: s.weights.clone(), bc: s.bc };
    for i in 0..s.lambdas.len() - 1 {
        let field: Vec<f64> = s.values.iter().map(|r| r[i + 1] - r[i]).collect();
        let mass: f64 = field.iter().zip(&s.weights).map(|(d, w)| d * w).sum();
        if mass >= 1.5 {
            return Err(Error::ResolutionTooCoarse(format!(
                "increment {mass:.3} in [{}, {}] holds more than one eigenvalue",
                s.lambdas[i],
                s.lambdas[i + 1]
            )));
        }
        if mass > jump_tol {
            table.jump_frequencies.push(0.5 * (s.lambdas[i] + s.lambdas[i + 1]));
            table.jump_fields.push(field);
        }
    }
    Ok(table)
}

/// Samples a jump table on a grid (the inverse of ingestion, for tests and export).
pub fn sample_table(table: &LocalWeylTable, lambdas: &[f64]) -> SampledWeylInput {
    let n = table.weights.len();
    let values = (0..n).map(|x| lambdas.iter().map(|&l| table.local_count(x, l)).collect()).collect();
    SampledWeylInput { lambdas: lambdas.to_vec(), values, weights: table.weights.clone(), bc: table.bc }
}

/// CSV flavours.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    Staircase,
    Mu,
    MetricErrorVsK,
    Tori,
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<PlotKind> {
        match s {
            "staircase" => Ok(PlotKind::Staircase),
            "mu" => Ok(PlotKind::Mu),
            "metric-error-vs-k" => Ok(PlotKind::MetricErrorVsK),
            "tori" => Ok(PlotKind::Tori),
            other => Err(Error::InvalidArgument(format!(
                "unknown plot kind {other:?} (expected staircase, mu, metric-error-vs-k or tori)"
            ))),
        }
    }
}

/// Data behind one plot.
#[derive(Clone, Debug, PartialEq)]
pub enum PlotArtifact<'a> {
    /// `N(x, λ)` at one vertex.
    Staircase { table: &'a LocalWeylTable, vertex: usize },
    /// Recovered and true density over vertex coordinates.
    Mu { coords: Vec<Vec<f64>>, recovered: &'a [f64], truth: Option<&'a [f64]> },
    /// `(K, error)` pairs.
    MetricErrorVsK { points: &'a [(usize, f64)] },
    /// Two eigenvalue lists `(λ, multiplicity)`, ascending.
    Tori { a: &'a [(f64, u64)], b: &'a [(f64, u64)] },
}

impl PlotArtifact<'_> {
    pub fn kind(&self) -> PlotKind {
        match self {
            PlotArtifact::Staircase { .. } => PlotKind::Staircase,
            PlotArtifact::Mu { .. } => PlotKind::Mu,
            PlotArtifact::MetricErrorVsK { .. } => PlotKind::MetricErrorVsK,
            PlotArtifact::Tori { .. } => PlotKind::Tori,
        }
    }
}

/// CSV text with a header row. `kind` must match the artifact.
///
/// Columns: staircase `lambda,N` (two rows per jump); mu `x,mu_recovered,mu_true`
/// (`x1,x2,…` in 2D, empty `mu_true` when unknown); metric-error-vs-k `K,error`;
/// tori `lambda,N_a,N_b,diff`.
pub fn emit_plot_data(artifact: &PlotArtifact<'_>, kind: PlotKind) -> Result<String> {
    if artifact.kind() != kind {
        return Err(Error::InvalidArgument(format!("artifact is {:?}, not {kind:?}", artifact.kind())));
    }
    let mut out = String::new();
    match artifact {
        PlotArtifact::Staircase { table, vertex } => {
            if *vertex >= table.weights.len() {
                return Err(Error::InvalidArgument(format!("vertex {vertex} out of range")));
            }
            out.push_str("lambda,N\n");
            out.push_str("0,0\n");
            let mut n = 0.0;
            for (l, f) in table.jump_frequencies.iter().zip(&table.jump_fields) {
                let _ = writeln!(out, "{l},{n}");
                n += f[*vertex];
                let _ = writeln!(out, "{l},{n}");
            }
        }
        PlotArtifact::Mu { coords, recovered, truth } => {
            let d = coords.first().map_or(1, |c| c.len());
            if d == 1 {
                out.push('x');
            } else {
                out.push_str(&(1..=d).map(|k| format!("x{k}")).collect::<Vec<_>>().join(","));
            }
            out.push_str(",mu_recovered,mu_true\n");
            for (i, c) in coords.iter().enumerate() {
                let xs = c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
                let t = truth.map(|t| t[i].to_string()).unwrap_or_default();
                let _ = writeln!(out, "{xs},{},{t}", recovered[i]);
            }
        }
        PlotArtifact::MetricErrorVsK { points } => {
            out.push_str("K,error\n");
            for (k, e) in points.iter() {
                let _ = writeln!(out, "{k},{e}");
            }
        }
        PlotArtifact::Tori { a, b } => {
            out.push_str("lambda,N_a,N_b,diff\n");
            let (mut i, mut j) = (0, 0);
            let (mut na, mut nb) = (0u64, 0u64);
            while i < a.len() || j < b.len() {
                let la = a.get(i).map_or(f64::INFINITY, |p| p.0);
                let lb = b.get(j).map_or(f64::INFINITY, |p| p.0);
                let l = la.min(lb);
                if la == l {
                    na += a[i].1;
                    i += 1;
                }
                if lb == l {
                    nb += b[j].1;
                    j += 1;
                }
                let _ = writeln!(out, "{l},{na},{nb},{}", na as i128 - nb as i128);
            }
        }
    }
    Ok(out)
}
