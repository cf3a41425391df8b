//! Per-vertex Riemannian metric fields and their analytic descriptors.

use evalexpr::{
    build_operator_tree, ContextWithMutableFunctions, ContextWithMutableVariables, DefaultNumericTypes, EvalexprError,
    Function, HashMapContext, Node, Value,
};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// How a metric field was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetricDescriptor {
    /// The same symmetric matrix at every vertex.
    Constant { matrix: Vec<Vec<f64>> },
    /// `e^{2u(x)}·I` with `u` a closed-form expression in `x` (1D) or `x1, x2` (2D).
    /// `x` is also bound to the first coordinate in 2D. Functions: `sin cos tan exp ln
    /// sqrt abs tanh`; constant `pi`.
    Conformal { u: String },
    /// Explicit per-vertex matrices; the data lives in the field itself.
    Table,
}

/// Symmetric positive-definite matrix per vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricField {
    dimension: usize,
    values: Vec<f64>,
    descriptor: MetricDescriptor,
}

/// Eigenvalue bounds enforced on every sampled matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricBounds {
    pub g_min: f64,
    pub g_max: f64,
}

impl Default for MetricBounds {
    fn default() -> Self {
        MetricBounds { g_min: 1e-6, g_max: f64::INFINITY }
    }
}

/// A compiled scalar expression over chart coordinates.
pub struct ScalarExpr {
    tree: Node<DefaultNumericTypes>,
    source: String,
}

impl ScalarExpr {
    pub fn parse(source: &str) -> Result<ScalarExpr> {
        let tree = build_operator_tree::<DefaultNumericTypes>(source)
            .map_err(|e| Error::InvalidArgument(format!("cannot parse expression {source:?}: {e}")))?;
        Ok(ScalarExpr { tree, source: source.to_string() })
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        let err = |e: EvalexprError<DefaultNumericTypes>| {
            Error::InvalidArgument(format!("cannot evaluate {:?}: {e}", self.source))
        };
        ctx.set_value("pi".into(), Value::Float(std::f64::consts::PI)).map_err(err)?;
        ctx.set_value("x".into(), Value::Float(x[0])).map_err(err)?;
        for (k, &xk) in x.iter().enumerate() {
            ctx.set_value(format!("x{}", k + 1), Value::Float(xk)).map_err(err)?;
        }
        let unary: [(&str, fn(f64) -> f64); 8] = [
            ("sin", f64::sin),
            ("cos", f64::cos),
            ("tan", f64::tan),
            ("exp", f64::exp),
            ("ln", f64::ln),
            ("sqrt", f64::sqrt),
            ("abs", f64::abs),
            ("tanh", f64::tanh),
        ];
        for (name, f) in unary {
            ctx.set_function(
                name.into(),
                Function::new(move |arg: &Value<DefaultNumericTypes>| Ok(Value::Float(f(arg.as_number()?)))),
            )
            .map_err(err)?;
        }
        self.tree.eval_number_with_context(&ctx).map_err(err)
    }
}

impl MetricField {
    /// Wraps per-vertex matrices (row-major, `d×d` each) after validation.
    pub fn from_values(
        mesh: &Mesh,
        values: Vec<f64>,
        descriptor: MetricDescriptor,
        bounds: MetricBounds,
    ) -> Result<MetricField> {
        let d = mesh.dimension();
        if values.len() != d * d * mesh.n_vertices() {
            return Err(Error::DimensionMismatch(format!(
                "metric has {} entries, mesh needs {}",
                values.len(),
                d * d * mesh.n_vertices()
            )));
        }
        let field = MetricField { dimension: d, values, descriptor };
        for v in 0..mesh.n_vertices() {
            check_spd(&field.at(v), v, bounds)?;
        }
        Ok(field)
    }

    /// Explicit per-vertex table given as nested `d×d` arrays.
    pub fn from_table(mesh: &Mesh, table: &[Vec<Vec<f64>>], bounds: MetricBounds) -> Result<MetricField> {
        let d = mesh.dimension();
        let mut values = Vec::with_capacity(table.len() * d * d);
        for (v, m) in table.iter().enumerate() {
            if m.len() != d || m.iter().any(|r| r.len() != d) {
                return Err(Error::MetricValidation { vertex: v, reason: format!("expected a {d}x{d} matrix") });
            }
            for r in m {
                values.extend_from_slice(r);
            }
        }
        MetricField::from_values(mesh, values, MetricDescriptor::Table, bounds)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_vertices(&self) -> usize {
        self.values.len() / (self.dimension * self.dimension)
    }

    pub fn descriptor(&self) -> &MetricDescriptor {
        &self.descriptor
    }

    /// Row-major entries of vertex `v`.
    pub fn raw(&self, v: usize) -> &[f64] {
        let s = self.dimension * self.dimension;
        &self.values[v * s..(v + 1) * s]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, v: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dimension, self.dimension, self.raw(v))
    }

    /// Volume density `√det g` at vertex `v`.
    pub fn sqrt_det(&self, v: usize) -> f64 {
        self.at(v).determinant().sqrt()
    }

    pub fn as_table(&self) -> Vec<Vec<Vec<f64>>> {
        let d = self.dimension;
        (0..self.n_vertices()).map(|v| self.raw(v).chunks(d).map(|r| r.to_vec()).collect()).collect()
    }
}

fn check_spd(m: &DMatrix<f64>, vertex: usize, bounds: MetricBounds) -> Result<()> {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            if !a.is_finite() {
                return Err(Error::MetricValidation { vertex, reason: "non-finite entry".into() });
            }
            if (a - b).abs() > 1e-12 * (a.abs() + b.abs()).max(1.0) {
                return Err(Error::MetricValidation { vertex, reason: "matrix is not symmetric".into() });
            }
        }
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let lo = eig.min();
    let hi = eig.max();
    if !(lo > 0.0) {
        return Err(Error::MetricValidation { vertex, reason: format!("non-positive eigenvalue {lo:e}") });
    }
    if lo < bounds.g_min || hi > bounds.g_max {
        return Err(Error::MetricValidation {
            vertex,
            reason: format!("eigenvalues [{lo:e}, {hi:e}] outside [{:e}, {:e}]", bounds.g_min, bounds.g_max),
        });
    }
    Ok(())
}

/// Samples an analytic descriptor at every vertex of `mesh`.
pub fn sample_metric(descriptor: &MetricDescriptor, mesh: &Mesh) -> Result<MetricField> {
    sample_metric_with_bounds(descriptor, mesh, MetricBounds::default())
}

pub fn sample_metric_with_bounds(
    descriptor: &MetricDescriptor,
    mesh: &Mesh,
    bounds: MetricBounds,
) -> Result<MetricField> {
    let d = mesh.dimension();
    let n = mesh.n_vertices();
    let mut values = Vec::with_capacity(n * d * d);
    match descriptor {
        MetricDescriptor::Constant { matrix } => {
            if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                return Err(Error::DimensionMismatch(format!("constant metric must be {d}x{d}")));
            }
            for _ in 0..n {
                for r in matrix {
                    values.extend_from_slice(r);
                }
            }
        }
        MetricDescriptor::Conformal { u } => {
            let expr = ScalarExpr::parse(u)?;
            for v in 0..n {
                let uv = expr.eval(mesh.vertex(v))?;
                let s = (2.0 * uv).exp();
                if !s.is_finite() {
                    return Err(Error::MetricValidation { vertex: v, reason: format!("u = {uv} is not finite") });
                }
                for i in 0..d {
                    for j in 0..d {
                        values.push(if i == j { s } else { 0.0 });
                    }
                }
            }
        }
        MetricDescriptor::Table => {
            return Err(Error::InvalidArgument("table metrics are built with MetricField::from_table".into()))
        }
    }
    MetricField::from_values(mesh, values, descriptor.clone(), bounds)
}
