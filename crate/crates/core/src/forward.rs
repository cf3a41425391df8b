//! Discrete Laplace–Beltrami operator, its eigensystem, and the local Weyl table.
//!
//! Stiffness uses linear segments, P1 triangles or bilinear Q1 quads with a
//! per-cell metric equal to the average of the cell's vertex metrics. Mass is
//! lumped, so the generalized problem `K e = λ² M e` reduces to the standard
//! symmetric problem for `M^{-1/2} K M^{-1/2}`.

use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_lowest, Csr};
use crate::mesh::{Mesh, Topology};
use crate::metric::MetricField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    None,
    Dirichlet,
    Neumann,
}

impl BoundaryCondition {
    /// Natural condition for a mesh: none on a torus, Dirichlet otherwise.
    pub fn default_for(mesh: &Mesh) -> BoundaryCondition {
        match mesh.topology() {
            Topology::Torus2 => BoundaryCondition::None,
            _ => BoundaryCondition::Dirichlet,
        }
    }
}

/// Assembled stiffness and lumped mass, restricted to free vertices.
#[derive(Clone, Debug)]
pub struct Operators {
    pub bc: BoundaryCondition,
    /// Vertex index of each free degree of freedom.
    pub free: Vec<usize>,
    pub stiffness: Csr,
    /// Lumped mass on free vertices.
    pub mass: Vec<f64>,
    /// Lumped mass on every vertex; these are the volume weights.
    pub lumped_mass: Vec<f64>,
    pub n_vertices: usize,
}

/// Ascending eigenpairs with mass-orthonormal, vertex-sampled eigenfunctions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    pub frequencies: Vec<f64>,
    /// `fields[j][x]` is `e_j` at vertex `x`; zero on Dirichlet vertices.
    pub fields: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub bc: BoundaryCondition,
}

/// Jump representation of the local Weyl counting function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalWeylTable {
    #[serde(rename = "frequencies")]
    pub jump_frequencies: Vec<f64>,
    #[serde(rename = "fields")]
    pub jump_fields: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub bc: BoundaryCondition,
}

/// Average of the vertex metrics of a cell.
fn cell_metric(mesh: &Mesh, metric: &MetricField, c: usize) -> DMatrix<f64> {
    let cell = &mesh.cells()[c];
    let mut g = DMatrix::zeros(mesh.dimension(), mesh.dimension());
    for &v in cell {
        g += metric.at(v);
    }
    g / cell.len() as f64
}

/// Element stiffness and lumped mass for one cell.
fn element(mesh: &Mesh, metric: &MetricField, c: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let p = mesh.cell_coords(c);
    let g = cell_metric(mesh, metric, c);
    let det = g.determinant();
    if !(det > 0.0) {
        return Err(Error::MetricValidation {
            vertex: mesh.cells()[c][0],
            reason: format!("cell {c} metric is singular"),
        });
    }
    let sqrt_det = det.sqrt();
    match p.len() {
        2 => {
            let len = (p[1][0] - p[0][0]).abs();
            let coef = sqrt_det / g[(0, 0)] / len;
            let k = DMatrix::from_row_slice(2, 2, &[coef, -coef, -coef, coef]);
            Ok((k, vec![0.5 * len * sqrt_det; 2]))
        }
        3 => {
            let big_g = g2(&g) * sqrt_det;
            let (x, y) = ([p[0][0], p[1][0], p[2][0]], [p[0][1], p[1][1], p[2][1]]);
            let two_area = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0]);
            let area = 0.5 * two_area.abs();
            let grads: Vec<Vector2<f64>> = (0..3)
                .map(|a| {
                    let (b, cc) = ((a + 1) % 3, (a + 2) % 3);
                    Vector2::new(y[b] - y[cc], x[cc] - x[b]) / two_area
                })
                .collect();
            let mut k = DMatrix::zeros(3, 3);
            for a in 0..3 {
                for b in 0..3 {
                    k[(a, b)] = area * grads[a].dot(&(big_g * grads[b]));
                }
            }
            Ok((k, vec![area * sqrt_det / 3.0; 3]))
        }
        4 => {
            let big_g = g2(&g) * sqrt_det;
            let xi = [-1.0, 1.0, 1.0, -1.0];
            let eta = [-1.0, -1.0, 1.0, 1.0];
            let gp = 1.0 / 3f64.sqrt();
            let mut k = DMatrix::zeros(4, 4);
            let mut m = vec![0.0; 4];
            for &(s, t) in &[(-gp, -gp), (gp, -gp), (gp, gp), (-gp, gp)] {
                let n: Vec<f64> = (0..4).map(|a| 0.25 * (1.0 + xi[a] * s) * (1.0 + eta[a] * t)).collect();
                let dn: Vec<Vector2<f64>> = (0..4)
                    .map(|a| Vector2::new(0.25 * xi[a] * (1.0 + eta[a] * t), 0.25 * eta[a] * (1.0 + xi[a] * s)))
                    .collect();
                let mut jac = Matrix2::<f64>::zeros();
                for a in 0..4 {
                    jac[(0, 0)] += p[a][0] * dn[a][0];
                    jac[(0, 1)] += p[a][0] * dn[a][1];
                    jac[(1, 0)] += p[a][1] * dn[a][0];
                    jac[(1, 1)] += p[a][1] * dn[a][1];
                }
                let det_j = jac.determinant();
                if det_j.abs() < 1e-300 {
                    return Err(Error::InvalidMesh(format!("cell {c} has a singular Jacobian")));
                }
                let jinv_t = jac.try_inverse().expect("nonsingular").transpose();
                let grads: Vec<Vector2<f64>> = dn.iter().map(|d| jinv_t * d).collect();
                let wq = det_j.abs();
                for a in 0..4 {
                    m[a] += n[a] * sqrt_det * wq;
                    for b in 0..4 {
                        k[(a, b)] += grads[a].dot(&(big_g * grads[b])) * wq;
                    }
                }
            }
            Ok((k, m))
        }
        n => Err(Error::InvalidMesh(format!("cell {c} has {n} vertices"))),
    }
}

fn g2(g: &DMatrix<f64>) -> Matrix2<f64> {
    Matrix2::new(g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)]).try_inverse().expect("SPD cell metric")
}

/// Assembles stiffness and lumped mass for `-Δ_g`.
///
/// Dirichlet eliminates boundary rows and columns; Neumann keeps them; `None`
/// is only valid on a torus.
pub fn assemble_operators(mesh: &Mesh, metric: &MetricField, bc: BoundaryCondition) -> Result<Operators> {
    if metric.n_vertices() != mesh.n_vertices() || metric.dimension() != mesh.dimension() {
        return Err(Error::DimensionMismatch(format!(
            "metric has {} vertices of dimension {}, mesh has {} of dimension {}",
            metric.n_vertices(),
            metric.dimension(),
            mesh.n_vertices(),
            mesh.dimension()
        )));
    }
    let closed = mesh.topology() == Topology::Torus2;
    match (closed, bc) {
        (true, BoundaryCondition::None)
        | (false, BoundaryCondition::Dirichlet)
        | (false, BoundaryCondition::Neumann) => {}
        _ => {
            return Err(Error::InvalidArgument(format!(
                "boundary condition {bc:?} does not fit topology {:?}",
                mesh.topology()
            )))
        }
    }
    let n = mesh.n_vertices();
    let mut triplets = Vec::new();
    let mut lumped = vec![0.0; n];
    for c in 0..mesh.cells().len() {
        let (k, m) = element(mesh, metric, c)?;
        let cell = &mesh.cells()[c];
        for (a, &va) in cell.iter().enumerate() {
            lumped[va] += m[a];
            for (b, &vb) in cell.iter().enumerate() {
                triplets.push((va, vb, k[(a, b)]));
            }
        }
    }
    let free: Vec<usize> = match bc {
        BoundaryCondition::Dirichlet => (0..n).filter(|&v| !mesh.is_boundary(v)).collect(),
        _ => (0..n).collect(),
    };
    let mut index = vec![usize::MAX; n];
    for (i, &v) in free.iter().enumerate() {
        index[v] = i;
    }
    let restricted: Vec<(usize, usize, f64)> = triplets
        .into_iter()
        .filter(|&(a, b, _)| index[a] != usize::MAX && index[b] != usize::MAX)
        .map(|(a, b, v)| (index[a], index[b], v))
        .collect();
    let stiffness = Csr::from_triplets(free.len(), &restricted);
    let mass = free.iter().map(|&v| lumped[v]).collect();
    Ok(Operators { bc, free, stiffness, mass, lumped_mass: lumped, n_vertices: n })
}

/// Relative residual tolerance for every returned eigenpair.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Lowest `k` eigenpairs of `K e = λ² M e`.
///
/// Each eigenfunction is scaled so its first vertex value above
/// `1e-12·max|e|` is positive. Residuals are checked against
/// `RESIDUAL_TOL·max(‖Ke‖, 1e-3‖K‖∞‖e‖)`; the floor only matters near `λ = 0`.
pub fn solve_eigensystem(ops: &Operators, k: usize) -> Result<EigenSystem> {
    let n = ops.free.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("K = {k} must be in 1..={n} (free vertices)")));
    }
    let inv_sqrt: Vec<f64> = ops.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for (j, v) in ops.stiffness.row(i) {
            c[j * n + i] = v * inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let (mu, z) = symmetric_lowest(&mut c, n, k)?;
    drop(c);
    let k_norm = ops.stiffness.norm_inf();
    let mut frequencies = Vec::with_capacity(k);
    let mut fields = Vec::with_capacity(k);
    for j in 0..k {
        let lam2 = mu[j];
        if lam2 < -1e-10 * k_norm / ops.mass.iter().cloned().fold(f64::INFINITY, f64::min) {
            return Err(Error::Eigensolver(format!("eigenvalue {j} is negative ({lam2:e})")));
        }
        let lam2 = lam2.max(0.0);
        let mut e: Vec<f64> = (0..n).map(|i| z[j * n + i] * inv_sqrt[i]).collect();
        let ke = ops.stiffness.mul_vec(&e);
        let res: f64 = (0..n).map(|i| (ke[i] - lam2 * ops.mass[i] * e[i]).powi(2)).sum::<f64>().sqrt();
        let ke_norm: f64 = ke.iter().map(|x| x * x).sum::<f64>().sqrt();
        let e_norm: f64 = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = ke_norm.max(1e-3 * k_norm * e_norm);
        if !(res <= RESIDUAL_TOL * scale) {
            return Err(Error::Eigensolver(format!(
                "mode {j}: residual {res:.3e} exceeds {:.3e}",
                RESIDUAL_TOL * scale
            )));
        }
        normalize_sign(&mut e);
        let mut full = vec![0.0; ops.n_vertices];
        for (i, &v) in ops.free.iter().enumerate() {
            full[v] = e[i];
        }
        frequencies.push(lam2.sqrt());
        fields.push(full);
    }
    Ok(EigenSystem { frequencies, fields, weights: ops.lumped_mass.clone(), bc: ops.bc })
}

/// Flips `e` so that its first significant entry is positive.
pub fn normalize_sign(e: &mut [f64]) {
    let max = e.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = e.iter().find(|x| x.abs() > 1e-12 * max) {
        if *first < 0.0 {
            e.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Merge tolerance for frequencies split by discretization.
pub fn merge_tolerance(lambda: f64) -> f64 {
    (1e-6 * lambda).max(1e-8)
}

/// Builds the local Weyl table `E_j(x) = Σ_cluster e(x)²`.
///
/// Consecutive frequencies closer than [`merge_tolerance`] form one jump,
/// placed at the cluster mean.
pub fn synthesize_local_weyl(eig: &EigenSystem) -> LocalWeylTable {
    let mut freqs = Vec::new();
    let mut fields: Vec<Vec<f64>> = Vec::new();
    let mut j = 0;
    let k = eig.frequencies.len();
    while j < k {
        let mut end = j + 1;
        while end < k && eig.frequencies[end] - eig.frequencies[end - 1] < merge_tolerance(eig.frequencies[end]) {
            end += 1;
        }
        let mut e = vec![0.0; eig.weights.len()];
        for field in &eig.fields[j..end] {
            for (acc, v) in e.iter_mut().zip(field) {
                *acc += v * v;
            }
        }
        let mean = if end - j == 1 {
            eig.frequencies[j]
        } else {
            eig.frequencies[j..end].iter().sum::<f64>() / (end - j) as f64
        };
        freqs.push(mean);
        fields.push(e);
        j = end;
    }
    LocalWeylTable { jump_frequencies: freqs, jump_fields: fields, weights: eig.weights.clone(), bc: eig.bc }
}

impl LocalWeylTable {
    /// `N(x, λ) = Σ_{λ_j ≤ λ} E_j(x)` at vertex `x`.
    pub fn local_count(&self, x: usize, lambda: f64) -> f64 {
        self.jump_frequencies.iter().zip(&self.jump_fields).take_while(|(f, _)| **f <= lambda).map(|(_, e)| e[x]).sum()
    }

    /// Weight-integrated counting function `N(λ)`.
    pub fn global_count(&self, lambda: f64) -> f64 {
        self.jump_frequencies
            .iter()
            .zip(&self.jump_fields)
            .take_while(|(f, _)| **f <= lambda)
            .map(|(_, e)| weighted_sum(e, &self.weights))
            .sum()
    }

    /// `Σ_x E_j(x) w(x)` for jump `j`.
    pub fn jump_integral(&self, j: usize) -> f64 {
        weighted_sum(&self.jump_fields[j], &self.weights)
    }
}

pub(crate) fn weighted_sum(f: &[f64], w: &[f64]) -> f64 {
    f.iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Assembles and solves in one call.
pub fn forward_solve(mesh: &Mesh, metric: &MetricField, bc: BoundaryCondition, k: usize) -> Result<EigenSystem> {
    let ops = assemble_operators(mesh, metric, bc)?;
    solve_eigensystem(&ops, k)
}
