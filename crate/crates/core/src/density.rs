//! Volume density `μ` with `dV_g = μ dV_g̃` from signed eigenfunctions.
//!
//! The recovered basis is orthonormalised under the reference weights through a
//! Cholesky factor of its Gram matrix. The expansion coefficients of the first
//! mode then give `μ̃ = e_1 μ`.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, invert_lower, symmetric_eigenvalues};
use crate::mesh::Mesh;

/// Gram matrices with a larger condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Division by `e_1` is skipped where `|e_1| ≤ E1_FLOOR·max|e_1|`.
pub const E1_FLOOR: f64 = 1e-3;

/// Outcome of step two.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityRecovery {
    pub reference_weights: Vec<f64>,
    /// Row-major `K×K` lower-triangular Gram–Schmidt coefficients.
    pub coefficients: Vec<f64>,
    pub mu_tilde: Vec<f64>,
    pub mu: Vec<f64>,
    /// Vertices where `μ = μ̃/e_1` was evaluated directly.
    pub kept: Vec<bool>,
    pub k: usize,
    /// Gram condition number, when the Gram matrix was built here.
    pub condition: Option<f64>,
}

impl DensityRecovery {
    /// Recovered weights `μ·w̃` of the unknown measure.
    pub fn volume_weights(&self) -> Vec<f64> {
        self.mu.iter().zip(&self.reference_weights).map(|(m, w)| m * w).collect()
    }
}

/// Uniform Euclidean lumped weights of the chart mesh.
pub fn euclidean_weights(mesh: &Mesh) -> Vec<f64> {
    let mut w = vec![0.0; mesh.n_vertices()];
    for (c, cell) in mesh.cells().iter().enumerate() {
        let share = mesh.cell_volume(c) / cell.len() as f64;
        for &v in cell {
            w[v] += share;
        }
    }
    w
}

fn basis_matrix(fields: &[Vec<f64>], k: usize) -> Result<DMatrix<f64>> {
    if k == 0 || k > fields.len() {
        return Err(Error::InvalidArgument(format!("K = {k} but {} modes are available", fields.len())));
    }
    let n = fields[0].len();
    if fields[..k].iter().any(|f| f.len() != n) {
        return Err(Error::DimensionMismatch("eigenfunctions have different lengths".into()));
    }
    Ok(DMatrix::from_fn(n, k, |x, j| fields[j][x]))
}

/// `G_ij = Σ_x ẽ_i ẽ_j w̃` and its 2-norm condition number.
pub fn gram_matrix_with_condition(fields: &[Vec<f64>], weights: &[f64], k: usize) -> Result<(DMatrix<f64>, f64)> {
    let e = basis_matrix(fields, k)?;
    if weights.len() != e.nrows() {
        return Err(Error::DimensionMismatch(format!("{} weights for {} vertices", weights.len(), e.nrows())));
    }
    if let Some(x) = weights.iter().position(|w| !(*w > 0.0)) {
        return Err(Error::InvalidArgument(format!("reference weight at vertex {x} is not positive")));
    }
    let mut we = e.clone();
    for (x, &w) in weights.iter().enumerate() {
        we.row_mut(x).scale_mut(w);
    }
    let g = e.tr_mul(&we);
    let g = (&g + g.transpose()) * 0.5;
    let eig = symmetric_eigenvalues(&g)?;
    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::TruncationTooDeep { condition });
    }
    Ok((g, condition))
}

/// Gram matrix of the first `k` fields under `weights`.
pub fn gram_matrix(fields: &[Vec<f64>], weights: &[f64], k: usize) -> Result<DMatrix<f64>> {
    gram_matrix_with_condition(fields, weights, k).map(|(g, _)| g)
}

/// Lower-triangular `a = L⁻¹` with `G = L Lᵀ`, so that `a G aᵀ = I`.
pub fn orthonormalize(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    invert_lower(&cholesky_lower(g)?)
}

/// `μ̃ = Σ_k a_{k1} φ_k` and `μ = μ̃/e_1`, extended from kept vertices by
/// breadth-first nearest-neighbour fill.
pub fn recover_density(
    a: &DMatrix<f64>,
    fields: &[Vec<f64>],
    weights: &[f64],
    e1: &[f64],
    mesh: &Mesh,
) -> Result<DensityRecovery> {
    let k = a.nrows();
    let e = basis_matrix(fields, k)?;
    let n = e.nrows();
    if e1.len() != n || weights.len() != n {
        return Err(Error::DimensionMismatch("e1, weights and fields disagree in length".into()));
    }
    // Σ_k a_{k1} φ_k = Σ_j (aᵀa)_{j1} ẽ_j.
    let c = a.tr_mul(&a.column(0).into_owned());
    let mu_tilde: Vec<f64> = (e * c).iter().copied().collect();

    let max = e1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Err(Error::DegenerateField);
    }
    let floor = E1_FLOOR * max;
    let kept: Vec<bool> = e1.iter().map(|v| v.abs() > floor).collect();
    let mut mu = vec![f64::NAN; n];
    for x in 0..n {
        if kept[x] {
            mu[x] = mu_tilde[x] / e1[x];
            if !(mu[x] > 0.0) {
                return Err(Error::RecoveryFailure(format!(
                    "μ = {:e} at vertex {x}; K may be too small or the signs wrong",
                    mu[x]
                )));
            }
        }
    }
    extend_from_kept(mesh, &kept, &mut mu);
    Ok(DensityRecovery {
        reference_weights: weights.to_vec(),
        coefficients: a.transpose().as_slice().to_vec(),
        mu_tilde,
        mu,
        kept,
        k,
        condition: None,
    })
}

/// Copies values outward from kept vertices; each vertex takes the value of the
/// lowest-index neighbour reached first.
fn extend_from_kept(mesh: &Mesh, kept: &[bool], values: &mut [f64]) {
    let adj = mesh.adjacency();
    let mut done = kept.to_vec();
    let mut queue: VecDeque<usize> = (0..kept.len()).filter(|&x| kept[x]).collect();
    while let Some(x) = queue.pop_front() {
        for &y in &adj[x] {
            if !done[y] {
                done[y] = true;
                values[y] = values[x];
                queue.push_back(y);
            }
        }
    }
}

/// Gram matrix, factorisation and density in one call. `e_1` is `fields[0]`.
pub fn recover_density_from_basis(
    fields: &[Vec<f64>],
    weights: &[f64],
    k: usize,
    mesh: &Mesh,
) -> Result<DensityRecovery> {
    let (g, condition) = gram_matrix_with_condition(fields, weights, k)?;
    let a = orthonormalize(&g)?;
    let mut rec = recover_density(&a, fields, weights, &fields[0], mesh)?;
    rec.condition = Some(condition);
    Ok(rec)
}
