//! Inverse metric at interior points from the recovered spectral Laplacian.
//!
//! The probe `f_v = e^{λ v·(x−x₀)} φ(x)` has `Δf_v(x₀) = λ² g^{ij}v_iv_j + O(λ)`.
//! `A(λ) = λ⁻²Δf_v(x₀)` is sampled on a grid of `λ` and the limit is read off
//! a fit in `1/λ`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// `Δ = −Σ_j λ_j² ⟨·, ẽ_j⟩_w ẽ_j` on the first `K` recovered modes.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralLaplacian {
    pub frequencies: Vec<f64>,
    pub fields: Vec<Vec<f64>>,
    /// Recovered volume weights `μ·w̃`.
    pub weights: Vec<f64>,
}

impl SpectralLaplacian {
    pub fn new(frequencies: &[f64], fields: &[Vec<f64>], weights: &[f64], k: usize) -> Result<SpectralLaplacian> {
        if k == 0 || k > frequencies.len() || k > fields.len() {
            return Err(Error::InvalidArgument(format!("K = {k} exceeds the {} recovered modes", fields.len())));
        }
        if fields[..k].iter().any(|f| f.len() != weights.len()) {
            return Err(Error::DimensionMismatch("eigenfunctions and weights disagree in length".into()));
        }
        Ok(SpectralLaplacian {
            frequencies: frequencies[..k].to_vec(),
            fields: fields[..k].to_vec(),
            weights: weights.to_vec(),
        })
    }

    pub fn k(&self) -> usize {
        self.fields.len()
    }

    fn coefficient(&self, f: &[f64], j: usize) -> f64 {
        self.fields[j].iter().zip(f).zip(&self.weights).map(|((e, f), w)| e * f * w).sum()
    }

    /// `(Δf)(x)` at one vertex, each mode scaled by `window[j]`.
    pub fn value_at(&self, f: &[f64], x: usize, window: Option<&[f64]>) -> f64 {
        let mut s = 0.0;
        for j in 0..self.k() {
            let chi = window.map_or(1.0, |w| w[j]);
            if chi == 0.0 {
                continue;
            }
            let l = self.frequencies[j];
            s -= chi * l * l * self.coefficient(f, j) * self.fields[j][x];
        }
        s
    }
}

/// `Δf = −Σ_j λ_j² ⟨f, ẽ_j⟩_w ẽ_j`.
pub fn apply_spectral_laplacian(lap: &SpectralLaplacian, f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    for j in 0..lap.k() {
        let l = lap.frequencies[j];
        let c = l * l * lap.coefficient(f, j);
        for (o, e) in out.iter_mut().zip(&lap.fields[j]) {
            *o -= c * e;
        }
    }
    out
}

/// Quintic smoothstep on `[0, 1]`, clamped outside.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// Radial bump: `1` for `s ≤ r/2`, `0` for `s ≥ r`.
pub fn bump(s: f64, r: f64) -> f64 {
    1.0 - smoothstep((s / r - 0.5) * 2.0)
}

/// Mode taper `χ(λ_j/λ_K) = 1 − smoothstep((t − t₀)/(1 − t₀))`.
pub fn spectral_window(frequencies: &[f64], t0: f64) -> Vec<f64> {
    let top = frequencies.last().copied().unwrap_or(1.0);
    frequencies.iter().map(|&l| 1.0 - smoothstep((l / top - t0) / (1.0 - t0))).collect()
}

/// Probe parameters at one interior point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Chart coordinates; snapped to the nearest vertex.
    pub x0: Vec<f64>,
    /// Bump support radius.
    pub r: f64,
    /// Ascending probe scales.
    pub lambdas: Vec<f64>,
    #[serde(default = "default_fit_tol")]
    pub fit_tol: f64,
    /// Start `t₀` of the optional spectral taper.
    #[serde(default)]
    pub window: Option<f64>,
}

fn default_fit_tol() -> f64 {
    0.1
}

impl ProbeConfig {
    /// `r = 0.95·dist(x₀, ∂M)` (a quarter of the shortest period on a torus) and
    /// three scales from `λr = 4` to `min(6/r, 0.5/h)`.
    pub fn auto(mesh: &Mesh, x0: &[f64]) -> Result<ProbeConfig> {
        let r = match mesh.period() {
            Some(p) => 0.25 * p.iter().cloned().fold(f64::INFINITY, f64::min),
            None => 0.95 * mesh.distance_to_boundary(x0),
        };
        if !(r > 0.0) {
            return Err(Error::InvalidArgument(format!("probe point {x0:?} is not interior")));
        }
        let h = mesh.max_edge_length();
        let lo = 4.0 / r;
        let hi = (6.0 / r).min(0.5 / h);
        if hi < lo {
            return Err(Error::ResolutionTooCoarse(format!(
                "λr ≥ 4 needs λ ≥ {lo:.3}, λh ≤ 0.5 needs λ ≤ {:.3}",
                0.5 / h
            )));
        }
        Ok(ProbeConfig {
            x0: x0.to_vec(),
            r,
            lambdas: vec![lo, 0.5 * (lo + hi), hi],
            fit_tol: default_fit_tol(),
            window: None,
        })
    }

    /// Checks support, grid length, ordering and the two resolution bounds.
    pub fn validate(&self, mesh: &Mesh) -> Result<usize> {
        if self.x0.len() != mesh.dimension() {
            return Err(Error::DimensionMismatch(format!("x0 has {} coordinates", self.x0.len())));
        }
        if !(self.r > 0.0) || self.r > mesh.distance_to_boundary(&self.x0) {
            return Err(Error::InvalidArgument(format!(
                "bump radius {} does not fit inside the chart at {:?}",
                self.r, self.x0
            )));
        }
        if let Some(p) = mesh.period() {
            if p.iter().any(|&p| self.r >= 0.5 * p) {
                return Err(Error::InvalidArgument("bump radius must be below half a period".into()));
            }
        }
        if self.lambdas.len() < 3 {
            return Err(Error::InvalidArgument("lambda grid needs at least 3 values".into()));
        }
        if self.lambdas.windows(2).any(|w| !(w[1] > w[0])) || !(self.lambdas[0] > 0.0) {
            return Err(Error::InvalidArgument("lambda grid must be positive and strictly ascending".into()));
        }
        if let Some(t0) = self.window {
            if !(0.0..1.0).contains(&t0) {
                return Err(Error::InvalidArgument(format!("window start {t0} outside [0, 1)")));
            }
        }
        let h = mesh.max_edge_length();
        let top = self.lambdas[self.lambdas.len() - 1];
        if top * h > 0.5 + 1e-12 {
            return Err(Error::ResolutionTooCoarse(format!("λh = {:.3} exceeds 0.5", top * h)));
        }
        if self.lambdas[0] * self.r < 4.0 - 1e-12 {
            return Err(Error::ResolutionTooCoarse(format!("λr = {:.3} is below 4", self.lambdas[0] * self.r)));
        }
        Ok(mesh.nearest_vertex(&self.x0))
    }
}

/// Fit diagnostics for one direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeFit {
    pub direction: Vec<f64>,
    pub q: f64,
    pub c1: f64,
    pub c2: f64,
    pub residual: f64,
    /// `A(λ)` for `+v` and `−v`, per grid value.
    pub samples_plus: Vec<f64>,
    pub samples_minus: Vec<f64>,
}

fn probe_samples(lap: &SpectralLaplacian, mesh: &Mesh, cfg: &ProbeConfig, x0: usize, v: &[f64]) -> Vec<f64> {
    let window = cfg.window.map(|t0| spectral_window(&lap.frequencies, t0));
    let disp: Vec<[f64; 2]> = (0..mesh.n_vertices()).map(|x| mesh.displacement(x0, x)).collect();
    let mut out = Vec::with_capacity(cfg.lambdas.len());
    for &l in &cfg.lambdas {
        let f: Vec<f64> = disp
            .iter()
            .map(|d| {
                let s = (d[0] * d[0] + d[1] * d[1]).sqrt();
                let phi = bump(s, cfg.r);
                if phi == 0.0 {
                    return 0.0;
                }
                let dot: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
                (l * dot).exp() * phi
            })
            .collect();
        out.push(lap.value_at(&f, x0, window.as_deref()) / (l * l));
    }
    out
}

/// Least-squares fit of `A_{±v}(λ) = q ± c₁/λ + c₂/λ²` to both probe signs.
pub fn probe_quadratic_form_fit(
    lap: &SpectralLaplacian,
    mesh: &Mesh,
    cfg: &ProbeConfig,
    v: &[f64],
) -> Result<ProbeFit> {
    let x0 = cfg.validate(mesh)?;
    if v.len() != mesh.dimension() {
        return Err(Error::DimensionMismatch(format!("direction has {} components", v.len())));
    }
    let minus: Vec<f64> = v.iter().map(|c| -c).collect();
    let plus_samples = probe_samples(lap, mesh, cfg, x0, v);
    let minus_samples = probe_samples(lap, mesh, cfg, x0, &minus);
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    let mut rows = Vec::new();
    for (i, &l) in cfg.lambdas.iter().enumerate() {
        for (s, a) in [(1.0, plus_samples[i]), (-1.0, minus_samples[i])] {
            let row = Vector3::new(1.0, s / l, 1.0 / (l * l));
            ata += row * row.transpose();
            atb += row * a;
            rows.push((row, a));
        }
    }
    let coef =
        ata.cholesky().ok_or_else(|| Error::Numeric("probe fit normal equations are singular".into()))?.solve(&atb);
    let ss: f64 = rows.iter().map(|(row, a)| (row.dot(&coef) - a).powi(2)).sum();
    let residual = (ss / rows.len() as f64).sqrt();
    let q = coef[0];
    let tolerance = cfg.fit_tol * q.abs();
    if !(q > 0.0) || residual > tolerance {
        return Err(Error::UnreliableProbe { residual, tolerance, q });
    }
    Ok(ProbeFit {
        direction: v.to_vec(),
        q,
        c1: coef[1],
        c2: coef[2],
        residual,
        samples_plus: plus_samples,
        samples_minus: minus_samples,
    })
}

/// Extrapolated `q(v) = g^{ij}(x₀) v_i v_j`.
pub fn probe_quadratic_form(lap: &SpectralLaplacian, mesh: &Mesh, cfg: &ProbeConfig, v: &[f64]) -> Result<f64> {
    probe_quadratic_form_fit(lap, mesh, cfg, v).map(|f| f.q)
}

/// Metric at one probe point with the per-direction fits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricProbe {
    pub x0: Vec<f64>,
    pub vertex: usize,
    /// Row-major `g^{ij}`.
    pub inverse_metric: Vec<f64>,
    /// Row-major `g_{ij}`.
    pub metric: Vec<f64>,
    pub fits: Vec<ProbeFit>,
}

impl MetricProbe {
    pub fn metric_matrix(&self) -> DMatrix<f64> {
        let d = self.x0.len();
        DMatrix::from_row_slice(d, d, &self.metric)
    }
}

/// Polarisation over `e_i` and `(e_i + e_j)/√2`, then inversion.
pub fn recover_metric_at(lap: &SpectralLaplacian, mesh: &Mesh, cfg: &ProbeConfig) -> Result<MetricProbe> {
    let vertex = cfg.validate(mesh)?;
    let d = mesh.dimension();
    let unit = |i: usize| (0..d).map(|k| if k == i { 1.0 } else { 0.0 }).collect::<Vec<_>>();
    let mut fits = Vec::new();
    let mut diag = vec![0.0; d];
    for (i, q) in diag.iter_mut().enumerate() {
        let fit = probe_quadratic_form_fit(lap, mesh, cfg, &unit(i))?;
        *q = fit.q;
        fits.push(fit);
    }
    let mut ginv = DMatrix::from_diagonal(&DVector::from_vec(diag.clone()));
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        for j in i + 1..d {
            let v: Vec<f64> = (0..d).map(|k| if k == i || k == j { s } else { 0.0 }).collect();
            let fit = probe_quadratic_form_fit(lap, mesh, cfg, &v)?;
            let gij = (2.0 * fit.q - diag[i] - diag[j]) / 2.0;
            ginv[(i, j)] = gij;
            ginv[(j, i)] = gij;
            fits.push(fit);
        }
    }
    let spd = ginv.clone().cholesky().ok_or_else(|| {
        Error::RecoveryFailure(format!("recovered inverse metric at {:?} is not positive definite", cfg.x0))
    })?;
    let g = spd.inverse();
    let g = (&g + g.transpose()) * 0.5;
    Ok(MetricProbe {
        x0: mesh.vertex(vertex).to_vec(),
        vertex,
        inverse_metric: ginv.transpose().as_slice().to_vec(),
        metric: g.transpose().as_slice().to_vec(),
        fits,
    })
}
