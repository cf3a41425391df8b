//! Lattice points below a norm bound, norm spectra and counting functions.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ToriError};
use crate::form::{format_rational, parse_rational_str, rational_to_f64, LatticeForm};

/// Enumeration refuses bounds expected to produce more points than this.
pub const MAX_POINTS: f64 = 1e8;

/// One distinct norm and its multiplicity.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct NormEntry {
    pub norm: BigRational,
    pub multiplicity: u64,
}

/// Distinct values `vᵀAv ≤ B` over `v ∈ Zᵈ`, ascending, with multiplicities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NormSpectrum {
    pub bound: BigRational,
    pub entries: Vec<NormEntry>,
}

#[derive(Serialize, Deserialize)]
struct EntryRepr {
    norm: String,
    value: f64,
    multiplicity: u64,
}

#[derive(Serialize, Deserialize)]
struct SpectrumRepr {
    bound: String,
    points: u64,
    entries: Vec<EntryRepr>,
}

impl Serialize for NormSpectrum {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SpectrumRepr {
            bound: format_rational(&self.bound),
            points: self.total_points(),
            entries: self
                .entries
                .iter()
                .map(|e| EntryRepr {
                    norm: format_rational(&e.norm),
                    value: rational_to_f64(&e.norm),
                    multiplicity: e.multiplicity,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for NormSpectrum {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<NormSpectrum, D::Error> {
        use serde::de::Error;
        let r = SpectrumRepr::deserialize(d)?;
        let bound = parse_rational_str(&r.bound).map_err(D::Error::custom)?;
        let entries = r
            .entries
            .iter()
            .map(|e| Ok(NormEntry { norm: parse_rational_str(&e.norm)?, multiplicity: e.multiplicity }))
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        Ok(NormSpectrum { bound, entries })
    }
}

impl NormSpectrum {
    pub fn total_points(&self) -> u64 {
        self.entries.iter().map(|e| e.multiplicity).sum()
    }

    /// Eigenfrequencies `2π√r` with multiplicities.
    pub fn frequencies(&self) -> Vec<(f64, u64)> {
        self.entries.iter().map(|e| (2.0 * PI * rational_to_f64(&e.norm).sqrt(), e.multiplicity)).collect()
    }

    /// Keeps entries with norm `≤ bound`.
    pub fn truncated(&self, bound: &BigRational) -> NormSpectrum {
        NormSpectrum {
            bound: bound.clone().min(self.bound.clone()),
            entries: self.entries.iter().filter(|e| &e.norm <= bound).cloned().collect(),
        }
    }
}

/// Volume of the unit ball in `d` dimensions.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * PI / d as f64,
    }
}

fn bound_ratio(bound: &BigRational) -> Result<(i128, i128)> {
    if !bound.is_positive() {
        return Err(ToriError::Parse("bound must be positive".into()));
    }
    let n = bound.numer().to_i128().ok_or_else(|| ToriError::Overflow("bound numerator".into()))?;
    let d = bound.denom().to_i128().ok_or_else(|| ToriError::Overflow("bound denominator".into()))?;
    Ok((n, d))
}

fn scaled_value(p: &[Vec<i128>], v: &[i64]) -> Result<i128> {
    let d = v.len();
    let mut s: i128 = 0;
    for i in 0..d {
        let mut row: i128 = 0;
        for j in 0..d {
            row = p[i][j]
                .checked_mul(v[j] as i128)
                .and_then(|t| row.checked_add(t))
                .ok_or_else(|| ToriError::Overflow("lattice norm".into()))?;
        }
        s = row
            .checked_mul(v[i] as i128)
            .and_then(|t| s.checked_add(t))
            .ok_or_else(|| ToriError::Overflow("lattice norm".into()))?;
    }
    Ok(s)
}

/// Expected number of points `ω_d B^{d/2}/√det A`.
pub fn volume_estimate(form: &LatticeForm, bound: &BigRational) -> f64 {
    let d = form.dim();
    unit_ball_volume(d) * rational_to_f64(bound).powf(d as f64 / 2.0) / rational_to_f64(&form.determinant()).sqrt()
}

/// Every `v ∈ Zᵈ` with `vᵀAv ≤ B`, with the exact value `vᵀAv`.
///
/// Fincke–Pohst descent on the floating `LDLᵀ` of `A` with the radius padded by
/// `1e-9`; every candidate is then checked in exact integer arithmetic.
pub fn enumerate_vectors(form: &LatticeForm, bound: &BigRational) -> Result<Vec<(Vec<i64>, BigRational)>> {
    let estimate = volume_estimate(form, bound);
    if estimate > MAX_POINTS {
        return Err(ToriError::BoundTooLarge { estimate });
    }
    let (bn, bd) = bound_ratio(bound)?;
    let (scale, p) = form.integer_scaled()?;
    let limit = scale.checked_mul(bn).ok_or_else(|| ToriError::Overflow("scaled bound".into()))?;
    let d = form.dim();
    let a = form.to_f64();
    // Q(x) = Σ_i q_ii (x_i + Σ_{j>i} q_ij x_j)².
    let mut q = vec![vec![0.0; d]; d];
    for i in 0..d {
        let mut s = a[i][i];
        for k in 0..i {
            s -= q[k][k] * q[k][i] * q[k][i];
        }
        q[i][i] = s;
        for j in i + 1..d {
            let mut t = a[i][j];
            for k in 0..i {
                t -= q[k][k] * q[k][i] * q[k][j];
            }
            q[i][j] = t / s;
        }
    }
    let radius = rational_to_f64(bound) * (1.0 + 1e-9) + 1e-9;
    let mut out = Vec::new();
    let mut x = vec![0i64; d];
    let mut err = None;
    descend(&q, d, radius, &mut x, &mut |v: &[i64]| {
        if err.is_some() {
            return;
        }
        match scaled_value(&p, v) {
            Ok(s) => {
                if s.checked_mul(bd).is_some_and(|t| t <= limit) {
                    out.push((v.to_vec(), BigRational::new(BigInt::from(s), BigInt::from(scale))));
                }
            }
            Err(e) => err = Some(e),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn descend(q: &[Vec<f64>], level: usize, remaining: f64, x: &mut [i64], visit: &mut dyn FnMut(&[i64])) {
    if level == 0 {
        visit(x);
        return;
    }
    let i = level - 1;
    let d = x.len();
    let c: f64 = -(i + 1..d).map(|j| q[i][j] * x[j] as f64).sum::<f64>();
    let half = (remaining.max(0.0) / q[i][i]).sqrt();
    let lo = (c - half - 1e-9).ceil() as i64;
    let hi = (c + half + 1e-9).floor() as i64;
    for xi in lo..=hi {
        x[i] = xi;
        let t = xi as f64 - c;
        let rest = remaining - q[i][i] * t * t;
        if rest >= -1e-9 * (1.0 + remaining.abs()) {
            descend(q, i, rest, x, visit);
        }
    }
    x[i] = 0;
}

fn collect(values: impl Iterator<Item = BigRational>, bound: &BigRational) -> NormSpectrum {
    let mut map: BTreeMap<BigRational, u64> = BTreeMap::new();
    for v in values {
        *map.entry(v).or_default() += 1;
    }
    NormSpectrum {
        bound: bound.clone(),
        entries: map.into_iter().map(|(norm, multiplicity)| NormEntry { norm, multiplicity }).collect(),
    }
}

/// Norm spectrum by Fincke–Pohst enumeration.
pub fn enumerate_norms(form: &LatticeForm, bound: &BigRational) -> Result<NormSpectrum> {
    Ok(collect(enumerate_vectors(form, bound)?.into_iter().map(|(_, n)| n), bound))
}

/// Norm spectrum by brute force over the box `‖v‖∞ ≤ radius`.
///
/// With `radius = None` the box is `|v_i| ≤ ⌊√(B·(A⁻¹)_ii)⌋ + 1`, which contains
/// the whole ellipsoid.
pub fn enumerate_norms_box(form: &LatticeForm, bound: &BigRational, radius: Option<i64>) -> Result<NormSpectrum> {
    let d = form.dim();
    let inv = form.inverse()?;
    let radii: Vec<i64> = (0..d)
        .map(|i| match radius {
            Some(r) => r,
            None => (rational_to_f64(bound) * rational_to_f64(inv.entry(i, i))).sqrt().floor() as i64 + 1,
        })
        .collect();
    let total: f64 = radii.iter().map(|&r| (2 * r + 1) as f64).product();
    if total > MAX_POINTS {
        return Err(ToriError::BoundTooLarge { estimate: total });
    }
    let mut values = Vec::new();
    let mut v: Vec<i64> = radii.iter().map(|r| -r).collect();
    loop {
        let n = form.value(&v);
        if &n <= bound {
            values.push(n);
        }
        let mut k = 0;
        loop {
            if k == d {
                return Ok(collect(values.into_iter(), bound));
            }
            if v[k] < radii[k] {
                v[k] += 1;
                break;
            }
            v[k] = -radii[k];
            k += 1;
        }
    }
}

fn check_lambda(spec: &NormSpectrum, lambda: f64) -> Result<f64> {
    let max = 2.0 * PI * rational_to_f64(&spec.bound).sqrt();
    if !(lambda >= 0.0) || lambda > max * (1.0 + 1e-12) {
        return Err(ToriError::OutOfRange { lambda, max });
    }
    Ok((lambda / (2.0 * PI)).powi(2))
}

/// `N(λ) = Σ m_k` over `2π√r_k ≤ λ`. Norms within a relative `1e-12` of
/// `(λ/2π)²` count as included.
pub fn counting_function(spec: &NormSpectrum, lambda: f64) -> Result<u64> {
    let s = check_lambda(spec, lambda)?;
    Ok(spec.entries.iter().take_while(|e| rational_to_f64(&e.norm) <= s * (1.0 + 1e-12)).map(|e| e.multiplicity).sum())
}

/// Exact count of lattice points with norm `≤ r`.
pub fn counting_function_norm(spec: &NormSpectrum, r: &BigRational) -> u64 {
    spec.entries.iter().take_while(|e| &e.norm <= r).map(|e| e.multiplicity).sum()
}

/// `Vol(Rᵈ/Λ) = √det A` for the torus with Gram matrix `A`.
pub fn torus_volume(torus: &LatticeForm) -> f64 {
    rational_to_f64(&torus.determinant()).sqrt()
}

/// `N(x, λ) = N(λ)/Vol`, the same at every point of the torus.
///
/// `spec` is the norm spectrum of the dual form of `torus`.
pub fn local_weyl_torus(torus: &LatticeForm, spec: &NormSpectrum, lambda: f64) -> Result<f64> {
    Ok(counting_function(spec, lambda)? as f64 / torus_volume(torus))
}

/// `N(λ) / (ω_d (λ/2π)^d Vol)`, which tends to 1.
pub fn weyl_ratio(torus: &LatticeForm, spec: &NormSpectrum, lambda: f64) -> Result<f64> {
    let n = counting_function(spec, lambda)? as f64;
    let d = torus.dim();
    Ok(n / (unit_ball_volume(d) * (lambda / (2.0 * PI)).powi(d as i32) * torus_volume(torus)))
}

/// Spectrum of the flat torus `Rᵈ/Λ` with Gram matrix `torus` up to frequency `2π√B`.
pub fn torus_spectrum(torus: &LatticeForm, bound: &BigRational) -> Result<NormSpectrum> {
    enumerate_norms(&crate::form::dual_form(torus)?, bound)
}

/// True when both spectra hold the same entries up to the smaller bound.
pub fn same_spectrum(a: &NormSpectrum, b: &NormSpectrum) -> bool {
    let bound = a.bound.clone().min(b.bound.clone());
    a.truncated(&bound).entries == b.truncated(&bound).entries
}

/// Integer helper for tests and callers: `B` from an integer.
pub fn bound(b: i64) -> BigRational {
    BigRational::from_integer(b.into())
}

/// First index where two spectra differ, if any.
pub fn first_difference(a: &NormSpectrum, b: &NormSpectrum) -> Option<usize> {
    let n = a.entries.len().max(b.entries.len());
    (0..n).find(|&i| a.entries.get(i) != b.entries.get(i))
}
