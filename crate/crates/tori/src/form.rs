//! Exact rational Gram matrices.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Result, ToriError};

/// Parses `"p/q"`, `"p"`, a decimal string or a JSON number exactly.
pub fn parse_rational(v: &Value) -> Result<BigRational> {
    let text = match v {
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.trim().to_string(),
        other => return Err(ToriError::Parse(format!("expected a rational, found {other}"))),
    };
    parse_rational_str(&text)
}

pub fn parse_rational_str(text: &str) -> Result<BigRational> {
    let bad = || ToriError::Parse(format!("not a rational: {text:?}"));
    if let Some((p, q)) = text.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(p, q));
    }
    let (mantissa, exp) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], text[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (text, 0),
    };
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let digits = format!("{int}{frac}");
    let n: BigInt = digits.parse().map_err(|_| bad())?;
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    Ok(if scale >= 0 {
        BigRational::from_integer(n * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(n, num_traits::pow(ten, (-scale) as usize))
    })
}

/// `"p/q"` or `"p"`.
pub fn format_rational(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Symmetric positive-definite Gram matrix with exact entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeForm {
    gram: Vec<Vec<BigRational>>,
    pub provenance: Option<String>,
}

impl LatticeForm {
    /// Validates symmetry and positive definiteness exactly.
    pub fn new(gram: Vec<Vec<BigRational>>) -> Result<LatticeForm> {
        let d = gram.len();
        if d == 0 || gram.iter().any(|r| r.len() != d) {
            return Err(ToriError::DimensionMismatch(format!(
                "Gram matrix must be square and non-empty, got {d} rows"
            )));
        }
        for i in 0..d {
            for j in 0..i {
                if gram[i][j] != gram[j][i] {
                    return Err(ToriError::NotSymmetric);
                }
            }
        }
        let form = LatticeForm { gram, provenance: None };
        let pivots = form.ldl_pivots();
        if let Some((i, p)) = pivots.iter().enumerate().find(|(_, p)| !p.is_positive()) {
            return Err(ToriError::NotPositiveDefinite { pivot: i, value: format_rational(p) });
        }
        Ok(form)
    }

    pub fn from_integers(rows: &[Vec<i64>]) -> Result<LatticeForm> {
        LatticeForm::new(
            rows.iter().map(|r| r.iter().map(|&v| BigRational::from_integer(v.into())).collect()).collect(),
        )
    }

    pub fn with_provenance(mut self, note: &str) -> LatticeForm {
        self.provenance = Some(note.to_string());
        self
    }

    pub fn identity(d: usize) -> LatticeForm {
        let gram = (0..d)
            .map(|i| (0..d).map(|j| if i == j { BigRational::one() } else { BigRational::zero() }).collect())
            .collect();
        LatticeForm { gram, provenance: None }
    }

    /// Accepts a bare array of rows or `{"gram": rows, "provenance": …}`.
    pub fn from_json_value(v: &Value) -> Result<LatticeForm> {
        let (rows, provenance) = match v {
            Value::Array(_) => (v, None),
            Value::Object(m) => (
                m.get("gram").ok_or_else(|| ToriError::Parse("missing \"gram\"".into()))?,
                m.get("provenance").and_then(|p| p.as_str()).map(str::to_string),
            ),
            _ => return Err(ToriError::Parse("expected an array of rows or an object".into())),
        };
        let rows = rows.as_array().ok_or_else(|| ToriError::Parse("gram must be an array".into()))?;
        let mut gram = Vec::with_capacity(rows.len());
        for r in rows {
            let r = r.as_array().ok_or_else(|| ToriError::Parse("each row must be an array".into()))?;
            gram.push(r.iter().map(parse_rational).collect::<Result<Vec<_>>>()?);
        }
        let mut form = LatticeForm::new(gram)?;
        form.provenance = provenance;
        Ok(form)
    }

    pub fn from_json(text: &str) -> Result<LatticeForm> {
        LatticeForm::from_json_value(&serde_json::from_str(text)?)
    }

    pub fn dim(&self) -> usize {
        self.gram.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> &BigRational {
        &self.gram[i][j]
    }

    pub fn rows(&self) -> &[Vec<BigRational>] {
        &self.gram
    }

    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        self.gram.iter().map(|r| r.iter().map(rational_to_f64).collect()).collect()
    }

    /// Pivots of the exact `LDLᵀ` factorisation (stops at the first non-positive one).
    fn ldl_pivots(&self) -> Vec<BigRational> {
        let d = self.dim();
        let mut a = self.gram.clone();
        let mut pivots = Vec::with_capacity(d);
        for k in 0..d {
            let p = a[k][k].clone();
            pivots.push(p.clone());
            if !p.is_positive() {
                break;
            }
            for i in k + 1..d {
                let f = &a[i][k] / &p;
                for j in k + 1..d {
                    let t = &f * &a[k][j];
                    a[i][j] -= t;
                }
            }
        }
        pivots
    }

    /// Exact determinant.
    pub fn determinant(&self) -> BigRational {
        self.ldl_pivots().iter().fold(BigRational::one(), |acc, p| acc * p)
    }

    /// `A⁻¹` by exact Gauss–Jordan elimination.
    pub fn inverse(&self) -> Result<LatticeForm> {
        let d = self.dim();
        let mut a = self.gram.clone();
        let mut inv: Vec<Vec<BigRational>> = LatticeForm::identity(d).gram;
        for c in 0..d {
            let p = (c..d).find(|&r| !a[r][c].is_zero()).ok_or(ToriError::Singular)?;
            a.swap(c, p);
            inv.swap(c, p);
            let piv = a[c][c].clone();
            for j in 0..d {
                a[c][j] = &a[c][j] / &piv;
                inv[c][j] = &inv[c][j] / &piv;
            }
            for r in 0..d {
                if r != c && !a[r][c].is_zero() {
                    let f = a[r][c].clone();
                    for j in 0..d {
                        let t = &f * &a[c][j];
                        a[r][j] -= t;
                        let t = &f * &inv[c][j];
                        inv[r][j] -= t;
                    }
                }
            }
        }
        LatticeForm::new(inv)
    }

    /// `UᵀAU` for an integer matrix `U` (columns are the new basis).
    pub fn transform(&self, u: &[Vec<i64>]) -> Result<LatticeForm> {
        let d = self.dim();
        if u.len() != d || u.iter().any(|r| r.len() != d) {
            return Err(ToriError::DimensionMismatch(format!("U must be {d}x{d}")));
        }
        let ur: Vec<Vec<BigRational>> =
            u.iter().map(|r| r.iter().map(|&v| BigRational::from_integer(v.into())).collect()).collect();
        let mut au = vec![vec![BigRational::zero(); d]; d];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    au[i][j] += &self.gram[i][k] * &ur[k][j];
                }
            }
        }
        let mut out = vec![vec![BigRational::zero(); d]; d];
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    out[i][j] += &ur[k][i] * &au[k][j];
                }
            }
        }
        LatticeForm::new(out)
    }

    /// `vᵀAv`.
    pub fn value(&self, v: &[i64]) -> BigRational {
        let mut s = BigRational::zero();
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                s += &self.gram[i][j] * BigInt::from(v[i] * v[j]);
            }
        }
        s
    }

    /// `(D, P)` with `P = D·A` integral and `D` the lcm of the denominators.
    pub fn integer_scaled(&self) -> Result<(i128, Vec<Vec<i128>>)> {
        let mut lcm = BigInt::one();
        for r in &self.gram {
            for v in r {
                lcm = lcm.lcm(v.denom());
            }
        }
        let d = lcm.to_i128().ok_or_else(|| ToriError::Overflow("denominator lcm".into()))?;
        let p = self
            .gram
            .iter()
            .map(|r| {
                r.iter()
                    .map(|v| {
                        (v * BigRational::from_integer(lcm.clone()))
                            .to_integer()
                            .to_i128()
                            .ok_or_else(|| ToriError::Overflow("scaled Gram entry".into()))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((d, p))
    }
}

#[derive(Serialize, Deserialize)]
struct FormRepr {
    gram: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<String>,
}

impl Serialize for LatticeForm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FormRepr {
            gram: self.gram.iter().map(|r| r.iter().map(format_rational).collect()).collect(),
            provenance: self.provenance.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LatticeForm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<LatticeForm, D::Error> {
        let v = Value::deserialize(d)?;
        LatticeForm::from_json_value(&v).map_err(D::Error::custom)
    }
}

/// `A* = A⁻¹`.
pub fn dual_form(a: &LatticeForm) -> Result<LatticeForm> {
    a.inverse()
}
