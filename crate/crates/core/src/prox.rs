//! Scalar and matrix primitives: the Huber loss and its clipped derivative,
//! entrywise soft-thresholding, singular-value soft-thresholding, and the
//! scalar proximal map used by the `D` block of the ADMM solver.
//!
//! Every function here is pure.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Robustification parameter of the Huber loss.
///
/// `Infinite` is an explicit sentinel for the squared-error loss, so that the
/// squared-error limit is computed exactly rather than through a huge finite
/// threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TauRepr", into = "TauRepr")]
pub enum HuberParam {
    Finite(f64),
    Infinite,
}

impl HuberParam {
    pub fn new(tau: f64) -> Result<Self> {
        if tau == f64::INFINITY {
            Ok(HuberParam::Infinite)
        } else if tau.is_finite() && tau > 0.0 {
            Ok(HuberParam::Finite(tau))
        } else {
            Err(Error::InvalidParam(format!("tau must be positive, got {tau}")))
        }
    }

    /// Squared-error loss.
    pub const fn squared() -> Self {
        HuberParam::Infinite
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, HuberParam::Infinite)
    }

    /// The threshold as a float; `f64::INFINITY` for the sentinel.
    pub fn value(&self) -> f64 {
        match *self {
            HuberParam::Finite(t) => t,
            HuberParam::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for HuberParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HuberParam::Finite(t) => write!(f, "{t}"),
            HuberParam::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for HuberParam {
    type Err = Error;

    /// A positive number, or `inf` for squared-error loss.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(HuberParam::Infinite);
        }
        let t: f64 = s
            .parse()
            .map_err(|_| Error::InvalidParam(format!("cannot parse tau '{s}'")))?;
        HuberParam::new(t)
    }
}

// JSON has no infinity, so the sentinel travels as the string "inf".
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TauRepr {
    Num(f64),
    Text(String),
}

impl TryFrom<TauRepr> for HuberParam {
    type Error = String;

    fn try_from(r: TauRepr) -> std::result::Result<Self, String> {
        match r {
            TauRepr::Num(t) => HuberParam::new(t).map_err(|e| e.to_string()),
            TauRepr::Text(s) if s.eq_ignore_ascii_case("inf") => Ok(HuberParam::Infinite),
            TauRepr::Text(s) => Err(format!("unrecognised tau '{s}'")),
        }
    }
}

impl From<HuberParam> for TauRepr {
    fn from(h: HuberParam) -> Self {
        match h {
            HuberParam::Finite(t) => TauRepr::Num(t),
            HuberParam::Infinite => TauRepr::Text("inf".into()),
        }
    }
}

/// Rejects matrices holding NaN or infinite entries.
pub fn ensure_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Err(Error::NonFinite {
                    what: what.to_string(),
                    row: r,
                    col: c,
                });
            }
        }
    }
    Ok(())
}

/// Huber loss of a single residual.
#[inline]
pub fn huber_scalar(z: f64, tau: HuberParam) -> f64 {
    let a = z.abs();
    match tau {
        HuberParam::Finite(t) if a > t => t * a - 0.5 * t * t,
        _ => 0.5 * z * z,
    }
}

/// Sum of the Huber loss over every entry of `m`.
pub fn huber_matrix(m: &DMatrix<f64>, tau: HuberParam) -> f64 {
    m.iter().map(|&z| huber_scalar(z, tau)).sum()
}

#[inline]
pub(crate) fn clamp_residual(u: f64, t: f64) -> f64 {
    if u > t {
        t
    } else if u < -t {
        -t
    } else {
        u
    }
}

/// Derivative of the Huber loss, clamped to `[-tau, tau]`.
///
/// The squared-error limit has no clamp; callers handle it as the identity,
/// so an infinite `tau` is rejected here.
pub fn psi(u: f64, tau: HuberParam) -> Result<f64> {
    match tau {
        HuberParam::Finite(t) => Ok(clamp_residual(u, t)),
        HuberParam::Infinite => Err(Error::InvalidParam(
            "psi is undefined for infinite tau".into(),
        )),
    }
}

/// `sign(a) * max(|a| - b, 0)`.
#[inline]
pub fn soft_threshold(a: f64, b: f64) -> f64 {
    debug_assert!(b >= 0.0);
    if a > b {
        a - b
    } else if a < -b {
        a + b
    } else {
        0.0
    }
}

/// Singular-value soft-thresholding together with the shrunken spectrum.
#[derive(Debug, Clone)]
pub struct Svt {
    pub matrix: DMatrix<f64>,
    /// Shrunken singular values in descending order, zeros included.
    pub singular_values: DVector<f64>,
}

/// Shrinks every singular value of `m` by `b`, flooring at zero.
pub fn svd_soft_threshold(m: &DMatrix<f64>, b: f64) -> Result<DMatrix<f64>> {
    Ok(svt(m, b)?.matrix)
}

pub(crate) fn svt(m: &DMatrix<f64>, b: f64) -> Result<Svt> {
    if !(b >= 0.0) {
        return Err(Error::InvalidParam(format!("threshold must be >= 0, got {b}")));
    }
    ensure_finite(m, "svd_soft_threshold input")?;
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok(Svt {
            matrix: m.clone(),
            singular_values: DVector::zeros(0),
        });
    }
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 100_000)
        .ok_or(Error::Svd { rows, cols })?;
    let u = svd.u.as_ref().ok_or(Error::Svd { rows, cols })?;
    let v_t = svd.v_t.as_ref().ok_or(Error::Svd { rows, cols })?;

    let shrunk = svd.singular_values.map(|w| (w - b).max(0.0));
    let mut out = DMatrix::zeros(rows, cols);
    // Triples with a zero shrunken value are left out of the sum entirely.
    for j in 0..k {
        let s = shrunk[j];
        if s > 0.0 {
            out.ger(s, &u.column(j), &v_t.row(j).transpose(), 1.0);
        }
    }
    Ok(Svt {
        matrix: out,
        singular_values: shrunk,
    })
}

/// Minimiser over `d` of `(1/n) * huber(y - d) + (rho/2) * (d - c)^2`.
///
/// The small-residual branch wins ties at `|.| = tau`; both branches agree there.
#[inline]
pub fn prox_d_entry(y: f64, c: f64, tau: HuberParam, n: usize, rho: f64) -> f64 {
    let nr = n as f64 * rho;
    let quadratic = (y + nr * c) / (1.0 + nr);
    match tau {
        HuberParam::Infinite => quadratic,
        HuberParam::Finite(t) => {
            if (nr * (y - c) / (1.0 + nr)).abs() <= t {
                quadratic
            } else {
                y - soft_threshold(y - c, t / nr)
            }
        }
    }
}
