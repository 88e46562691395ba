//! Exact rational exponents, adaptive Simpson quadrature and the classical
//! RK4 step used by every closed-loop run.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("invalid exponent {num}/{den}: {reason}")]
    InvalidExponent { num: i64, den: i64, reason: &'static str },
    #[error("0 raised to non-positive power {0}")]
    ZeroToNonPositive(RationalExponent),
    #[error("exponent recurrence produced {exponent} at index {index}: {reason}")]
    BadSequence {
        index: usize,
        exponent: String,
        reason: &'static str,
    },
    #[error("invalid quadrature settings: {0}")]
    InvalidQuadrature(&'static str),
    #[error("adaptive quadrature did not converge on [{lo}, {hi}] within depth {max_depth}")]
    QuadratureDiverged { lo: f64, hi: f64, max_depth: u32 },
    #[error("non-finite derivative during integration at t = {t}")]
    NonFinite { t: f64 },
    #[error("step size must be positive, got {0}")]
    BadStep(f64),
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// A reduced rational exponent `num/den` with odd positive denominator.
///
/// The numerator parity decides how negative bases are handled: an odd
/// numerator keeps the sign (`x^p = sign(x)|x|^p`), an even numerator
/// gives `|x|^p`. Odd-over-odd exponents are the ones that may appear as
/// controller powers; use [`RationalExponent::odd`] to enforce that.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct RationalExponent {
    num: i64,
    den: i64,
}

impl RationalExponent {
    pub fn new(num: i64, den: i64) -> Result<Self, NumericsError> {
        if den == 0 {
            return Err(NumericsError::InvalidExponent {
                num,
                den,
                reason: "zero denominator",
            });
        }
        let sign = if den < 0 { -1 } else { 1 };
        let g = gcd(num, den).max(1);
        let (n, d) = (sign * num / g, sign * den / g);
        if d % 2 == 0 {
            return Err(NumericsError::InvalidExponent {
                num,
                den,
                reason: "denominator must be odd",
            });
        }
        Ok(Self { num: n, den: d })
    }

    /// Ratio of two odd integers.
    pub fn odd(num: i64, den: i64) -> Result<Self, NumericsError> {
        let p = Self::new(num, den)?;
        if p.num % 2 == 0 {
            return Err(NumericsError::InvalidExponent {
                num,
                den,
                reason: "numerator must be odd",
            });
        }
        Ok(p)
    }

    pub const fn one() -> Self {
        Self { num: 1, den: 1 }
    }

    pub fn num(&self) -> i64 {
        self.num
    }

    pub fn den(&self) -> i64 {
        self.den
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_odd_ratio(&self) -> bool {
        self.num % 2 != 0
    }

    pub fn recip(&self) -> Result<Self, NumericsError> {
        Self::new(self.den, self.num)
    }

    pub fn add(&self, other: &Self) -> Result<Self, NumericsError> {
        Self::new(self.num * other.den + other.num * self.den, self.den * other.den)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, NumericsError> {
        Self::new(self.num * other.den - other.num * self.den, self.den * other.den)
    }

    pub fn mul_int(&self, k: i64) -> Result<Self, NumericsError> {
        Self::new(self.num * k, self.den)
    }
}

impl fmt::Debug for RationalExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl fmt::Display for RationalExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl std::str::FromStr for RationalExponent {
    type Err = NumericsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = NumericsError::InvalidExponent {
            num: 0,
            den: 0,
            reason: "expected `num/den` or an integer",
        };
        let s = s.trim();
        match s.split_once('/') {
            Some((n, d)) => {
                let n: i64 = n.trim().parse().map_err(|_| bad.clone())?;
                let d: i64 = d.trim().parse().map_err(|_| bad)?;
                Self::new(n, d)
            }
            None => Self::new(s.parse().map_err(|_| bad)?, 1),
        }
    }
}

/// Magnitudes below this are treated as exact zero by [`frac_pow`].
pub const ZERO_FLOOR: f64 = 1e-300;

/// `x^p` under the parity convention of [`RationalExponent`].
pub fn frac_pow(x: f64, p: RationalExponent) -> Result<f64, NumericsError> {
    let ax = x.abs();
    if ax < ZERO_FLOOR {
        if p.num <= 0 {
            return Err(NumericsError::ZeroToNonPositive(p));
        }
        return Ok(0.0);
    }
    let mag = (p.value() * ax.ln()).exp();
    if x < 0.0 && p.is_odd_ratio() {
        Ok(-mag)
    } else {
        Ok(mag)
    }
}

/// `q_1 = 1`, `q_{i+1} = alpha - 1 + q_i`; returns `q_1 ..= q_{n+1}`.
pub fn q_sequence(alpha: RationalExponent, n: usize) -> Result<Vec<RationalExponent>, NumericsError> {
    if !alpha.is_odd_ratio() {
        return Err(NumericsError::InvalidExponent {
            num: alpha.num,
            den: alpha.den,
            reason: "alpha must be a ratio of odd integers",
        });
    }
    let a = alpha.value();
    if !(a > 0.5 && a < 1.0) {
        return Err(NumericsError::InvalidExponent {
            num: alpha.num,
            den: alpha.den,
            reason: "alpha must lie in (1/2, 1)",
        });
    }
    if n == 0 {
        return Err(NumericsError::BadSequence {
            index: 0,
            exponent: String::new(),
            reason: "need at least one channel",
        });
    }
    let step = alpha.sub(&RationalExponent::one())?;
    let mut out = Vec::with_capacity(n + 1);
    let mut q = RationalExponent::one();
    out.push(q);
    for index in 2..=n + 1 {
        q = q.add(&step)?;
        if q.num <= 0 {
            return Err(NumericsError::BadSequence {
                index,
                exponent: q.to_string(),
                reason: "exponent is not positive",
            });
        }
        if !q.is_odd_ratio() {
            return Err(NumericsError::BadSequence {
                index,
                exponent: q.to_string(),
                reason: "exponent is not a ratio of odd integers",
            });
        }
        out.push(q);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_depth: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_depth: 40,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<(), NumericsError> {
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return Err(NumericsError::InvalidQuadrature("rel_tol must be > 0"));
        }
        if self.abs_tol.is_nan() || self.abs_tol <= 0.0 {
            return Err(NumericsError::InvalidQuadrature("abs_tol must be > 0"));
        }
        if self.max_depth < 1 {
            return Err(NumericsError::InvalidQuadrature("max_depth must be >= 1"));
        }
        Ok(())
    }
}

struct Simpson<'a, F> {
    f: &'a mut F,
    max_depth: u32,
    failed: Option<(f64, f64)>,
}

impl<F: FnMut(f64) -> f64> Simpson<'_, F> {
    #[allow(clippy::too_many_arguments)]
    fn refine(&mut self, a: f64, fa: f64, b: f64, fb: f64, m: f64, fm: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = (self.f)(lm);
        let frm = (self.f)(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let both = left + right;
        let diff = both - whole;
        // Roundoff floor: below this the difference carries no information.
        let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
        if diff.abs() <= 15.0 * tol.max(floor) || lm <= a || rm >= b {
            return both + diff / 15.0;
        }
        if depth >= self.max_depth {
            if self.failed.is_none() {
                self.failed = Some((a, b));
            }
            return both + diff / 15.0;
        }
        self.refine(a, fa, m, fm, lm, flm, left, 0.5 * tol, depth + 1)
            + self.refine(m, fm, b, fb, rm, frm, right, 0.5 * tol, depth + 1)
    }
}

/// Adaptive Simpson quadrature of `f` over `[lo, hi]`.
///
/// Swapping the limits negates the result exactly.
pub fn adaptive_quad<F>(mut f: F, lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    spec.validate()?;
    if lo == hi {
        return Ok(0.0);
    }
    if lo > hi {
        return adaptive_quad(f, hi, lo, spec).map(|v| -v);
    }
    let fa = f(lo);
    let fb = f(hi);
    let m = 0.5 * (lo + hi);
    let fm = f(m);
    let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    // The relative target uses a coarse 5-point estimate so that it does not
    // depend on the refinement path.
    let coarse = {
        let q1 = f(0.5 * (lo + m));
        let q3 = f(0.5 * (m + hi));
        (hi - lo) / 12.0 * (fa + 4.0 * q1 + 2.0 * fm + 4.0 * q3 + fb)
    };
    let tol = spec.abs_tol.max(spec.rel_tol * coarse.abs());
    let mut s = Simpson {
        f: &mut f,
        max_depth: spec.max_depth,
        failed: None,
    };
    let value = s.refine(lo, fa, hi, fb, m, fm, whole, tol, 1);
    if s.failed.is_some() || !value.is_finite() {
        return Err(NumericsError::QuadratureDiverged {
            lo,
            hi,
            max_depth: spec.max_depth,
        });
    }
    Ok(value)
}

fn axpy(y: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

fn check_finite(t: f64, v: &[f64]) -> Result<(), NumericsError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(NumericsError::NonFinite { t })
    }
}

/// Classical fourth-order Runge-Kutta step with a fallible right-hand side.
pub fn try_rk4_step<F, E>(mut f: F, t: f64, state: &[f64], dt: f64) -> Result<Vec<f64>, E>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
    E: From<NumericsError>,
{
    if dt.is_nan() || dt <= 0.0 {
        return Err(NumericsError::BadStep(dt).into());
    }
    let half = 0.5 * dt;
    let k1 = f(t, state)?;
    check_finite(t, &k1)?;
    let k2 = f(t + half, &axpy(state, half, &k1))?;
    check_finite(t + half, &k2)?;
    let k3 = f(t + half, &axpy(state, half, &k2))?;
    check_finite(t + half, &k3)?;
    let k4 = f(t + dt, &axpy(state, dt, &k3))?;
    check_finite(t + dt, &k4)?;
    let next: Vec<f64> = state
        .iter()
        .enumerate()
        .map(|(i, y)| y + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    check_finite(t + dt, &next)?;
    Ok(next)
}

pub fn rk4_step<F>(mut f: F, t: f64, state: &[f64], dt: f64) -> Result<Vec<f64>, NumericsError>
where
    F: FnMut(f64, &[f64]) -> Vec<f64>,
{
    try_rk4_step(|t, y| Ok::<_, NumericsError>(f(t, y)), t, state, dt)
}
