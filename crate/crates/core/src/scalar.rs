//! Field abstraction shared by the exact (rational) and float code paths.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact rationals.
pub type Q = BigRational;

pub fn q(num: i64, den: i64) -> Q {
    Q::new(BigInt::from(num), BigInt::from(den))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// Parse `"a/b"` or `"a"`.
pub fn parse_q(s: &str) -> Option<Q> {
    let s = s.trim();
    match s.split_once('/') {
        Some((a, b)) => {
            let a: BigInt = a.trim().parse().ok()?;
            let b: BigInt = b.trim().parse().ok()?;
            if b.is_zero() {
                return None;
            }
            Some(Q::new(a, b))
        }
        None => s.parse::<BigInt>().ok().map(Q::from_integer),
    }
}

pub fn q_to_f64(x: &Q) -> f64 {
    match (x.numer().to_f64(), x.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            // Shift both parts down until they fit in a double.
            let bits = x.numer().bits().max(x.denom().bits()) as i64 - 900;
            let (n, d) = if bits > 0 {
                (x.numer() >> bits as usize, x.denom() >> bits as usize)
            } else {
                (x.numer().clone(), x.denom().clone())
            };
            n.to_f64().unwrap_or(0.0) / d.to_f64().unwrap_or(1.0)
        }
    }
}

/// A field in which the diagram, harmonic and covariance computations run.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Send
    + Sync
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    const EXACT: bool;

    fn from_q(x: &Q) -> Self;
    fn from_i64(x: i64) -> Self;
    /// Float input is only accepted by the float field.
    fn from_f64(x: f64) -> Option<Self>;
    fn to_f64(&self) -> f64;

    /// Pivot quality; larger is better, zero means unusable.
    fn pivot_score(&self) -> f64;

    /// Equality up to the representation's accuracy.
    fn approx_eq(&self, other: &Self) -> bool;

    /// Rationals become `"n/d"` strings, floats become numbers.
    fn to_json(&self) -> serde_json::Value;
}

impl Scalar for Q {
    const EXACT: bool = true;

    fn from_q(x: &Q) -> Self {
        x.clone()
    }
    fn from_i64(x: i64) -> Self {
        qi(x)
    }
    fn from_f64(_: f64) -> Option<Self> {
        None
    }
    fn to_f64(&self) -> f64 {
        q_to_f64(self)
    }
    fn pivot_score(&self) -> f64 {
        // Any nonzero pivot is exact; prefer it regardless of size.
        if self.is_zero() {
            0.0
        } else {
            1.0
        }
    }
    fn approx_eq(&self, other: &Self) -> bool {
        self == other
    }
    fn to_json(&self) -> serde_json::Value {
        serde_json::Value::String(format_q(self))
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_q(x: &Q) -> Self {
        q_to_f64(x)
    }
    fn from_i64(x: i64) -> Self {
        x as f64
    }
    fn from_f64(x: f64) -> Option<Self> {
        Some(x)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn pivot_score(&self) -> f64 {
        if self.abs() < 1e-14 {
            0.0
        } else {
            self.abs()
        }
    }
    fn approx_eq(&self, other: &Self) -> bool {
        (self - other).abs() <= 1e-12 * (1.0 + self.abs().max(other.abs()))
    }
    fn to_json(&self) -> serde_json::Value {
        serde_json::Number::from_f64(*self).map_or(serde_json::Value::Null, serde_json::Value::Number)
    }
}

pub fn abs_q(x: &Q) -> Q {
    x.abs()
}

pub fn format_q(x: &Q) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}
