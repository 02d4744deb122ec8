//! Exact rational arithmetic helpers.
//!
//! Every time, size, weight and load in the crate is a [`Rational`]. Event
//! ordering depends on solving linear equations for crossing times, so the
//! simulator never touches floating point.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

pub type Rational = num_rational::BigRational;

/// Builds `num/den`. Panics on a zero denominator.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `2^k` for any signed `k`.
pub fn pow2(k: i64) -> Rational {
    let mag = BigInt::one() << k.unsigned_abs();
    if k >= 0 {
        Rational::from_integer(mag)
    } else {
        Rational::new(BigInt::one(), mag)
    }
}

/// `⌊log2 x⌋` computed exactly, for `x > 0`.
pub fn floor_log2(x: &Rational) -> Result<i64> {
    if !x.is_positive() {
        return Err(Error::InvalidArgument(format!(
            "log2 of non-positive value {}",
            fmt(x)
        )));
    }
    let nb = x.numer().bits() as i64;
    let db = x.denom().bits() as i64;
    // 2^(nb-1) <= n < 2^nb and 2^(db-1) <= d < 2^db, so the answer is nb-db or nb-db-1.
    let k = nb - db;
    if &pow2(k) <= x {
        Ok(k)
    } else {
        Ok(k - 1)
    }
}

/// `⌈log2 x⌉` for `x > 0`.
pub fn ceil_log2(x: &Rational) -> Result<i64> {
    let k = floor_log2(x)?;
    Ok(if pow2(k) == *x { k } else { k + 1 })
}

pub fn is_pow2(x: &Rational) -> bool {
    floor_log2(x).map(|k| pow2(k) == *x).unwrap_or(false)
}

pub fn ceil(x: &Rational) -> BigInt {
    x.ceil().to_integer()
}

pub fn floor(x: &Rational) -> BigInt {
    x.floor().to_integer()
}

/// Formats as `num/den`, always with an explicit denominator.
pub fn fmt(x: &Rational) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

/// Parses `num/den`, a bare integer, or a finite decimal like `0.25`.
pub fn parse(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational: {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let neg = whole.starts_with('-');
        let whole: BigInt = if whole.is_empty() || whole == "-" {
            BigInt::zero()
        } else {
            whole.parse().map_err(|_| bad())?
        };
        let scale = num_traits::pow(BigInt::from(10), frac.len());
        let f: BigInt = frac.parse().map_err(|_| bad())?;
        let mag = Rational::new(whole.abs() * &scale + f, scale);
        return Ok(if neg { -mag } else { mag });
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(n))
}

/// Lossy conversion for human-facing summaries only.
pub fn to_f64(x: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap_or(f64::NAN)
}

/// `x mod m` for a positive integer modulus, always in `[0, m)`.
pub fn rem_euclid(x: i64, m: i64) -> i64 {
    x.mod_floor(&m)
}
