//! Exact rational helpers. Every closed-form quantity in the crate is a
//! [`Rational`]; floats appear only in the channel simulator.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serializer;

pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: u64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn big(n: u128) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Parses `"a/b"`, `"a"` or a finite decimal such as `"2.5"` exactly.
pub fn parse(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Rational::new(n, d));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        let negative = whole.starts_with('-');
        let digits = format!("{}{}", whole.trim_start_matches('-'), frac);
        let n: BigInt = digits.parse().ok()?;
        let d = num_traits::pow(BigInt::from(10), frac.len());
        let v = Rational::new(n, d);
        return Some(if negative { -v } else { v });
    }
    s.parse::<BigInt>().ok().map(Rational::from_integer)
}

pub fn floor_u64(x: &Rational) -> u64 {
    x.floor().to_integer().to_u64().unwrap_or(0)
}

pub fn ceil_u64(x: &Rational) -> u64 {
    x.ceil().to_integer().to_u64().unwrap_or(0)
}

pub fn is_integer(x: &Rational) -> bool {
    x.denom().is_one()
}

pub fn as_u64(x: &Rational) -> Option<u64> {
    if is_integer(x) && !x.is_negative() {
        x.numer().to_u64()
    } else {
        None
    }
}

/// `floor((a - sqrt(m)) / d)` for `d > 0`, `m >= 0`, exactly.
pub fn floor_sub_sqrt_div(a: i128, m: u128, d: i128) -> i128 {
    assert!(d > 0, "divisor must be positive");
    let root = m.isqrt() as i128;
    // (a - root) / d brackets the answer from above.
    let mut k = Integer::div_floor(&(a - root), &d) + 1;
    loop {
        let rem = a - k * d;
        if rem >= 0 && (rem as u128) * (rem as u128) >= m {
            return k;
        }
        k -= 1;
    }
}

pub(crate) fn serialize<S: Serializer>(x: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

pub(crate) fn serialize_opt<S: Serializer>(x: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_some(&v.to_string()),
        None => s.serialize_none(),
    }
}

pub(crate) fn serialize_vec<S: Serializer>(xs: &[Rational], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(|x| x.to_string()))
}

pub(crate) fn serialize_table<S: Serializer>(xs: &[Vec<Rational>], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(
        xs.iter()
            .map(|row| row.iter().map(|x| x.to_string()).collect::<Vec<_>>()),
    )
}
