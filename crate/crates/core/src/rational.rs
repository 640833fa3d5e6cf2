//! Exact rationals, extended values with −∞, parsing and canonical formatting.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

pub type Rational = num_rational::BigRational;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot parse `{0}` as an exact rational")]
pub struct ParseRationalError(pub String);

/// Integer-valued rational.
pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `n/d`; panics on `d == 0`.
pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Parses `"3"`, `"-1.25"`, `"7/4"`, `"1e-2"` exactly.
pub fn parse_rational(text: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError(text.to_string());
    let s = text.trim();
    if s.is_empty() {
        return Err(err());
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| err())?;
        let d: BigInt = d.trim().parse().map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(n, d));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(at) => {
            let e: i32 = s[at + 1..].parse().map_err(|_| err())?;
            (&s[..at], e)
        }
        None => (s, 0),
    };
    let (neg, body) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(err());
    }
    if !whole
        .chars()
        .chain(frac.chars())
        .all(|c| c.is_ascii_digit())
    {
        return Err(err());
    }
    let digits = format!("{whole}{frac}");
    let numer: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().map_err(|_| err())?
    };
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    let mut value = Rational::from_integer(numer);
    if scale >= 0 {
        value *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if neg { -value } else { value })
}

/// Exact decimal when the denominator is 2^a 5^b, `num/den` otherwise.
pub fn format_rational(q: &Rational) -> String {
    if q.is_integer() {
        return q.numer().to_string();
    }
    let mut den = q.denom().clone();
    let (mut twos, mut fives) = (0u32, 0u32);
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    while den.is_even() {
        den /= &two;
        twos += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        fives += 1;
    }
    if !den.is_one() {
        return format!("{}/{}", q.numer(), q.denom());
    }
    let places = twos.max(fives) as usize;
    let scaled = q * Rational::from_integer(num_traits::pow(BigInt::from(10), places));
    let digits = scaled.to_integer().abs().to_string();
    let padded = format!("{digits:0>width$}", width = places + 1);
    let (whole, frac) = padded.split_at(padded.len() - places);
    let sign = if q.is_negative() { "-" } else { "" };
    format!("{sign}{whole}.{frac}")
}

/// Largest integer ≤ q.
pub fn floor(q: &Rational) -> Rational {
    q.floor()
}

/// Smallest integer ≥ q.
pub fn ceil(q: &Rational) -> Rational {
    q.ceil()
}

/// Whether `q ∈ step·ℤ`.
pub fn on_lattice(q: &Rational, step: &Rational) -> bool {
    (q / step).is_integer()
}

/// Lower rational approximation of √q with denominator 2^bits.
pub fn sqrt_floor(q: &Rational, bits: u32) -> Rational {
    assert!(!q.is_negative(), "square root of a negative rational");
    let scale = BigInt::one() << (2 * bits as usize);
    let scaled = (q * Rational::from_integer(scale)).floor().to_integer();
    let root = scaled.sqrt();
    Rational::new(root, BigInt::one() << bits as usize)
}

/// Rational or −∞. The derived order puts `NegInf` below every finite value.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ExtValue {
    NegInf,
    Finite(Rational),
}

impl ExtValue {
    pub fn zero() -> Self {
        ExtValue::Finite(Rational::zero())
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtValue::Finite(_))
    }

    pub fn finite(&self) -> Option<&Rational> {
        match self {
            ExtValue::Finite(q) => Some(q),
            ExtValue::NegInf => None,
        }
    }

    pub fn sub_rational(&self, q: &Rational) -> ExtValue {
        match self {
            ExtValue::Finite(a) => ExtValue::Finite(a - q),
            ExtValue::NegInf => ExtValue::NegInf,
        }
    }

    pub fn add_rational(&self, q: &Rational) -> ExtValue {
        match self {
            ExtValue::Finite(a) => ExtValue::Finite(a + q),
            ExtValue::NegInf => ExtValue::NegInf,
        }
    }
}

impl From<Rational> for ExtValue {
    fn from(q: Rational) -> Self {
        ExtValue::Finite(q)
    }
}

impl PartialOrd for ExtValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtValue::NegInf, ExtValue::NegInf) => Ordering::Equal,
            (ExtValue::NegInf, _) => Ordering::Less,
            (_, ExtValue::NegInf) => Ordering::Greater,
            (ExtValue::Finite(a), ExtValue::Finite(b)) => a.cmp(b),
        }
    }
}

impl Add for &ExtValue {
    type Output = ExtValue;
    fn add(self, rhs: &ExtValue) -> ExtValue {
        match (self, rhs) {
            (ExtValue::Finite(a), ExtValue::Finite(b)) => ExtValue::Finite(a + b),
            _ => ExtValue::NegInf,
        }
    }
}

impl Sub<&Rational> for &ExtValue {
    type Output = ExtValue;
    fn sub(self, rhs: &Rational) -> ExtValue {
        self.sub_rational(rhs)
    }
}

impl fmt::Display for ExtValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtValue::NegInf => f.write_str("neg_inf"),
            ExtValue::Finite(q) => f.write_str(&format_rational(q)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimal_fraction_and_exponent_forms() {
        assert_eq!(parse_rational("11.5").unwrap(), ratio(23, 2));
        assert_eq!(parse_rational("-0.25").unwrap(), ratio(-1, 4));
        assert_eq!(parse_rational("7/4").unwrap(), ratio(7, 4));
        assert_eq!(parse_rational("1e-2").unwrap(), ratio(1, 100));
        assert_eq!(parse_rational("+3").unwrap(), int(3));
        assert_eq!(parse_rational(".5").unwrap(), ratio(1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("").is_err());
        assert!(parse_rational("-").is_err());
    }

    #[test]
    fn formats_terminating_as_decimal() {
        assert_eq!(format_rational(&ratio(3, 2)), "1.5");
        assert_eq!(format_rational(&ratio(-1, 4)), "-0.25");
        assert_eq!(format_rational(&ratio(1, 20)), "0.05");
        assert_eq!(format_rational(&ratio(-3, 1)), "-3");
        assert_eq!(format_rational(&ratio(1, 3)), "1/3");
        assert_eq!(format_rational(&ratio(-7, 6)), "-7/6");
        assert_eq!(format_rational(&Rational::zero()), "0");
    }

    #[test]
    fn format_parse_round_trip() {
        for (n, d) in [(1, 3), (22, 7), (-5, 8), (123, 1000), (0, 1), (-9, 40)] {
            let q = ratio(n, d);
            assert_eq!(parse_rational(&format_rational(&q)).unwrap(), q);
        }
    }

    #[test]
    fn neg_inf_absorbs_and_orders_low() {
        let a = ExtValue::Finite(int(5));
        let b = ExtValue::NegInf;
        assert_eq!(&a + &b, ExtValue::NegInf);
        assert!(b < ExtValue::Finite(int(-1000)));
        assert_eq!(b.sub_rational(&int(3)), ExtValue::NegInf);
        assert_eq!(a.sub_rational(&int(3)), ExtValue::Finite(int(2)));
    }

    #[test]
    fn lattice_and_sqrt() {
        assert!(on_lattice(&ratio(3, 2), &ratio(1, 2)));
        assert!(!on_lattice(&ratio(3, 4), &ratio(1, 2)));
        let r = sqrt_floor(&int(2), 16);
        assert!(&r * &r <= int(2));
        let up = &r + ratio(1, 1 << 16);
        assert!(&up * &up > int(2));
        assert_eq!(sqrt_floor(&int(9), 4), int(3));
    }
}
