//! Exact rational helpers used wherever sampling points are rational and
//! fractional parts or set memberships must be decided without rounding.

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

pub type Rational = Ratio<i128>;

/// A numeric coefficient in a config file: either an exact fraction
/// `{"num": 1, "den": 3}` or a plain floating-point number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coef {
    Ratio { num: i64, den: u64 },
    Float(f64),
}

impl Coef {
    pub fn value(&self) -> f64 {
        match *self {
            Coef::Ratio { num, den } => num as f64 / den as f64,
            Coef::Float(v) => v,
        }
    }

    pub fn rational(&self) -> Option<Rational> {
        match *self {
            Coef::Ratio { num, den } if den > 0 => Some(Rational::new(num as i128, den as i128)),
            Coef::Ratio { .. } => None,
            Coef::Float(v) => rational_from_f64(v),
        }
    }

    pub fn frac(num: i64, den: u64) -> Self {
        Coef::Ratio { num, den }
    }
}

impl From<f64> for Coef {
    fn from(v: f64) -> Self {
        Coef::Float(v)
    }
}

/// Exact conversion of a finite double into a fraction with a power-of-two
/// denominator. Returns `None` when the denominator would exceed 2^100.
pub fn rational_from_f64(v: f64) -> Option<Rational> {
    if !v.is_finite() {
        return None;
    }
    if v == 0.0 {
        return Some(Rational::zero());
    }
    let bits = v.to_bits();
    let sign: i128 = if bits >> 63 == 0 { 1 } else { -1 };
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let mantissa = if exp == 0 {
        (bits & 0xf_ffff_ffff_ffff) << 1
    } else {
        (bits & 0xf_ffff_ffff_ffff) | 0x10_0000_0000_0000
    };
    // v = mantissa * 2^(exp - 1075), reduced by the trailing zero bits
    let tz = mantissa.trailing_zeros() as i32;
    let m = (mantissa >> tz) as i128 * sign;
    let e = exp - 1075 + tz;
    if e >= 0 {
        if e > 60 {
            return None;
        }
        Some(Rational::from_integer(m << e))
    } else if -e > 100 {
        None
    } else {
        Some(Rational::new(m, 1i128 << -e))
    }
}

/// Fractional part in [0, 1).
pub fn frac(q: &Rational) -> Rational {
    q - q.floor()
}

/// Fractional part of `x * mult` for a non-negative integer multiplier.
pub fn frac_scaled(x: &Rational, mult: i128) -> Rational {
    frac(&(x * Rational::from_integer(mult)))
}

pub fn to_f64(q: &Rational) -> f64 {
    // numerator and denominator below 2^53 convert exactly and the quotient
    // is then correctly rounded
    *q.numer() as f64 / *q.denom() as f64
}

/// Whether `i * x - y` is an integer.
pub fn on_diagonal(i: i128, x: &Rational, y: &Rational) -> bool {
    (x * Rational::from_integer(i) - y).is_integer()
}

/// Integer power `base^exp` when it fits.
pub fn checked_pow(base: i128, exp: u32) -> Option<i128> {
    let mut acc: i128 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

pub fn midpoint(j: u64, count: u64) -> Rational {
    Rational::new(2 * j as i128 + 1, 2 * count as i128)
}

pub fn node(j: u64, count: u64) -> Rational {
    Rational::new(j as i128, count as i128)
}

pub fn is_unit_interval(q: &Rational) -> bool {
    *q >= Rational::zero() && *q < Rational::one()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_conversion_is_exact() {
        let q = rational_from_f64(0.375).unwrap();
        assert_eq!(q, Rational::new(3, 8));
        let q = rational_from_f64(0.1).unwrap();
        assert_eq!(to_f64(&q), 0.1);
        assert_eq!(rational_from_f64(-2.5).unwrap(), Rational::new(-5, 2));
        assert!(rational_from_f64(f64::NAN).is_none());
        assert!(rational_from_f64(1e-300).is_none());
    }

    #[test]
    fn fractional_parts() {
        let x = Rational::new(7, 10);
        assert_eq!(frac_scaled(&x, 3), Rational::new(1, 10));
        assert_eq!(frac(&Rational::new(-1, 4)), Rational::new(3, 4));
    }

    #[test]
    fn diagonal_membership() {
        let x = Rational::new(3, 10);
        let y = frac_scaled(&x, 2);
        assert!(on_diagonal(2, &x, &y));
        assert!(!on_diagonal(4, &x, &y));
    }

    #[test]
    fn coef_parsing() {
        let c: Coef = serde_json::from_str(r#"{"num": 1, "den": 3}"#).unwrap();
        assert_eq!(c.rational().unwrap(), Rational::new(1, 3));
        let c: Coef = serde_json::from_str("0.25").unwrap();
        assert_eq!(c.value(), 0.25);
    }
}
