//! Exact rational scalars.
//!
//! Every coordinate, distance, dual weight and path cost is a [`Scalar`]. Values
//! live in a 128-bit rational while they fit and are promoted to an
//! arbitrary-precision rational on overflow, so results never round.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::iter::Sum;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, One, Signed, ToPrimitive, Zero};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

type Small = Ratio<i128>;

#[derive(Clone)]
enum Repr {
    Small(Small),
    Big(BigRational),
}

/// An exact rational number, always in lowest terms with a positive denominator.
#[derive(Clone)]
pub struct Scalar(Repr);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseScalarError {
    #[error("empty rational literal")]
    Empty,
    #[error("invalid rational literal {0:?}")]
    Invalid(String),
    #[error("zero denominator in {0:?}")]
    ZeroDenominator(String),
}

impl Scalar {
    pub fn zero() -> Self {
        Scalar(Repr::Small(Small::zero()))
    }

    pub fn one() -> Self {
        Scalar(Repr::Small(Small::one()))
    }

    pub fn from_integer(v: i64) -> Self {
        Scalar(Repr::Small(Small::from_integer(v as i128)))
    }

    /// `numer / denom`; panics if `denom` is zero.
    pub fn new(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "zero denominator");
        Scalar(Repr::Small(Small::new(numer as i128, denom as i128)))
    }

    /// The dyadic rational `numer / 2^shift`.
    pub fn dyadic(numer: i64, shift: u32) -> Self {
        assert!(shift < 120);
        Scalar(Repr::Small(Small::new(numer as i128, 1i128 << shift)))
    }

    pub fn from_big(v: BigRational) -> Self {
        Self::shrink(v)
    }

    pub fn to_big(&self) -> BigRational {
        match &self.0 {
            Repr::Small(s) => BigRational::new_raw(BigInt::from(*s.numer()), BigInt::from(*s.denom())),
            Repr::Big(b) => b.clone(),
        }
    }

    fn from_small(s: Small) -> Self {
        // i128::MIN has no negation; keep it out of the fast path.
        if *s.numer() == i128::MIN {
            Scalar(Repr::Big(BigRational::new_raw(BigInt::from(*s.numer()), BigInt::from(*s.denom()))))
        } else {
            Scalar(Repr::Small(s))
        }
    }

    fn shrink(b: BigRational) -> Self {
        match (b.numer().to_i128(), b.denom().to_i128()) {
            (Some(n), Some(d)) if n != i128::MIN => Scalar(Repr::Small(Small::new_raw(n, d))),
            _ => Scalar(Repr::Big(b)),
        }
    }

    fn binop(
        &self,
        other: &Scalar,
        small: impl Fn(&Small, &Small) -> Option<Small>,
        big: impl Fn(BigRational, BigRational) -> BigRational,
    ) -> Scalar {
        if let (Repr::Small(a), Repr::Small(b)) = (&self.0, &other.0) {
            if let Some(v) = small(a, b) {
                return Scalar::from_small(v);
            }
        }
        Scalar::shrink(big(self.to_big(), other.to_big()))
    }

    pub fn is_zero(&self) -> bool {
        match &self.0 {
            Repr::Small(s) => s.is_zero(),
            Repr::Big(b) => b.is_zero(),
        }
    }

    pub fn is_negative(&self) -> bool {
        match &self.0 {
            Repr::Small(s) => s.is_negative(),
            Repr::Big(b) => b.is_negative(),
        }
    }

    pub fn is_positive(&self) -> bool {
        match &self.0 {
            Repr::Small(s) => s.is_positive(),
            Repr::Big(b) => b.is_positive(),
        }
    }

    pub fn is_integer(&self) -> bool {
        match &self.0 {
            Repr::Small(s) => s.is_integer(),
            Repr::Big(b) => b.is_integer(),
        }
    }

    pub fn abs(&self) -> Scalar {
        if self.is_negative() {
            -self
        } else {
            self.clone()
        }
    }

    /// `|self - other|`
    pub fn abs_diff(&self, other: &Scalar) -> Scalar {
        (self - other).abs()
    }

    pub fn min_of(a: &Scalar, b: &Scalar) -> Scalar {
        if a <= b { a.clone() } else { b.clone() }
    }

    pub fn max_of(a: &Scalar, b: &Scalar) -> Scalar {
        if a >= b { a.clone() } else { b.clone() }
    }

    pub fn recip(&self) -> Scalar {
        assert!(!self.is_zero(), "reciprocal of zero");
        Scalar::one() / self
    }

    pub fn numer_string(&self) -> String {
        match &self.0 {
            Repr::Small(s) => s.numer().to_string(),
            Repr::Big(b) => b.numer().to_string(),
        }
    }

    pub fn denom_string(&self) -> String {
        match &self.0 {
            Repr::Small(s) => s.denom().to_string(),
            Repr::Big(b) => b.denom().to_string(),
        }
    }

    pub fn to_f64(&self) -> f64 {
        match &self.0 {
            Repr::Small(s) => {
                let (n, d) = (*s.numer(), *s.denom());
                if n.unsigned_abs() < (1u128 << 53) && d < (1i128 << 53) {
                    n as f64 / d as f64
                } else {
                    self.to_big().to_f64().unwrap_or(f64::NAN)
                }
            }
            Repr::Big(b) => b.to_f64().unwrap_or(f64::NAN),
        }
    }

    /// `self^e` by repeated squaring.
    pub fn pow(&self, mut e: u32) -> Scalar {
        let mut base = self.clone();
        let mut acc = Scalar::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// Natural logarithm as an `f64` estimate; stays finite for values far outside
    /// the `f64` range. Panics on non-positive input.
    pub fn ln_estimate(&self) -> f64 {
        assert!(self.is_positive(), "logarithm of a non-positive value");
        let f = self.to_f64();
        if f.is_finite() && f > 0.0 && f.is_normal() {
            return f.ln();
        }
        let b = self.to_big();
        let shift = b.numer().bits() as i64 - b.denom().bits() as i64;
        let scaled = if shift >= 0 {
            BigRational::new(b.numer().clone(), b.denom() << (shift as u64))
        } else {
            BigRational::new(b.numer() << ((-shift) as u64), b.denom().clone())
        };
        scaled.to_f64().unwrap_or(1.0).ln() + shift as f64 * std::f64::consts::LN_2
    }

    /// Largest integer not exceeding the value.
    pub fn floor(&self) -> BigInt {
        let b = self.to_big();
        b.numer().div_floor(b.denom())
    }
}

impl Default for Scalar {
    fn default() -> Self {
        Scalar::zero()
    }
}

impl From<i64> for Scalar {
    fn from(v: i64) -> Self {
        Scalar::from_integer(v)
    }
}

impl From<i32> for Scalar {
    fn from(v: i32) -> Self {
        Scalar::from_integer(v as i64)
    }
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Self) -> bool {
        match (&self.0, &other.0) {
            (Repr::Small(a), Repr::Small(b)) => a == b,
            // Canonical: a value that fits is always Small.
            (Repr::Big(a), Repr::Big(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Scalar {}

impl Hash for Scalar {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.numer_string().hash(state);
        self.denom_string().hash(state);
    }
}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scalar {
    fn cmp(&self, other: &Self) -> Ordering {
        match (&self.0, &other.0) {
            (Repr::Small(a), Repr::Small(b)) => a.cmp(b),
            _ => self.to_big().cmp(&other.to_big()),
        }
    }
}

macro_rules! forward_binop {
    ($tr:ident, $method:ident, $checked:ident) => {
        impl<'a, 'b> $tr<&'b Scalar> for &'a Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &'b Scalar) -> Scalar {
                self.binop(rhs, |a, b| a.$checked(b), |a, b| $tr::$method(a, b))
            }
        }
        impl $tr<Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                $tr::$method(&self, &rhs)
            }
        }
        impl<'b> $tr<&'b Scalar> for Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &'b Scalar) -> Scalar {
                $tr::$method(&self, rhs)
            }
        }
        impl<'a> $tr<Scalar> for &'a Scalar {
            type Output = Scalar;
            fn $method(self, rhs: Scalar) -> Scalar {
                $tr::$method(self, &rhs)
            }
        }
    };
}

forward_binop!(Add, add, checked_add);
forward_binop!(Sub, sub, checked_sub);
forward_binop!(Mul, mul, checked_mul);

impl<'a, 'b> Div<&'b Scalar> for &'a Scalar {
    type Output = Scalar;
    fn div(self, rhs: &'b Scalar) -> Scalar {
        assert!(!rhs.is_zero(), "division by zero");
        self.binop(rhs, |a, b| a.checked_div(b), |a, b| a / b)
    }
}

impl Div<Scalar> for Scalar {
    type Output = Scalar;
    fn div(self, rhs: Scalar) -> Scalar {
        &self / &rhs
    }
}

impl<'b> Div<&'b Scalar> for Scalar {
    type Output = Scalar;
    fn div(self, rhs: &'b Scalar) -> Scalar {
        &self / rhs
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        match &self.0 {
            Repr::Small(s) => Scalar(Repr::Small(-s)),
            Repr::Big(b) => Scalar::shrink(-b),
        }
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        -&self
    }
}

impl Sum for Scalar {
    fn sum<I: Iterator<Item = Scalar>>(iter: I) -> Scalar {
        iter.fold(Scalar::zero(), |acc, x| &acc + &x)
    }
}

impl<'a> Sum<&'a Scalar> for Scalar {
    fn sum<I: Iterator<Item = &'a Scalar>>(iter: I) -> Scalar {
        iter.fold(Scalar::zero(), |acc, x| &acc + x)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Small(s) if s.is_integer() => write!(f, "{}", s.numer()),
            Repr::Small(s) => write!(f, "{}/{}", s.numer(), s.denom()),
            Repr::Big(b) if b.is_integer() => write!(f, "{}", b.numer()),
            Repr::Big(b) => write!(f, "{}/{}", b.numer(), b.denom()),
        }
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Scalar {
    type Err = ParseScalarError;

    /// Accepts decimal integers (`"-12"`) and fractions (`"3/4"`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(ParseScalarError::Empty);
        }
        let parse_int = |part: &str| -> Result<BigInt, ParseScalarError> {
            let part = part.trim();
            let digits = part.strip_prefix(['-', '+']).unwrap_or(part);
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return Err(ParseScalarError::Invalid(s.to_string()));
            }
            part.parse::<BigInt>().map_err(|_| ParseScalarError::Invalid(s.to_string()))
        };
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (parse_int(n)?, parse_int(d)?),
            None => (parse_int(s)?, BigInt::one()),
        };
        if d.is_zero() {
            return Err(ParseScalarError::ZeroDenominator(s.to_string()));
        }
        Ok(Scalar::shrink(BigRational::new(n, d)))
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct Visitor;
        impl de::Visitor<'_> for Visitor {
            type Value = Scalar;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an integer or a \"p/q\" rational string")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Scalar, E> {
                v.parse().map_err(E::custom)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Scalar, E> {
                Ok(Scalar::from_integer(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Scalar, E> {
                Ok(Scalar::shrink(BigRational::from_integer(BigInt::from(v))))
            }
        }
        deserializer.deserialize_any(Visitor)
    }
}
