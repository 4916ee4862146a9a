//! Fixed-point numbers embedded in the prime field.
//!
//! A rational `r` is stored as `round(gamma * r)` mapped into the field, with
//! negatives represented as `p - round(gamma * |r|)`. Addition is plain field
//! addition; multiplication multiplies the signed representatives and divides
//! by `gamma`, truncating toward zero.

use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::field::FieldElement;

/// Default fixed-point scale.
pub const DEFAULT_GAMMA: u64 = 100_000;

/// Default magnitude bound, in bits, that circuits enforce on data values and
/// on every rescaled product.
pub const DEFAULT_RANGE_BITS: u32 = 48;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FixedPointError {
    #[error("value {0} exceeds the fixed-point headroom")]
    Overflow(String),
    #[error("not a decimal number: {0:?}")]
    Parse(String),
    #[error("invalid scale configuration: {0}")]
    Config(String),
}

/// Scale and modulus shared by every fixed-point value of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ScaleConfigRepr", into = "ScaleConfigRepr")]
pub struct ScaleConfig {
    gamma: u64,
    range_bits: u32,
    field_modulus: BigUint,
    // p / (2 gamma), the exclusive bound on raw magnitudes
    headroom: BigUint,
}

#[derive(Serialize, Deserialize)]
struct ScaleConfigRepr {
    gamma: u64,
    range_bits: u32,
    field_modulus: String,
}

impl TryFrom<ScaleConfigRepr> for ScaleConfig {
    type Error = FixedPointError;

    fn try_from(r: ScaleConfigRepr) -> Result<Self, Self::Error> {
        let p = BigUint::parse_bytes(r.field_modulus.as_bytes(), 10)
            .ok_or_else(|| FixedPointError::Config(format!("bad modulus {:?}", r.field_modulus)))?;
        if &p != FieldElement::modulus() {
            return Err(FixedPointError::Config(
                "field_modulus does not match the proving backend's scalar field".into(),
            ));
        }
        ScaleConfig::new(r.gamma, r.range_bits)
    }
}

impl From<ScaleConfig> for ScaleConfigRepr {
    fn from(c: ScaleConfig) -> Self {
        ScaleConfigRepr {
            gamma: c.gamma,
            range_bits: c.range_bits,
            field_modulus: c.field_modulus.to_str_radix(10),
        }
    }
}

impl Default for ScaleConfig {
    fn default() -> Self {
        ScaleConfig::new(DEFAULT_GAMMA, DEFAULT_RANGE_BITS).expect("default scale is valid")
    }
}

impl ScaleConfig {
    /// Validates `gamma > 0` and the overflow headroom
    /// `p > 2 * gamma^2 * (2^range_bits)^2`.
    pub fn new(gamma: u64, range_bits: u32) -> Result<Self, FixedPointError> {
        if gamma == 0 {
            return Err(FixedPointError::Config("gamma must be positive".into()));
        }
        if range_bits == 0 {
            return Err(FixedPointError::Config("range_bits must be positive".into()));
        }
        let p = FieldElement::modulus().clone();
        let bound = BigUint::from(1u8) << (2 * range_bits as usize + 1);
        let needed = bound * BigUint::from(gamma) * BigUint::from(gamma);
        if needed >= p {
            return Err(FixedPointError::Config(format!(
                "headroom violated: 2*gamma^2*2^(2*{range_bits}) >= p"
            )));
        }
        let headroom = &p / (BigUint::from(gamma) * 2u32);
        Ok(ScaleConfig {
            gamma,
            range_bits,
            field_modulus: p,
            headroom,
        })
    }

    pub fn gamma(&self) -> u64 {
        self.gamma
    }

    pub fn range_bits(&self) -> u32 {
        self.range_bits
    }

    pub fn field_modulus(&self) -> &BigUint {
        &self.field_modulus
    }

    /// Bit width of the remainder range check, `ceil(log2(gamma))`.
    pub fn remainder_bits(&self) -> u32 {
        64 - (self.gamma - 1).leading_zeros()
    }

    fn check_raw(&self, raw: &BigInt) -> Result<(), FixedPointError> {
        if raw.magnitude() >= &self.headroom {
            Err(FixedPointError::Overflow(raw.to_string()))
        } else {
            Ok(())
        }
    }

    /// Whether a raw value lies inside the circuit range `|raw| < 2^range_bits`.
    pub fn in_circuit_range(&self, v: FixedPoint) -> bool {
        match v.raw_i128() {
            Some(r) => r.unsigned_abs() < 1u128 << self.range_bits,
            None => false,
        }
    }
}

/// A gamma-scaled signed rational stored as a field element.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FixedPoint {
    repr: FieldElement,
}

impl fmt::Debug for FixedPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.raw_i128() {
            Some(r) => write!(f, "Fx({r})"),
            None => write!(f, "Fx({:?})", self.repr),
        }
    }
}

impl FixedPoint {
    pub const ZERO: FixedPoint = FixedPoint {
        repr: FieldElement::ZERO,
    };

    pub fn from_repr(repr: FieldElement) -> Self {
        FixedPoint { repr }
    }

    pub fn repr(&self) -> FieldElement {
        self.repr
    }

    /// Builds a value from its raw scaled integer `k` (the value is `k / gamma`).
    pub fn from_raw(raw: i128) -> Self {
        FixedPoint {
            repr: FieldElement::from_i128(raw),
        }
    }

    pub fn from_raw_bigint(raw: &BigInt, cfg: &ScaleConfig) -> Result<Self, FixedPointError> {
        cfg.check_raw(raw)?;
        Ok(FixedPoint {
            repr: FieldElement::from_bigint(raw),
        })
    }

    /// The signed raw integer `k` such that the value is `k / gamma`.
    pub fn raw(&self) -> BigInt {
        self.repr.to_signed()
    }

    pub fn raw_i128(&self) -> Option<i128> {
        self.repr.to_i128()
    }

    /// Encodes an exact rational, rounding half away from zero.
    pub fn encode(r: &BigRational, cfg: &ScaleConfig) -> Result<Self, FixedPointError> {
        let scaled = r * BigRational::from_integer(BigInt::from(cfg.gamma));
        let raw = round_half_away(&scaled);
        Self::from_raw_bigint(&raw, cfg)
    }

    /// Encodes a float through its exact binary value.
    pub fn from_f64(v: f64, cfg: &ScaleConfig) -> Result<Self, FixedPointError> {
        let r = BigRational::from_float(v).ok_or_else(|| FixedPointError::Overflow(v.to_string()))?;
        Self::encode(&r, cfg)
    }

    /// Encodes a decimal literal such as `"-0.125"` or `"3e-2"` exactly.
    pub fn from_decimal_str(s: &str, cfg: &ScaleConfig) -> Result<Self, FixedPointError> {
        Self::encode(&parse_decimal(s)?, cfg)
    }

    pub fn decode(&self, cfg: &ScaleConfig) -> BigRational {
        BigRational::new(self.raw(), BigInt::from(cfg.gamma))
    }

    pub fn to_f64(&self, cfg: &ScaleConfig) -> f64 {
        match self.raw_i128() {
            Some(r) => r as f64 / cfg.gamma as f64,
            None => ToPrimitive::to_f64(&self.decode(cfg)).unwrap_or(f64::NAN),
        }
    }

    pub fn add(self, rhs: Self) -> Self {
        FixedPoint {
            repr: self.repr + rhs.repr,
        }
    }

    pub fn sub(self, rhs: Self) -> Self {
        FixedPoint {
            repr: self.repr - rhs.repr,
        }
    }

    /// Rescaled product `trunc(a * b / gamma)` of the signed representatives.
    pub fn mul(self, rhs: Self, cfg: &ScaleConfig) -> Result<Self, FixedPointError> {
        if let (Some(a), Some(b)) = (self.raw_i128(), rhs.raw_i128()) {
            if let Some(prod) = a.checked_mul(b) {
                // |prod| < 2^127 < p/2, so only the quotient bound applies
                let q = prod / cfg.gamma as i128;
                return Self::from_raw_bigint(&BigInt::from(q), cfg);
            }
        }
        let prod = self.raw() * rhs.raw();
        let half_p = cfg.field_modulus() >> 1u32;
        if prod.magnitude() > &half_p {
            return Err(FixedPointError::Overflow(prod.to_string()));
        }
        let q = &prod / BigInt::from(cfg.gamma);
        Self::from_raw_bigint(&q, cfg)
    }
}

fn round_half_away(r: &BigRational) -> BigInt {
    let (q, rem) = r.numer().div_rem(r.denom());
    let twice = rem.abs() * 2;
    if &twice >= r.denom() {
        if r.is_negative() {
            q - 1
        } else {
            q + 1
        }
    } else {
        q
    }
}

/// Parses a decimal literal into an exact rational.
pub fn parse_decimal(s: &str) -> Result<BigRational, FixedPointError> {
    let err = || FixedPointError::Parse(s.to_string());
    let t = s.trim();
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| err())?),
        None => (t, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(err());
    }
    let all: String = format!("{int_part}{frac_part}");
    let mut numer = BigInt::parse_bytes(if all.is_empty() { b"0" } else { all.as_bytes() }, 10)
        .ok_or_else(err)?;
    if neg {
        numer = -numer;
    }
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    Ok(if scale >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
    })
}

impl Add for FixedPoint {
    type Output = FixedPoint;
    fn add(self, rhs: Self) -> Self {
        FixedPoint::add(self, rhs)
    }
}

impl Sub for FixedPoint {
    type Output = FixedPoint;
    fn sub(self, rhs: Self) -> Self {
        FixedPoint::sub(self, rhs)
    }
}

impl Neg for FixedPoint {
    type Output = FixedPoint;
    fn neg(self) -> Self {
        FixedPoint { repr: -self.repr }
    }
}

impl Zero for FixedPoint {
    fn zero() -> Self {
        FixedPoint::ZERO
    }
    fn is_zero(&self) -> bool {
        self.repr.is_zero()
    }
}

/// Numeric types the training code can run over.
///
/// Additive structure comes from `num-traits`; the scaled product is fallible
/// because fixed-point values have bounded headroom.
pub trait Scalar:
    Clone + fmt::Debug + PartialEq + Zero + Add<Output = Self> + Sub<Output = Self> + Neg<Output = Self>
{
    /// Whatever the type needs to multiply or convert (the scale, for fixed point).
    type Context: Clone + fmt::Debug;

    fn scaled_mul(&self, rhs: &Self, ctx: &Self::Context) -> Result<Self, FixedPointError>;
    fn from_f64(v: f64, ctx: &Self::Context) -> Result<Self, FixedPointError>;
    fn to_f64(&self, ctx: &Self::Context) -> f64;
}

impl Scalar for FixedPoint {
    type Context = ScaleConfig;

    fn scaled_mul(&self, rhs: &Self, ctx: &ScaleConfig) -> Result<Self, FixedPointError> {
        FixedPoint::mul(*self, *rhs, ctx)
    }
    fn from_f64(v: f64, ctx: &ScaleConfig) -> Result<Self, FixedPointError> {
        FixedPoint::from_f64(v, ctx)
    }
    fn to_f64(&self, ctx: &ScaleConfig) -> f64 {
        FixedPoint::to_f64(self, ctx)
    }
}

macro_rules! impl_float_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            type Context = ();

            fn scaled_mul(&self, rhs: &Self, _: &()) -> Result<Self, FixedPointError> {
                Ok(self * rhs)
            }
            fn from_f64(v: f64, _: &()) -> Result<Self, FixedPointError> {
                Ok(v as $t)
            }
            fn to_f64(&self, _: &()) -> f64 {
                *self as f64
            }
        }
    )*};
}

impl_float_scalar!(f32, f64);

/// Exact rational arithmetic, no rounding anywhere.
impl Scalar for BigRational {
    type Context = ();

    fn scaled_mul(&self, rhs: &Self, _: &()) -> Result<Self, FixedPointError> {
        Ok(self * rhs)
    }
    fn from_f64(v: f64, _: &()) -> Result<Self, FixedPointError> {
        BigRational::from_float(v).ok_or_else(|| FixedPointError::Overflow(v.to_string()))
    }
    fn to_f64(&self, _: &()) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

impl FromStr for FixedPoint {
    type Err = FixedPointError;

    /// Parses with the default scale.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FixedPoint::from_decimal_str(s, &ScaleConfig::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> ScaleConfig {
        ScaleConfig::default()
    }

    fn enc(s: &str) -> FixedPoint {
        FixedPoint::from_decimal_str(s, &cfg()).unwrap()
    }

    fn p_minus(k: u64) -> FieldElement {
        FieldElement::from_biguint(&(FieldElement::modulus() - BigUint::from(k)))
    }

    #[test]
    fn encode_examples() {
        assert_eq!(enc("0.5").repr(), FieldElement::from_u64(50_000));
        assert_eq!(enc("-0.5").repr(), p_minus(50_000));
        assert_eq!(enc("1.5").repr(), FieldElement::from_u64(150_000));
        assert_eq!(enc("0").repr(), FieldElement::ZERO);
    }

    #[test]
    fn encode_rounds_half_away_from_zero() {
        assert_eq!(enc("0.000005").raw_i128(), Some(1));
        assert_eq!(enc("-0.000005").raw_i128(), Some(-1));
        assert_eq!(enc("0.0000049").raw_i128(), Some(0));
    }

    #[test]
    fn encode_overflow() {
        let c = cfg();
        let huge = BigRational::from_integer(FieldElement::modulus().clone().into());
        assert!(matches!(FixedPoint::encode(&huge, &c), Err(FixedPointError::Overflow(_))));
        // the last representable raw value is floor((p-1)/(2 gamma))
        let edge = BigInt::from(c.headroom.clone()) - 1;
        assert!(FixedPoint::from_raw_bigint(&edge, &c).is_ok());
        assert!(FixedPoint::from_raw_bigint(&(edge + 1), &c).is_err());
    }

    #[test]
    fn add_examples() {
        assert_eq!((enc("0.5") + enc("0.25")).repr(), FieldElement::from_u64(75_000));
        assert_eq!((enc("0.5") + enc("-0.5")).repr(), FieldElement::ZERO);
        assert_eq!((enc("1.5") + enc("2.5")).repr(), FieldElement::from_u64(400_000));
    }

    #[test]
    fn mul_examples() {
        let c = cfg();
        assert_eq!(enc("0.5").mul(enc("0.5"), &c).unwrap().repr(), FieldElement::from_u64(25_000));
        assert_eq!(enc("2").mul(enc("3"), &c).unwrap().repr(), FieldElement::from_u64(600_000));
        assert_eq!(enc("0.00001").mul(enc("0.00001"), &c).unwrap().repr(), FieldElement::ZERO);
    }

    #[test]
    fn mul_truncates_toward_zero() {
        let c = cfg();
        // 3 * 7 / 10^5 and friends: exact rational oracle gives 21e-5 / 1e5
        let a = FixedPoint::from_raw(-150_001);
        let b = FixedPoint::from_raw(3);
        let exact = BigRational::new(BigInt::from(-450_003), BigInt::from(c.gamma()));
        assert_eq!(exact.trunc().to_integer(), BigInt::from(-4));
        assert_eq!(a.mul(b, &c).unwrap().raw_i128(), Some(-4));
        assert_eq!(a.neg().mul(b, &c).unwrap().raw_i128(), Some(4));
    }

    #[test]
    fn mul_overflow_is_reported() {
        let c = cfg();
        let big = FixedPoint::from_raw_bigint(&(BigInt::from(c.headroom.clone()) - 1), &c).unwrap();
        assert!(matches!(big.mul(big, &c), Err(FixedPointError::Overflow(_))));
    }

    #[test]
    fn decimal_parsing() {
        let r = parse_decimal("-1.25e1").unwrap();
        assert_eq!(r, BigRational::from_integer(BigInt::from(-12)) - BigRational::new(1.into(), 2.into()));
        assert!(parse_decimal("").is_err());
        assert!(parse_decimal("1.2.3").is_err());
        assert!(parse_decimal("abc").is_err());
        assert_eq!(parse_decimal(".5").unwrap(), BigRational::new(1.into(), 2.into()));
    }

    #[test]
    fn config_validation() {
        assert!(ScaleConfig::new(0, 48).is_err());
        assert!(ScaleConfig::new(100_000, 120).is_err());
        assert_eq!(cfg().remainder_bits(), 17);
        let json = serde_json::to_string(&cfg()).unwrap();
        let back: ScaleConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg());
    }

    proptest! {
        #[test]
        fn round_trip_exact(k in any::<i128>()) {
            let c = cfg();
            let r = BigRational::new(BigInt::from(k), BigInt::from(c.gamma()));
            let v = FixedPoint::encode(&r, &c).unwrap();
            prop_assert_eq!(v.decode(&c), r);
        }

        #[test]
        fn add_commutes_and_associates(a in -10i128.pow(12)..10i128.pow(12),
                                       b in -10i128.pow(12)..10i128.pow(12),
                                       d in -10i128.pow(12)..10i128.pow(12)) {
            let (a, b, d) = (FixedPoint::from_raw(a), FixedPoint::from_raw(b), FixedPoint::from_raw(d));
            prop_assert_eq!(a + b, b + a);
            prop_assert_eq!((a + b) + d, a + (b + d));
        }

        #[test]
        fn mul_commutes_and_distributes_within_one_unit(a in -10i128.pow(7)..10i128.pow(7),
                                                        b in -10i128.pow(7)..10i128.pow(7),
                                                        d in -10i128.pow(7)..10i128.pow(7)) {
            let c = cfg();
            let (a, b, d) = (FixedPoint::from_raw(a), FixedPoint::from_raw(b), FixedPoint::from_raw(d));
            prop_assert_eq!(a.mul(b, &c).unwrap(), b.mul(a, &c).unwrap());
            let lhs = a.mul(b + d, &c).unwrap().raw_i128().unwrap();
            let rhs = (a.mul(b, &c).unwrap() + a.mul(d, &c).unwrap()).raw_i128().unwrap();
            // three truncations, each at most one raw unit
            prop_assert!((lhs - rhs).abs() <= 2, "lhs {} rhs {}", lhs, rhs);
        }
    }
}
