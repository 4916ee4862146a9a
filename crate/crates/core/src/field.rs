//! Prime-field elements over the BN254 scalar field.
//!
//! Every value that enters a constraint system, a hash, or a file envelope is
//! a [`FieldElement`]. The canonical text form is lowercase big-endian hex,
//! zero-padded to the byte length of the modulus.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;
use std::sync::OnceLock;

use ark_bn254::Fr;
use ark_ff::{BigInteger, Field, PrimeField};
use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Byte length of a canonically serialized field element.
pub const FIELD_BYTES: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FieldParseError {
    #[error("expected {expected} hex characters, got {got}")]
    Length { expected: usize, got: usize },
    #[error("invalid hex: {0}")]
    Hex(String),
    #[error("value is not canonically reduced")]
    NonCanonical,
}

/// An element of the prime field, always canonically reduced.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct FieldElement(pub(crate) Fr);

fn modulus_cell() -> &'static BigUint {
    static MODULUS: OnceLock<BigUint> = OnceLock::new();
    MODULUS.get_or_init(|| BigUint::from_bytes_be(&Fr::MODULUS.to_bytes_be()))
}

fn half_modulus() -> &'static BigUint {
    static HALF: OnceLock<BigUint> = OnceLock::new();
    HALF.get_or_init(|| modulus_cell() >> 1u32)
}

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(ark_ff::MontFp!("0"));
    pub const ONE: FieldElement = FieldElement(ark_ff::MontFp!("1"));

    /// The field modulus `p`.
    pub fn modulus() -> &'static BigUint {
        modulus_cell()
    }

    pub fn from_u64(v: u64) -> Self {
        FieldElement(Fr::from(v))
    }

    /// Maps a signed integer to the field, negatives wrapping to `p - |v|`.
    pub fn from_i128(v: i128) -> Self {
        let mag = FieldElement(Fr::from(v.unsigned_abs()));
        if v < 0 {
            -mag
        } else {
            mag
        }
    }

    /// Reduces an arbitrary unsigned integer modulo `p`.
    pub fn from_biguint(v: &BigUint) -> Self {
        FieldElement(Fr::from_be_bytes_mod_order(&v.to_bytes_be()))
    }

    /// Maps a signed integer into the field.
    pub fn from_bigint(v: &BigInt) -> Self {
        let mag = Self::from_biguint(v.magnitude());
        match v.sign() {
            Sign::Minus => -mag,
            _ => mag,
        }
    }

    pub fn to_biguint(&self) -> BigUint {
        BigUint::from_bytes_be(&self.0.into_bigint().to_bytes_be())
    }

    /// The signed representative in `(-p/2, p/2]`.
    pub fn to_signed(&self) -> BigInt {
        let v = self.to_biguint();
        if &v > half_modulus() {
            BigInt::from_biguint(Sign::Minus, modulus_cell() - v)
        } else {
            BigInt::from_biguint(Sign::Plus, v)
        }
    }

    /// The signed representative when it fits in an `i128`.
    pub fn to_i128(&self) -> Option<i128> {
        let limbs = self.0.into_bigint().0;
        if limbs[2] == 0 && limbs[3] == 0 && limbs[1] >> 63 == 0 {
            return Some(((limbs[1] as i128) << 64) | limbs[0] as i128);
        }
        let neg = (-self.0).into_bigint().0;
        if neg[2] == 0 && neg[3] == 0 && neg[1] >> 63 == 0 {
            return Some(-(((neg[1] as i128) << 64) | neg[0] as i128));
        }
        None
    }

    /// The canonical value as a `u64`, if it fits.
    pub fn to_u64(&self) -> Option<u64> {
        let limbs = self.0.into_bigint().0;
        (limbs[1] == 0 && limbs[2] == 0 && limbs[3] == 0).then_some(limbs[0])
    }

    pub fn is_zero(&self) -> bool {
        self.0 == Fr::from(0u64)
    }

    pub fn inverse(&self) -> Option<Self> {
        self.0.inverse().map(FieldElement)
    }

    pub fn square(&self) -> Self {
        FieldElement(self.0.square())
    }

    pub fn to_bytes_be(&self) -> [u8; FIELD_BYTES] {
        let mut out = [0u8; FIELD_BYTES];
        out.copy_from_slice(&self.0.into_bigint().to_bytes_be());
        out
    }

    /// Parses big-endian bytes, rejecting values `>= p`.
    pub fn from_bytes_be(bytes: &[u8; FIELD_BYTES]) -> Result<Self, FieldParseError> {
        let v = BigUint::from_bytes_be(bytes);
        if &v >= modulus_cell() {
            return Err(FieldParseError::NonCanonical);
        }
        Ok(Self::from_biguint(&v))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes_be())
    }

    /// Parses the canonical hex form (exactly 64 lowercase or uppercase digits).
    pub fn from_hex(s: &str) -> Result<Self, FieldParseError> {
        if s.len() != 2 * FIELD_BYTES {
            return Err(FieldParseError::Length {
                expected: 2 * FIELD_BYTES,
                got: s.len(),
            });
        }
        let mut bytes = [0u8; FIELD_BYTES];
        hex::decode_to_slice(s, &mut bytes).map_err(|e| FieldParseError::Hex(e.to_string()))?;
        Self::from_bytes_be(&bytes)
    }

    pub(crate) fn inner(&self) -> Fr {
        self.0
    }

    pub(crate) fn from_inner(fr: Fr) -> Self {
        FieldElement(fr)
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_i128() {
            Some(v) if v.unsigned_abs() < 1 << 64 => write!(f, "Fe({v})"),
            _ => write!(f, "Fe(0x{})", self.to_hex()),
        }
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for FieldElement {
    type Err = FieldParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

impl From<u64> for FieldElement {
    fn from(v: u64) -> Self {
        Self::from_u64(v)
    }
}

impl Add for FieldElement {
    type Output = FieldElement;
    fn add(self, rhs: Self) -> Self {
        FieldElement(self.0 + rhs.0)
    }
}

impl AddAssign for FieldElement {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl Sub for FieldElement {
    type Output = FieldElement;
    fn sub(self, rhs: Self) -> Self {
        FieldElement(self.0 - rhs.0)
    }
}

impl SubAssign for FieldElement {
    fn sub_assign(&mut self, rhs: Self) {
        self.0 -= rhs.0;
    }
}

impl Mul for FieldElement {
    type Output = FieldElement;
    fn mul(self, rhs: Self) -> Self {
        FieldElement(self.0 * rhs.0)
    }
}

impl Neg for FieldElement {
    type Output = FieldElement;
    fn neg(self) -> Self {
        FieldElement(-self.0)
    }
}

impl Zero for FieldElement {
    fn zero() -> Self {
        Self::ZERO
    }
    fn is_zero(&self) -> bool {
        FieldElement::is_zero(self)
    }
}

impl One for FieldElement {
    fn one() -> Self {
        Self::ONE
    }
}

impl Serialize for FieldElement {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for FieldElement {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::from_hex(&s).map_err(serde::de::Error::custom)
    }
}
