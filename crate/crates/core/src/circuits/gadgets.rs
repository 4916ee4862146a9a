//! Gadgets over [`Builder`]. Each returns a [`Num`] whose value (while
//! proving) equals the corresponding native computation bit for bit.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive};

use crate::arith::Arithmetic;
use crate::field::FieldElement;
use crate::fixed::{FixedPoint, ScaleConfig};
use crate::hashing::{self, poseidon, TAG_HASH1, TAG_HASH2};

use super::{Builder, CircuitError, Num};

fn need(v: Option<FieldElement>) -> Result<FieldElement, CircuitError> {
    v.ok_or(CircuitError::MissingValue)
}

fn pow2(k: u32) -> FieldElement {
    FieldElement::from_biguint(&(BigUint::one() << k))
}

/// Field product. Free when either side is a constant.
pub fn mul(b: &mut Builder, x: &Num, y: &Num) -> Result<Num, CircuitError> {
    if let Some(k) = x.as_constant() {
        return Ok(y.scale(k));
    }
    if let Some(k) = y.as_constant() {
        return Ok(x.scale(k));
    }
    let out = b.alloc_private(|| Ok(need(x.value())? * need(y.value())?))?;
    b.enforce(x, y, &out)?;
    Ok(out)
}

/// A private bit with value `f()`.
pub fn alloc_bit(b: &mut Builder, f: impl FnOnce() -> Result<bool, CircuitError>) -> Result<Num, CircuitError> {
    let bit = b.alloc_private(|| Ok(if f()? { FieldElement::ONE } else { FieldElement::ZERO }))?;
    b.enforce_boolean(&bit)?;
    Ok(bit)
}

/// `p ? t : f` for a boolean `p`; one constraint `p * (t - f) = out - f`.
pub fn select(b: &mut Builder, p: &Num, t: &Num, f: &Num) -> Result<Num, CircuitError> {
    if let Some(k) = p.as_constant() {
        return Ok(if k.is_zero() { f.clone() } else { t.clone() });
    }
    if t == f {
        return Ok(t.clone());
    }
    let out = b.alloc_private(|| {
        let bit = need(p.value())?;
        if bit.is_zero() {
            need(f.value())
        } else {
            need(t.value())
        }
    })?;
    b.enforce(p, &t.sub(f), &out.sub(f))?;
    Ok(out)
}

/// `1` if `x == 0`, else `0`. The inverse hint is slack when `x == 0`.
pub fn is_zero(b: &mut Builder, x: &Num) -> Result<Num, CircuitError> {
    let inv = b.alloc_private(|| Ok(need(x.value())?.inverse().unwrap_or(FieldElement::ZERO)))?;
    if x.value().is_some_and(|v| v.is_zero()) {
        b.mark_slack(&inv);
    }
    let z = b.alloc_private(|| Ok(if need(x.value())?.is_zero() { FieldElement::ONE } else { FieldElement::ZERO }))?;
    b.enforce(x, &inv, &z.not())?;
    b.enforce(x, &z, &Num::zero())?;
    Ok(z)
}

/// Enforces `x != 0` through an inverse witness.
pub fn enforce_nonzero(b: &mut Builder, x: &Num, what: &str) -> Result<(), CircuitError> {
    let inv = b.alloc_private(|| {
        need(x.value())?
            .inverse()
            .ok_or_else(|| CircuitError::WitnessSynthesis(format!("{what}: no inverse of zero")))
    })?;
    b.enforce(x, &inv, &Num::one())
}

/// Little-endian decomposition of `x` into `n` bits; fails while proving if
/// the value does not fit.
pub fn to_bits(b: &mut Builder, x: &Num, n: u32) -> Result<Vec<Num>, CircuitError> {
    let value = if b.is_proving() {
        let v = need(x.value())?.to_biguint();
        if v.bits() > n as u64 {
            return Err(CircuitError::WitnessSynthesis(format!("value does not fit in {n} bits")));
        }
        Some(v)
    } else {
        None
    };
    let mut bits = Vec::with_capacity(n as usize);
    let mut sum = Num::zero();
    for i in 0..n {
        let bit = alloc_bit(b, || Ok(value.as_ref().expect("set while proving").bit(i as u64)))?;
        sum = sum.add(&bit.scale(pow2(i)));
        bits.push(bit);
    }
    b.enforce_equal(&sum, x)?;
    Ok(bits)
}

/// Checks `-2^bits <= raw(x) < 2^bits`.
pub fn range_check_signed(b: &mut Builder, x: &Num, bits: u32) -> Result<(), CircuitError> {
    to_bits(b, &x.add_constant(pow2(bits)), bits + 1).map(|_| ())
}

/// Signed representative as a small integer when possible.
fn signed(v: FieldElement) -> BigInt {
    match v.to_i128() {
        Some(s) => BigInt::from(s),
        None => v.to_signed(),
    }
}

/// Floor quotient and remainder of `a*b` by `gamma`.
fn floor_divmod(a: FieldElement, b: FieldElement, gamma: u64) -> (BigInt, BigInt) {
    if let (Some(x), Some(y)) = (a.to_i128(), b.to_i128()) {
        if let Some(p) = x.checked_mul(y) {
            let g = gamma as i128;
            return (BigInt::from(p.div_euclid(g)), BigInt::from(p.rem_euclid(g)));
        }
    }
    (signed(a) * signed(b)).div_mod_floor(&BigInt::from(gamma))
}

/// Fixed-point product `trunc(a*b / gamma)`.
///
/// Witnesses the floor quotient `q` and remainder `r` with `a*b = gamma*q + r`,
/// `0 <= r < gamma` (two bit decompositions: `r` and `gamma - 1 - r`) and
/// `-2^B <= q < 2^B`. Truncation toward zero adds one when `q < 0` and `r != 0`.
pub fn fx_mul(b: &mut Builder, cfg: &ScaleConfig, x: &Num, y: &Num) -> Result<Num, CircuitError> {
    if let (Some(p), Some(q)) = (x.as_constant(), y.as_constant()) {
        let v = FixedPoint::from_repr(p).mul(FixedPoint::from_repr(q), cfg)?;
        return Ok(Num::constant(v.repr()));
    }
    let gamma = cfg.gamma();
    let bound = cfg.range_bits();
    let rbits = cfg.remainder_bits();
    let hint = if b.is_proving() {
        let (q, r) = floor_divmod(need(x.value())?, need(y.value())?, gamma);
        let limit = BigInt::one() << bound;
        if q >= limit || q < -limit.clone() {
            return Err(CircuitError::WitnessSynthesis(format!(
                "fixed-point product exceeds the {bound}-bit circuit range"
            )));
        }
        Some((q, r.to_u64().expect("remainder below gamma")))
    } else {
        None
    };

    let q = b.alloc_private(|| Ok(FieldElement::from_bigint(&hint.as_ref().expect("proving").0)))?;
    let rem = hint.as_ref().map(|h| h.1);
    let r_bits: Vec<Num> = (0..rbits)
        .map(|i| alloc_bit(b, || Ok(rem.expect("proving") >> i & 1 == 1)))
        .collect::<Result<_, _>>()?;
    let r = r_bits
        .iter()
        .enumerate()
        .fold(Num::zero(), |acc, (i, bit)| acc.add(&bit.scale(pow2(i as u32))));
    let gamma_fe = FieldElement::from_u64(gamma);
    b.enforce(x, y, &q.scale(gamma_fe).add(&r))?;

    let complement = Num::constant(FieldElement::from_u64(gamma - 1)).sub(&r);
    to_bits(b, &complement, rbits)?;

    let q_bits = to_bits(b, &q.add_constant(pow2(bound)), bound + 1)?;
    let negative = q_bits[bound as usize].not();
    let z = is_zero(b, &r)?;
    let t = b.alloc_private(|| {
        let neg = need(negative.value())?;
        let nz = need(z.value())?;
        Ok(neg * (FieldElement::ONE - nz))
    })?;
    b.enforce(&negative, &z.not(), &t)?;
    Ok(q.add(&t))
}

fn sbox(b: &mut Builder, x: &Num) -> Result<Num, CircuitError> {
    if let Some(k) = x.as_constant() {
        let k2 = k.square();
        return Ok(Num::constant(k2.square() * k));
    }
    let x2 = mul(b, x, x)?;
    let x4 = mul(b, &x2, &x2)?;
    mul(b, &x4, x)
}

/// The Poseidon permutation with `tag` in the capacity slot; mirrors
/// [`poseidon::hash`].
pub fn poseidon_hash(b: &mut Builder, tag: FieldElement, inputs: &[Num]) -> Result<Num, CircuitError> {
    let p = poseidon::params(inputs.len());
    let mut state = Vec::with_capacity(p.width);
    state.push(Num::constant(tag));
    state.extend(inputs.iter().cloned());
    let half = p.full_rounds / 2;
    let total = p.full_rounds + p.partial_rounds;
    for round in 0..total {
        for (i, s) in state.iter_mut().enumerate() {
            *s = s.add_constant(p.ark[round * p.width + i]);
        }
        if round < half || round >= half + p.partial_rounds {
            for s in state.iter_mut() {
                *s = sbox(b, s)?;
            }
        } else {
            state[0] = sbox(b, &state[0])?;
        }
        state = p
            .mds
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&state)
                    .fold(Num::zero(), |acc, (m, s)| acc.add(&s.scale(*m)))
            })
            .collect();
    }
    Ok(state.swap_remove(0))
}

pub fn hash1(b: &mut Builder, v: &Num) -> Result<Num, CircuitError> {
    poseidon_hash(b, FieldElement::from_u64(TAG_HASH1), std::slice::from_ref(v))
}

pub fn hash2(b: &mut Builder, l: &Num, r: &Num) -> Result<Num, CircuitError> {
    poseidon_hash(b, FieldElement::from_u64(TAG_HASH2), &[l.clone(), r.clone()])
}

pub fn hash_data_point(b: &mut Builder, uid: &Num, x: &[Num], y: &Num) -> Result<Num, CircuitError> {
    let mut h = hash1(b, uid)?;
    for xj in x.iter().chain(std::iter::once(y)) {
        let leaf = hash1(b, xj)?;
        h = hash2(b, &h, &leaf)?;
    }
    Ok(h)
}

pub fn hash_model(b: &mut Builder, weights: &[Num]) -> Result<Num, CircuitError> {
    let (first, rest) = weights
        .split_first()
        .ok_or_else(|| CircuitError::ShapeMismatch("model has no parameters".into()))?;
    let mut h = hash1(b, first)?;
    for w in rest {
        let leaf = hash1(b, w)?;
        h = hash2(b, &h, &leaf)?;
    }
    Ok(h)
}

/// Merkle root over the present prefix of `leaves`. Pairs `(2i, 2i+1)`
/// hash when the right node is present, otherwise the left node is carried;
/// an all-absent set yields the empty root.
pub fn hash_data(b: &mut Builder, leaves: &[Num], present: &[Num]) -> Result<Num, CircuitError> {
    if leaves.len() != present.len() {
        return Err(CircuitError::ShapeMismatch("one presence bit per leaf".into()));
    }
    let empty = Num::constant(hashing::empty_root().0);
    if leaves.is_empty() {
        return Ok(empty);
    }
    let mut level = leaves.to_vec();
    let mut pres = present.to_vec();
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut next_pres = Vec::with_capacity(next.capacity());
        for (pair, pp) in level.chunks(2).zip(pres.chunks(2)) {
            match (pair, pp) {
                ([l, r], [pl, pr]) => {
                    let h = hash2(b, l, r)?;
                    next.push(select(b, pr, &h, l)?);
                    next_pres.push(pl.clone());
                }
                ([l], [pl]) => {
                    next.push(l.clone());
                    next_pres.push(pl.clone());
                }
                _ => unreachable!(),
            }
        }
        level = next;
        pres = next_pres;
    }
    select(b, &pres[0], &level[0], &empty)
}

/// Chain fold `psi := present ? hash2(psi, h) : psi` from `start`.
pub fn extend_chain(b: &mut Builder, start: &Num, items: &[Num], present: &[Num]) -> Result<Num, CircuitError> {
    if items.len() != present.len() {
        return Err(CircuitError::ShapeMismatch("one presence bit per item".into()));
    }
    let mut psi = start.clone();
    for (h, p) in items.iter().zip(present) {
        let next = hash2(b, &psi, h)?;
        psi = select(b, p, &next, &psi)?;
    }
    Ok(psi)
}

/// `capacity` presence bits with the first `count` set (values only while
/// proving), constrained boolean and prefix-closed.
pub fn presence_bits(b: &mut Builder, capacity: usize, count: usize) -> Result<Vec<Num>, CircuitError> {
    let mut bits: Vec<Num> = Vec::with_capacity(capacity);
    for i in 0..capacity {
        let bit = alloc_bit(b, || Ok(i < count))?;
        if let Some(prev) = bits.last() {
            b.enforce(&bit, &prev.not(), &Num::zero())?;
        }
        bits.push(bit);
    }
    Ok(bits)
}

/// Forces `v = 0` in an absent slot.
pub fn enforce_absent_zero(b: &mut Builder, present: &Num, v: &Num) -> Result<(), CircuitError> {
    b.enforce(&present.not(), v, &Num::zero())
}

/// Arithmetic over circuit numbers: additions are free, products go through
/// [`fx_mul`].
pub struct CircuitArith<'a> {
    pub builder: &'a mut Builder,
    pub scale: &'a ScaleConfig,
}

impl Arithmetic<Num> for CircuitArith<'_> {
    type Error = CircuitError;

    fn add(&mut self, a: &Num, b: &Num) -> Num {
        a.add(b)
    }

    fn sub(&mut self, a: &Num, b: &Num) -> Num {
        a.sub(b)
    }

    fn mul(&mut self, a: &Num, b: &Num) -> Result<Num, CircuitError> {
        fx_mul(self.builder, self.scale, a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::is_satisfied;
    use crate::hashing::{DataPoint, HashedSet};

    fn cfg() -> ScaleConfig {
        ScaleConfig::default()
    }

    fn fx(s: &str) -> FixedPoint {
        FixedPoint::from_decimal_str(s, &cfg()).unwrap()
    }

    fn private(b: &mut Builder, v: FieldElement) -> Num {
        b.alloc_private(|| Ok(v)).unwrap()
    }

    fn check_mul(a: FixedPoint, c: FixedPoint) {
        let mut b = Builder::prover(true);
        let x = private(&mut b, a.repr());
        let y = private(&mut b, c.repr());
        let q = fx_mul(&mut b, &cfg(), &x, &y).unwrap();
        let native = a.mul(c, &cfg()).unwrap();
        assert_eq!(q.value(), Some(native.repr()), "{a:?} * {c:?}");
        let (cs, w) = b.finalize().unwrap();
        assert!(is_satisfied(&cs, &w));
    }

    #[test]
    fn fx_mul_examples() {
        check_mul(fx("0.5"), fx("0.5"));
        check_mul(fx("0.00001"), fx("0.00001"));
        check_mul(fx("2"), fx("3"));
        check_mul(fx("-0.00003"), fx("0.5"));
        check_mul(fx("-1.23456"), fx("-7.89"));
        check_mul(fx("-0.5"), fx("0"));
    }

    #[test]
    fn fx_mul_remainder_and_quotient_wires() {
        let mut b = Builder::prover(true);
        let x = private(&mut b, fx("0.00001").repr());
        let y = private(&mut b, fx("0.00001").repr());
        let q = fx_mul(&mut b, &cfg(), &x, &y).unwrap();
        assert_eq!(q.value(), Some(FieldElement::ZERO));
        let (cs, w) = b.finalize().unwrap();
        // q_f is the first wire allocated by the gadget, r's low bit the next
        let q_wire = 1 + cs.num_public + 2;
        assert_eq!(w.assignment[q_wire], FieldElement::ZERO);
        assert_eq!(w.assignment[q_wire + 1], FieldElement::ONE);
        let mut bad = w.clone();
        bad.assignment[q_wire] = FieldElement::ONE;
        assert!(!is_satisfied(&cs, &bad));
    }

    #[test]
    fn fx_mul_matches_native_on_a_grid() {
        let vals = [-250_000i128, -100_001, -99_999, -3, -1, 0, 1, 2, 77_777, 100_000, 314_159];
        let mut b = Builder::prover(true);
        for &p in &vals {
            for &q in &vals {
                let (a, c) = (FixedPoint::from_raw(p), FixedPoint::from_raw(q));
                let x = private(&mut b, a.repr());
                let y = private(&mut b, c.repr());
                let out = fx_mul(&mut b, &cfg(), &x, &y).unwrap();
                assert_eq!(out.value(), Some(a.mul(c, &cfg()).unwrap().repr()), "{p} * {q}");
            }
        }
        let (cs, w) = b.finalize().unwrap();
        assert!(is_satisfied(&cs, &w));
    }

    #[test]
    fn fx_mul_rejects_out_of_range_products() {
        let mut b = Builder::prover(true);
        let big = FixedPoint::from_raw(1i128 << 45);
        let x = private(&mut b, big.repr());
        let y = private(&mut b, big.repr());
        assert!(matches!(fx_mul(&mut b, &cfg(), &x, &y), Err(CircuitError::WitnessSynthesis(_))));
    }

    #[test]
    fn gadget_hashes_match_native() {
        let mut b = Builder::prover(true);
        let d = DataPoint::new(9, vec![fx("0.5"), fx("-1.25")], fx("1"));
        let uid = private(&mut b, FieldElement::from_u64(d.uid));
        let x: Vec<Num> = d.x.iter().map(|v| private(&mut b, v.repr())).collect();
        let y = private(&mut b, d.y.repr());
        let h = hash_data_point(&mut b, &uid, &x, &y).unwrap();
        assert_eq!(h.value(), Some(hashing::hash_data_point(&d).0));

        let weights: Vec<FixedPoint> = vec![fx("0.1"), fx("-0.2"), fx("3")];
        let ws: Vec<Num> = weights.iter().map(|v| private(&mut b, v.repr())).collect();
        let hm = hash_model(&mut b, &ws).unwrap();
        assert_eq!(hm.value(), Some(hashing::hash_model(&weights).unwrap().0));
        let (cs, w) = b.finalize().unwrap();
        assert!(is_satisfied(&cs, &w));
    }

    fn digests(n: u64) -> Vec<hashing::HashDigest> {
        (0..n).map(|i| hashing::hash1(FieldElement::from_u64(100 + i))).collect()
    }

    #[test]
    fn padded_merkle_matches_native_for_every_prefix() {
        let all = digests(7);
        for cap in [1usize, 2, 3, 5, 7] {
            for count in 0..=cap {
                let mut b = Builder::prover(true);
                let pres = presence_bits(&mut b, cap, count).unwrap();
                let leaves: Vec<Num> = (0..cap)
                    .map(|i| private(&mut b, if i < count { all[i].0 } else { FieldElement::ZERO }))
                    .collect();
                let root = hash_data(&mut b, &leaves, &pres).unwrap();
                let native = hashing::hash_data(&HashedSet::new(all[..count].to_vec()));
                assert_eq!(root.value(), Some(native.0), "cap {cap} count {count}");
                let (cs, w) = b.finalize().unwrap();
                assert!(is_satisfied(&cs, &w));
            }
        }
    }

    #[test]
    fn single_leaf_root() {
        let h = digests(1)[0];
        let mut b = Builder::prover(true);
        let leaf = private(&mut b, h.0);
        let root = hash_data(&mut b, &[leaf], &[Num::one()]).unwrap();
        assert_eq!(root.value(), Some(h.0));
    }

    #[test]
    fn chain_over_three_digests() {
        let ds = digests(3);
        let mut b = Builder::prover(true);
        let pres = presence_bits(&mut b, 4, 3).unwrap();
        let items: Vec<Num> = ds
            .iter()
            .map(|d| d.0)
            .chain([FieldElement::ZERO])
            .map(|v| private(&mut b, v))
            .collect();
        let start = Num::constant(hashing::empty_root().0);
        let psi = extend_chain(&mut b, &start, &items, &pres).unwrap();
        assert_eq!(psi.value(), Some(hashing::hash_unlearn(&HashedSet::new(ds)).0));
        let (cs, w) = b.finalize().unwrap();
        assert!(is_satisfied(&cs, &w));
    }

    #[test]
    fn presence_bits_must_be_a_prefix() {
        let mut b = Builder::prover(true);
        presence_bits(&mut b, 3, 2).unwrap();
        let (cs, mut w) = b.finalize().unwrap();
        assert!(is_satisfied(&cs, &w));
        // 1, 0, 1 is not a prefix
        w.assignment[2] = FieldElement::ZERO;
        w.assignment[3] = FieldElement::ONE;
        assert!(!is_satisfied(&cs, &w));
    }

    #[test]
    fn is_zero_marks_slack_inverse() {
        let mut b = Builder::prover(true);
        let x = private(&mut b, FieldElement::ZERO);
        let z = is_zero(&mut b, &x).unwrap();
        assert_eq!(z.value(), Some(FieldElement::ONE));
        let (cs, w) = b.finalize().unwrap();
        assert_eq!(w.slack, vec![1]);
        let mut other = w.clone();
        other.assignment[1 + 1] = FieldElement::from_u64(77);
        assert!(is_satisfied(&cs, &other));
    }

    #[test]
    fn nonzero_gadget_fails_on_zero() {
        let mut b = Builder::prover(true);
        let x = private(&mut b, FieldElement::ZERO);
        assert!(matches!(enforce_nonzero(&mut b, &x, "test"), Err(CircuitError::WitnessSynthesis(_))));
    }

    #[test]
    fn setup_and_prover_agree_on_structure() {
        let build = |b: &mut Builder| {
            let x = b.alloc_private(|| Ok(fx("1.5").repr())).unwrap();
            let y = b.alloc_private(|| Ok(fx("-2.25").repr())).unwrap();
            let q = fx_mul(b, &cfg(), &x, &y).unwrap();
            let h = hash2(b, &q, &x).unwrap();
            let p = b.alloc_public(|| Ok(h.value().unwrap())).unwrap();
            b.enforce_equal(&h, &p).unwrap();
        };
        let mut s = Builder::setup();
        build(&mut s);
        let mut p = Builder::prover(true);
        build(&mut p);
        let (cs_p, w) = p.finalize().unwrap();
        assert_eq!(s.finalize_system().unwrap(), cs_p);
        assert!(is_satisfied(&cs_p, &w));
    }
}
