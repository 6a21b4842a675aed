//! Exact arithmetic for fast growth sequences.
//!
//! The minimal literal sequence grows so quickly that by level 3 even the
//! *exponent* of a value no longer fits in memory as a plain big integer
//! (it would need about 2.7e14 bits).  Values are therefore kept in
//! exponent form `base^exp` where the exponent is a [`Magnitude`]: either a
//! plain big integer or `coeff * 2^exp2` with both parts materialized.
//! All comparisons are exact; no floating point is involved anywhere.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use std::cmp::Ordering;

use crate::{Error, Result};

/// Materialization cutoff, in bits, for turning exponent form back into a
/// plain integer during comparisons.
const MATERIALIZE_BITS: u64 = 1 << 17;

/// Shift cutoff below which `coeff * 2^exp2` collapses to a plain integer.
const SMALL_SHIFT: u64 = 1 << 12;

/// An exponent value: either a big integer or `coeff * 2^exp2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Magnitude {
    Int(BigUint),
    Scaled { coeff: BigUint, exp2: BigUint },
}

impl Magnitude {
    pub fn from_u64(v: u64) -> Self {
        Magnitude::Int(BigUint::from(v))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Magnitude::Int(v) => v.is_zero(),
            Magnitude::Scaled { coeff, .. } => coeff.is_zero(),
        }
    }

    /// Canonical form: small shifts collapse to `Int`, coefficients are odd.
    pub fn normalize(self) -> Magnitude {
        match self {
            Magnitude::Int(v) => Magnitude::Int(v),
            Magnitude::Scaled { coeff, exp2 } => {
                if coeff.is_zero() {
                    return Magnitude::Int(BigUint::zero());
                }
                if exp2.bits() <= 13 {
                    let sh: u64 = (&exp2).try_into().unwrap_or(u64::MAX);
                    if sh <= SMALL_SHIFT {
                        return Magnitude::Int(coeff << sh);
                    }
                }
                let tz = coeff.trailing_zeros().unwrap_or(0);
                if tz > 0 {
                    Magnitude::Scaled {
                        coeff: coeff >> tz,
                        exp2: exp2 + BigUint::from(tz),
                    }
                } else {
                    Magnitude::Scaled { coeff, exp2 }
                }
            }
        }
    }

    pub fn compare(&self, other: &Magnitude) -> Ordering {
        use Magnitude::*;
        match (self, other) {
            (Int(a), Int(b)) => a.cmp(b),
            (Int(a), Scaled { coeff, exp2 }) => {
                cmp_int_scaled(a, coeff, exp2)
            }
            (Scaled { coeff, exp2 }, Int(b)) => {
                cmp_int_scaled(b, coeff, exp2).reverse()
            }
            (Scaled { coeff: c1, exp2: e1 }, Scaled { coeff: c2, exp2: e2 }) => {
                if e1 >= e2 {
                    let d = e1 - e2;
                    cmp_shifted(c1, &d, c2)
                } else {
                    let d = e2 - e1;
                    cmp_shifted(c2, &d, c1).reverse()
                }
            }
        }
    }

    /// Sum of two magnitudes when exactly representable.
    pub fn checked_add(&self, other: &Magnitude) -> Result<Magnitude> {
        use Magnitude::*;
        match (self, other) {
            (Int(a), Int(b)) => Ok(Int(a + b)),
            (a, b) if a.is_zero() => Ok(b.clone()),
            (a, b) if b.is_zero() => Ok(a.clone()),
            (Scaled { coeff: c1, exp2: e1 }, Scaled { coeff: c2, exp2: e2 }) => {
                let (hi_c, hi_e, lo_c, lo_e) = if e1 >= e2 {
                    (c1, e1, c2, e2)
                } else {
                    (c2, e2, c1, e1)
                };
                let d = hi_e - lo_e;
                if d.bits() <= 13 {
                    let sh: u64 = (&d).try_into().unwrap();
                    if sh <= SMALL_SHIFT {
                        return Ok(Scaled {
                            coeff: (hi_c << sh) + lo_c,
                            exp2: lo_e.clone(),
                        }
                        .normalize());
                    }
                }
                Err(Error::Capacity(
                    "magnitude sum not exactly representable".into(),
                ))
            }
            _ => Err(Error::Capacity(
                "magnitude sum not exactly representable".into(),
            )),
        }
    }

    pub fn mul_uint(&self, k: &BigUint) -> Magnitude {
        match self {
            Magnitude::Int(v) => Magnitude::Int(v * k),
            Magnitude::Scaled { coeff, exp2 } => Magnitude::Scaled {
                coeff: coeff * k,
                exp2: exp2.clone(),
            }
            .normalize(),
        }
    }

    pub fn as_int(&self) -> Option<&BigUint> {
        match self {
            Magnitude::Int(v) => Some(v),
            Magnitude::Scaled { .. } => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Magnitude::Int(v) => biguint_json(v),
            Magnitude::Scaled { coeff, exp2 } => serde_json::json!({
                "coeff": biguint_json(coeff),
                "exp2": biguint_json(exp2),
            }),
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Magnitude> {
        if let Some(obj) = v.as_object() {
            if obj.contains_key("coeff") {
                let coeff = biguint_from_json(&obj["coeff"])?;
                let exp2 = biguint_from_json(
                    obj.get("exp2")
                        .ok_or_else(|| Error::Serialization("missing exp2".into()))?,
                )?;
                return Ok(Magnitude::Scaled { coeff, exp2 }.normalize());
            }
        }
        Ok(Magnitude::Int(biguint_from_json(v)?))
    }
}

/// Compare `a` against `coeff * 2^exp2` where the shift is typically huge.
fn cmp_int_scaled(a: &BigUint, coeff: &BigUint, exp2: &BigUint) -> Ordering {
    if coeff.is_zero() {
        return if a.is_zero() {
            Ordering::Equal
        } else {
            Ordering::Greater
        };
    }
    cmp_shifted(coeff, exp2, a).reverse()
}

/// Compare `c << d` against `b` without materializing absurd shifts.
fn cmp_shifted(c: &BigUint, d: &BigUint, b: &BigUint) -> Ordering {
    if c.is_zero() {
        return BigUint::zero().cmp(b);
    }
    // bits(c << d) = bits(c) + d
    let lhs_bits = BigUint::from(c.bits()) + d;
    let rhs_bits = BigUint::from(b.bits());
    match lhs_bits.cmp(&rhs_bits) {
        Ordering::Less => Ordering::Less,
        Ordering::Greater => Ordering::Greater,
        Ordering::Equal => {
            // equal bit lengths, so d fits comfortably in u64 here
            let sh: u64 = d.try_into().unwrap();
            (c << sh).cmp(b)
        }
    }
}

/// A positive integer, possibly in exponent form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExpNum {
    Int(BigUint),
    Pow { base: BigUint, exp: Magnitude },
}

impl ExpNum {
    pub fn from_u64(v: u64) -> Self {
        ExpNum::Int(BigUint::from(v))
    }

    pub fn one() -> Self {
        ExpNum::Int(BigUint::one())
    }

    pub fn pow2(exp: Magnitude) -> Self {
        ExpNum::Pow {
            base: BigUint::from(2u32),
            exp,
        }
        .normalize()
    }

    pub fn is_one(&self) -> bool {
        matches!(self, ExpNum::Int(v) if v.is_one())
    }

    /// Canonical form: bases reduced to non-perfect-powers, small powers
    /// materialized.
    pub fn normalize(self) -> ExpNum {
        match self {
            ExpNum::Int(v) => ExpNum::Int(v),
            ExpNum::Pow { base, exp } => {
                let exp = exp.normalize();
                if exp.is_zero() {
                    return ExpNum::Int(BigUint::one());
                }
                if base.is_zero() || base.is_one() {
                    return ExpNum::Int(base);
                }
                let (base, factor) = primitive_base(base);
                let exp = if factor == 1 {
                    exp
                } else {
                    exp.mul_uint(&BigUint::from(factor))
                };
                if let Magnitude::Int(e) = &exp {
                    if e.is_one() {
                        return ExpNum::Int(base);
                    }
                    if e.bits() <= 32 {
                        let e64: u64 = e.try_into().unwrap();
                        if e64 * base.bits() <= MATERIALIZE_BITS {
                            return ExpNum::Int(base.pow(e64 as u32));
                        }
                    }
                }
                ExpNum::Pow { base, exp }
            }
        }
    }

    pub fn to_biguint(&self) -> Option<BigUint> {
        match self.clone().normalize() {
            ExpNum::Int(v) => Some(v),
            ExpNum::Pow { .. } => None,
        }
    }

    /// log2 of the value when it is an exact power of two.
    pub fn log2_exact(&self) -> Option<Magnitude> {
        match self.clone().normalize() {
            ExpNum::Int(v) => {
                if !v.is_zero() && v.count_ones() == 1 {
                    Some(Magnitude::Int(BigUint::from(v.trailing_zeros().unwrap())))
                } else {
                    None
                }
            }
            ExpNum::Pow { base, exp } => {
                if base == BigUint::from(2u32) {
                    Some(exp)
                } else {
                    None
                }
            }
        }
    }

    pub fn checked_mul(&self, other: &ExpNum) -> Result<ExpNum> {
        let a = self.clone().normalize();
        let b = other.clone().normalize();
        match (&a, &b) {
            (ExpNum::Int(x), ExpNum::Int(y)) => {
                if x.bits() + y.bits() <= MATERIALIZE_BITS {
                    return Ok(ExpNum::Int(x * y));
                }
            }
            _ => {}
        }
        match (a.log2_exact(), b.log2_exact()) {
            (Some(e1), Some(e2)) => Ok(ExpNum::pow2(e1.checked_add(&e2)?)),
            _ => Err(Error::Capacity("product not representable".into())),
        }
    }

    pub fn checked_pow(&self, k: &BigUint) -> Result<ExpNum> {
        if k.is_zero() {
            return Ok(ExpNum::one());
        }
        match self.clone().normalize() {
            ExpNum::Int(v) => Ok(ExpNum::Pow {
                base: v,
                exp: Magnitude::Int(k.clone()),
            }
            .normalize()),
            ExpNum::Pow { base, exp } => Ok(ExpNum::Pow {
                base,
                exp: exp.mul_uint(k),
            }
            .normalize()),
        }
    }

    /// Raise to the power of another exponent-form number, representable
    /// only in the base-2 world where it is needed.
    pub fn checked_pow_num(&self, k: &ExpNum) -> Result<ExpNum> {
        if let Some(kv) = k.to_biguint() {
            return self.checked_pow(&kv);
        }
        let e = self
            .log2_exact()
            .ok_or_else(|| Error::Capacity("tower power needs base 2".into()))?;
        let ei = e
            .as_int()
            .ok_or_else(|| Error::Capacity("tower power exponent too deep".into()))?
            .clone();
        let k2 = k
            .log2_exact()
            .ok_or_else(|| Error::Capacity("tower power needs base 2".into()))?;
        let k2i = k2
            .as_int()
            .ok_or_else(|| Error::Capacity("tower power exponent too deep".into()))?
            .clone();
        // (2^ei)^(2^k2i) = 2^(ei * 2^k2i)
        Ok(ExpNum::pow2(
            Magnitude::Scaled {
                coeff: ei,
                exp2: k2i,
            }
            .normalize(),
        ))
    }

    pub fn compare(&self, other: &ExpNum) -> Result<Ordering> {
        let a = self.clone().normalize();
        let b = other.clone().normalize();
        match (&a, &b) {
            (ExpNum::Int(x), ExpNum::Int(y)) => Ok(x.cmp(y)),
            (ExpNum::Int(x), ExpNum::Pow { base, exp }) => cmp_int_pow(x, base, exp),
            (ExpNum::Pow { base, exp }, ExpNum::Int(y)) => {
                cmp_int_pow(y, base, exp).map(Ordering::reverse)
            }
            (
                ExpNum::Pow { base: b1, exp: e1 },
                ExpNum::Pow { base: b2, exp: e2 },
            ) => {
                if b1 == b2 {
                    return Ok(e1.compare(e2));
                }
                // distinct primitive bases can never give equal values
                let bl1 = BigUint::from(b1.bits() - 1);
                let bl2 = BigUint::from(b2.bits());
                if e1.mul_uint(&bl1).compare(&e2.mul_uint(&bl2)) != Ordering::Less {
                    return Ok(Ordering::Greater);
                }
                let bl1h = BigUint::from(b1.bits());
                let bl2l = BigUint::from(b2.bits() - 1);
                if e1.mul_uint(&bl1h).compare(&e2.mul_uint(&bl2l)) != Ordering::Greater {
                    return Ok(Ordering::Less);
                }
                cmp_by_log(b1, e1, b2, e2)
            }
        }
    }
}

fn cmp_int_pow(x: &BigUint, base: &BigUint, exp: &Magnitude) -> Result<Ordering> {
    if x.is_zero() {
        return Ok(Ordering::Less);
    }
    if base == &BigUint::from(2u32) {
        // bits(2^e) = e + 1 exactly
        let xb = BigUint::from(x.bits() - 1);
        return Ok(match Magnitude::Int(xb).compare(exp) {
            Ordering::Less => Ordering::Less,
            Ordering::Greater => Ordering::Greater,
            Ordering::Equal => {
                if x.count_ones() == 1 {
                    Ordering::Equal
                } else {
                    Ordering::Greater
                }
            }
        });
    }
    // bits(base^e) > e*(bits(base)-1) >= bits(x)  =>  base^e > x
    let lo = exp.mul_uint(&BigUint::from(base.bits() - 1));
    if lo.compare(&Magnitude::Int(BigUint::from(x.bits()))) != Ordering::Less {
        return Ok(Ordering::Greater);
    }
    let hi = exp.mul_uint(&BigUint::from(base.bits()));
    if hi.compare(&Magnitude::Int(BigUint::from(x.bits() - 1))) != Ordering::Greater {
        return Ok(Ordering::Less);
    }
    cmp_by_log(x, &Magnitude::Int(BigUint::one()), base, exp)
}

/// Compare `b1^e1` with `b2^e2` through exact interval enclosures of the
/// base-2 logarithms, refining precision until the intervals separate.
fn cmp_by_log(b1: &BigUint, e1: &Magnitude, b2: &BigUint, e2: &Magnitude) -> Result<Ordering> {
    for p in [64usize, 128, 256, 512] {
        let (lo1, hi1) = log2_bounds(b1, p);
        let (lo2, hi2) = log2_bounds(b2, p);
        // compare e1*log2(b1) with e2*log2(b2), both scaled by 2^p
        if e1.mul_uint(&lo1).compare(&e2.mul_uint(&hi2)) == Ordering::Greater {
            return Ok(Ordering::Greater);
        }
        if e1.mul_uint(&hi1).compare(&e2.mul_uint(&lo2)) == Ordering::Less {
            return Ok(Ordering::Less);
        }
    }
    Err(Error::Capacity(
        "exponent-form comparison undecided at maximum log precision".into(),
    ))
}

/// `(lo, hi)` with `lo/2^p <= log2(b) <= hi/2^p`, for `b >= 1`.
fn log2_bounds(b: &BigUint, p: usize) -> (BigUint, BigUint) {
    let n = b.bits() - 1;
    let w = (p as u64) + 32;
    let one = BigUint::one();
    // mantissa interval for b / 2^n, scaled by 2^w, value in [2^w, 2^{w+1})
    let scaled = b << w;
    let mut xlo = &scaled >> n;
    let mut xhi = if (&xlo << n) == scaled {
        xlo.clone()
    } else {
        &xlo + &one
    };
    let mut lo = BigUint::from(n) << p;
    let mut hi = lo.clone();
    let bound = BigUint::one() << (w + 1);
    for i in (0..p).rev() {
        xlo = (&xlo * &xlo) >> w;
        xhi = ((&xhi * &xhi) >> w) + &one;
        let bit_lo = xlo >= bound;
        let bit_hi = xhi >= bound;
        if bit_lo {
            xlo >>= 1;
            lo += BigUint::one() << i;
        }
        if bit_hi {
            xhi >>= 1;
            hi += BigUint::one() << i;
        }
        if bit_lo != bit_hi {
            // intervals diverged; pad the upper bound and stop
            hi += (BigUint::one() << i) - &one;
            break;
        }
    }
    (lo, hi + &one)
}

/// Strip perfect powers: returns `(root, k)` with `root^k == b` and `root`
/// not itself a perfect power (for bases of tractable size).
fn primitive_base(b: BigUint) -> (BigUint, u64) {
    if b.bits() > 4096 {
        return (b, 1);
    }
    let mut base = b;
    let mut factor = 1u64;
    'outer: loop {
        let max_k = base.bits().min(64);
        for k in (2..=max_k).rev() {
            let r = base.nth_root(k as u32);
            if r.pow(k as u32) == base && !r.is_one() {
                base = r;
                factor *= k;
                continue 'outer;
            }
        }
        return (base, factor);
    }
}

fn biguint_json(v: &BigUint) -> serde_json::Value {
    if v.bits() <= 53 {
        let n: u64 = v.try_into().unwrap();
        serde_json::json!(n)
    } else {
        serde_json::json!(v.to_string())
    }
}

fn biguint_from_json(v: &serde_json::Value) -> Result<BigUint> {
    if let Some(n) = v.as_u64() {
        return Ok(BigUint::from(n));
    }
    if let Some(s) = v.as_str() {
        return s
            .parse::<BigUint>()
            .map_err(|e| Error::Serialization(format!("bad integer literal: {e}")));
    }
    Err(Error::Serialization(format!("expected integer, got {v}")))
}

impl ExpNum {
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            ExpNum::Int(v) => biguint_json(v),
            ExpNum::Pow { base, exp } => serde_json::json!({
                "base": biguint_json(base),
                "exp": exp.to_json(),
            }),
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Result<ExpNum> {
        if let Some(obj) = v.as_object() {
            if obj.contains_key("base") {
                let base = biguint_from_json(&obj["base"])?;
                let exp = Magnitude::from_json(
                    obj.get("exp")
                        .ok_or_else(|| Error::Serialization("missing exp".into()))?,
                )?;
                return Ok(ExpNum::Pow { base, exp }.normalize());
            }
        }
        Ok(ExpNum::Int(biguint_from_json(v)?))
    }
}

/// One level of a literal profile: the value and the running product of all
/// earlier values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiteralLevel {
    pub m: ExpNum,
    pub m_circ: ExpNum,
}

/// One level of a scaled desk profile, with explicit thresholds and a
/// rational edge probability.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScaledLevel {
    pub m: usize,
    pub small: usize,
    pub large: usize,
    pub p_num: u64,
    pub p_den: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Levels {
    Literal(Vec<LiteralLevel>),
    Scaled(Vec<ScaledLevel>),
}

/// A growth profile: either the literal fast sequence in exponent form, or
/// a scaled desk instance with explicit small/large thresholds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FastProfile {
    pub levels: Levels,
    pub i_star: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Check {
    Pass,
    Fail { level: usize, reason: String },
}

impl Check {
    pub fn is_pass(&self) -> bool {
        matches!(self, Check::Pass)
    }
}

impl FastProfile {
    pub fn depth(&self) -> usize {
        match &self.levels {
            Levels::Literal(v) => v.len(),
            Levels::Scaled(v) => v.len(),
        }
    }

    pub fn is_scaled(&self) -> bool {
        matches!(self.levels, Levels::Scaled(_))
    }

    pub fn scaled_level(&self, i: usize) -> Result<&ScaledLevel> {
        match &self.levels {
            Levels::Scaled(v) => v
                .get(i)
                .ok_or_else(|| Error::InvalidQuery(format!("no level {i} in profile"))),
            Levels::Literal(_) => Err(Error::InvalidQuery(
                "literal profile has no scaled levels".into(),
            )),
        }
    }

    pub fn width(&self, i: usize) -> Result<usize> {
        match &self.levels {
            Levels::Scaled(v) => v
                .get(i)
                .map(|l| l.m)
                .ok_or_else(|| Error::InvalidQuery(format!("no level {i} in profile"))),
            Levels::Literal(v) => {
                let l = v
                    .get(i)
                    .ok_or_else(|| Error::InvalidQuery(format!("no level {i} in profile")))?;
                let m = l
                    .m
                    .to_biguint()
                    .ok_or_else(|| Error::Capacity(format!("level {i} width not materializable")))?;
                (&m).try_into()
                    .map_err(|_| Error::Capacity(format!("level {i} width exceeds usize")))
            }
        }
    }

    /// Product of all widths up to (excluding) level `i`, for tree sizing.
    pub fn level_product(&self, i: usize) -> Result<usize> {
        let mut p = 1usize;
        for k in 0..i {
            p = p
                .checked_mul(self.width(k)?)
                .ok_or_else(|| Error::Capacity("level product overflow".into()))?;
        }
        Ok(p)
    }

    /// Small-side threshold at level `i`: `(m_circ_i)^(i^i)`.
    pub fn small_threshold(&self, i: usize) -> Result<ExpNum> {
        match &self.levels {
            Levels::Scaled(v) => {
                let l = v
                    .get(i)
                    .ok_or_else(|| Error::InvalidQuery(format!("no level {i}")))?;
                Ok(ExpNum::from_u64(l.small as u64))
            }
            Levels::Literal(v) => {
                let l = v
                    .get(i)
                    .ok_or_else(|| Error::InvalidQuery(format!("no level {i}")))?;
                l.m_circ.checked_pow(&BigUint::from(self_power(i)))
            }
        }
    }

    /// Large-side threshold at level `i`: `m_i / (m_circ_i)^(i^i)`.
    pub fn large_threshold(&self, i: usize) -> Result<ExpNum> {
        match &self.levels {
            Levels::Scaled(v) => {
                let l = v
                    .get(i)
                    .ok_or_else(|| Error::InvalidQuery(format!("no level {i}")))?;
                Ok(ExpNum::from_u64(l.large as u64))
            }
            Levels::Literal(v) => {
                let l = v
                    .get(i)
                    .ok_or_else(|| Error::InvalidQuery(format!("no level {i}")))?;
                let small = l.m_circ.checked_pow(&BigUint::from(self_power(i)))?;
                if let (Some(mv), Some(sv)) = (l.m.to_biguint(), small.to_biguint()) {
                    if (&mv % &sv).is_zero() {
                        return Ok(ExpNum::Int(mv / sv));
                    }
                    return Err(Error::InvalidThresholds(
                        "large threshold is not an integer".into(),
                    ));
                }
                let em = l
                    .m
                    .log2_exact()
                    .ok_or_else(|| Error::Capacity("large threshold needs base-2 level".into()))?;
                let es = small
                    .log2_exact()
                    .ok_or_else(|| Error::Capacity("large threshold needs base-2 level".into()))?;
                match (em, es) {
                    (Magnitude::Int(a), Magnitude::Int(b)) => {
                        if a < b {
                            return Err(Error::InvalidThresholds(
                                "large threshold below one".into(),
                            ));
                        }
                        Ok(ExpNum::pow2(Magnitude::Int(a - b)))
                    }
                    _ => Err(Error::Capacity(
                        "large threshold exponent not representable".into(),
                    )),
                }
            }
        }
    }
}

/// `i^i` with the `0^0 = 1` convention used at level zero.
pub fn self_power(i: usize) -> u64 {
    if i == 0 {
        1
    } else {
        (i as u64).pow(i as u32)
    }
}

/// Lower bound a fast value at level `i` must dominate:
/// `((m_circ)^(i^i))^(4 * (m_circ)^(i^i))`.
fn growth_bound(m_circ: &ExpNum, i: usize) -> Result<ExpNum> {
    let a = m_circ.checked_pow(&BigUint::from(self_power(i)))?;
    let four_a = a.checked_mul(&ExpNum::from_u64(4))?;
    a.checked_pow_num(&four_a)
}

/// Minimal literal fast sequence of the given depth, all in exponent form.
///
/// Depth is capped at 4: the level-4 entry would need a third tier of
/// exponent nesting.
pub fn literal_fast_prefix(depth: usize) -> Result<FastProfile> {
    if depth == 0 {
        return Err(Error::InvalidQuery("depth must be positive".into()));
    }
    if depth > 4 {
        return Err(Error::Capacity(
            "literal prefix beyond depth 4 needs deeper exponent nesting".into(),
        ));
    }
    let mut levels = Vec::new();
    let mut m_circ = ExpNum::one();
    for i in 0..depth {
        let m = if i == 0 {
            // the bound degenerates to 1 and the value must exceed 1
            ExpNum::from_u64(2)
        } else {
            growth_bound(&m_circ, i)?
        };
        levels.push(LiteralLevel {
            m: m.clone(),
            m_circ: m_circ.clone(),
        });
        // the product past the last level is never stored, and at depth 4
        // its exponent would outgrow the two-tier magnitude form
        if i + 1 < depth {
            m_circ = m_circ.checked_mul(&m)?;
        }
    }
    Ok(FastProfile {
        levels: Levels::Literal(levels),
        i_star: 1,
    })
}

/// Verify the fast-growth condition (literal mode) or the scaled threshold
/// invariants (scaled mode) across all levels of a profile.
pub fn check_fast(profile: &FastProfile) -> Result<Check> {
    match &profile.levels {
        Levels::Literal(levels) => {
            let mut m_circ = ExpNum::one();
            for (i, l) in levels.iter().enumerate() {
                if l.m_circ != m_circ.clone().normalize() {
                    return Ok(Check::Fail {
                        level: i,
                        reason: "running product disagrees with stored m_circ".into(),
                    });
                }
                if i == 0 {
                    if l.m.compare(&ExpNum::one())? != Ordering::Greater {
                        return Ok(Check::Fail {
                            level: 0,
                            reason: "level 0 value must exceed 1".into(),
                        });
                    }
                } else {
                    let bound = growth_bound(&m_circ, i)?;
                    if l.m.compare(&bound)? == Ordering::Less {
                        return Ok(Check::Fail {
                            level: i,
                            reason: "value below the growth bound".into(),
                        });
                    }
                }
                if i + 1 < levels.len() {
                    m_circ = m_circ.checked_mul(&l.m)?;
                }
            }
            Ok(Check::Pass)
        }
        Levels::Scaled(levels) => {
            for (i, l) in levels.iter().enumerate() {
                if i == 0 && l.m < 2 {
                    return Ok(Check::Fail {
                        level: 0,
                        reason: "level 0 width must exceed 1".into(),
                    });
                }
                if l.small < i + 2 || l.small >= l.large || l.large > l.m {
                    return Ok(Check::Fail {
                        level: i,
                        reason: format!(
                            "need {} <= small < large <= m, got small={} large={} m={}",
                            i + 2,
                            l.small,
                            l.large,
                            l.m
                        ),
                    });
                }
                if l.p_num == 0 || l.p_num > l.p_den {
                    return Ok(Check::Fail {
                        level: i,
                        reason: "edge probability must lie in (0, 1]".into(),
                    });
                }
                if i > profile.i_star {
                    let prev = &levels[i - 1];
                    if i - 1 >= profile.i_star && (l.small < prev.small || l.large < prev.large) {
                        return Ok(Check::Fail {
                            level: i,
                            reason: "thresholds must be nondecreasing above i_star".into(),
                        });
                    }
                }
            }
            Ok(Check::Pass)
        }
    }
}

/// Growth exponent `g(i) = 2 * (m_circ_i)^(i^i)`.
pub fn growth_exponent(profile: &FastProfile, i: usize) -> Result<ExpNum> {
    match &profile.levels {
        Levels::Literal(levels) => {
            let l = levels
                .get(i)
                .ok_or_else(|| Error::InvalidQuery(format!("no level {i}")))?;
            l.m_circ
                .checked_pow(&BigUint::from(self_power(i)))?
                .checked_mul(&ExpNum::from_u64(2))
        }
        Levels::Scaled(levels) => {
            if i >= levels.len() {
                return Err(Error::InvalidQuery(format!("no level {i}")));
            }
            let mut m_circ = ExpNum::one();
            for l in &levels[..i] {
                m_circ = m_circ.checked_mul(&ExpNum::from_u64(l.m as u64))?;
            }
            m_circ
                .checked_pow(&BigUint::from(self_power(i)))?
                .checked_mul(&ExpNum::from_u64(2))
        }
    }
}

/// Does `(m_circ_i)^(i^i) < m_i^(1/4)` hold?  Decided exactly by comparing
/// fourth powers in exponent form.
pub fn check_obs_four(profile: &FastProfile, i: usize) -> Result<bool> {
    match &profile.levels {
        Levels::Literal(levels) => {
            let l = levels
                .get(i)
                .ok_or_else(|| Error::InvalidQuery(format!("no level {i}")))?;
            let lhs = l
                .m_circ
                .checked_pow(&BigUint::from(4 * self_power(i)))?;
            Ok(lhs.compare(&l.m)? == Ordering::Less)
        }
        Levels::Scaled(levels) => {
            let l = levels
                .get(i)
                .ok_or_else(|| Error::InvalidQuery(format!("no level {i}")))?;
            let mut m_circ = ExpNum::one();
            for s in &levels[..i] {
                m_circ = m_circ.checked_mul(&ExpNum::from_u64(s.m as u64))?;
            }
            let lhs = m_circ.checked_pow(&BigUint::from(4 * self_power(i)))?;
            Ok(lhs.compare(&ExpNum::from_u64(l.m as u64))? == Ordering::Less)
        }
    }
}

/// Edge probability `m_i^(-1/g(i))` as an exact rational `(num, den)`.
///
/// Literal mode resolves exact power-of-two cases (and materializable
/// roots); scaled mode returns the stored override.
pub fn edge_probability(profile: &FastProfile, i: usize) -> Result<(BigUint, BigUint)> {
    match &profile.levels {
        Levels::Scaled(levels) => {
            let l = levels
                .get(i)
                .ok_or_else(|| Error::InvalidQuery(format!("no level {i}")))?;
            Ok((BigUint::from(l.p_num), BigUint::from(l.p_den)))
        }
        Levels::Literal(levels) => {
            let l = levels
                .get(i)
                .ok_or_else(|| Error::InvalidQuery(format!("no level {i}")))?;
            let g = growth_exponent(profile, i)?;
            if let (Some(e), Some(gv)) = (l.m.log2_exact(), g.to_biguint()) {
                if let Some(ei) = e.as_int() {
                    if (ei % &gv).is_zero() {
                        let root = ei / &gv;
                        let root_u: u64 = (&root)
                            .try_into()
                            .map_err(|_| Error::Capacity("denominator too large".into()))?;
                        if root_u > MATERIALIZE_BITS {
                            return Err(Error::Capacity("denominator too large".into()));
                        }
                        return Ok((BigUint::one(), BigUint::one() << root_u));
                    }
                }
            }
            if let (Some(mv), Some(gv)) = (l.m.to_biguint(), g.to_biguint()) {
                let gu: u32 = (&gv)
                    .try_into()
                    .map_err(|_| Error::Capacity("growth exponent too large for root".into()))?;
                let r = mv.nth_root(gu);
                if r.pow(gu) == mv {
                    return Ok((BigUint::one(), r));
                }
                // 2^-16 precision on the root
                let shifted = mv << (16u64 * gu as u64);
                let r = shifted.nth_root(gu);
                return Ok((BigUint::one() << 16, r));
            }
            Err(Error::Capacity(
                "edge probability not representable at this level".into(),
            ))
        }
    }
}

impl FastProfile {
    pub fn to_json(&self) -> serde_json::Value {
        match &self.levels {
            Levels::Literal(levels) => serde_json::json!({
                "version": 1,
                "mode": "literal",
                "i_star": self.i_star,
                "levels": levels.iter().map(|l| serde_json::json!({
                    "m": l.m.to_json(),
                    "m_circ": l.m_circ.to_json(),
                })).collect::<Vec<_>>(),
            }),
            Levels::Scaled(levels) => serde_json::json!({
                "version": 1,
                "mode": "scaled",
                "i_star": self.i_star,
                "levels": levels.iter().map(|l| serde_json::json!({
                    "m": l.m,
                    "small": l.small,
                    "large": l.large,
                    "p": {"num": l.p_num, "den": l.p_den},
                })).collect::<Vec<_>>(),
            }),
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Result<FastProfile> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Serialization("profile must be an object".into()))?;
        if obj.get("version").and_then(|x| x.as_u64()) != Some(1) {
            return Err(Error::Serialization("unsupported profile version".into()));
        }
        let i_star = obj
            .get("i_star")
            .and_then(|x| x.as_u64())
            .ok_or_else(|| Error::Serialization("missing i_star".into()))? as usize;
        let raw_levels = obj
            .get("levels")
            .and_then(|x| x.as_array())
            .ok_or_else(|| Error::Serialization("missing levels".into()))?;
        match obj.get("mode").and_then(|x| x.as_str()) {
            Some("literal") => {
                let mut levels = Vec::new();
                for l in raw_levels {
                    levels.push(LiteralLevel {
                        m: ExpNum::from_json(
                            l.get("m")
                                .ok_or_else(|| Error::Serialization("missing m".into()))?,
                        )?,
                        m_circ: ExpNum::from_json(
                            l.get("m_circ")
                                .ok_or_else(|| Error::Serialization("missing m_circ".into()))?,
                        )?,
                    });
                }
                Ok(FastProfile {
                    levels: Levels::Literal(levels),
                    i_star,
                })
            }
            Some("scaled") => {
                let mut levels = Vec::new();
                for l in raw_levels {
                    let get = |k: &str| -> Result<u64> {
                        l.get(k)
                            .and_then(|x| x.as_u64())
                            .ok_or_else(|| Error::Serialization(format!("missing {k}")))
                    };
                    let p = l
                        .get("p")
                        .ok_or_else(|| Error::Serialization("missing p".into()))?;
                    levels.push(ScaledLevel {
                        m: get("m")? as usize,
                        small: get("small")? as usize,
                        large: get("large")? as usize,
                        p_num: p
                            .get("num")
                            .and_then(|x| x.as_u64())
                            .ok_or_else(|| Error::Serialization("missing p.num".into()))?,
                        p_den: p
                            .get("den")
                            .and_then(|x| x.as_u64())
                            .ok_or_else(|| Error::Serialization("missing p.den".into()))?,
                    });
                }
                Ok(FastProfile {
                    levels: Levels::Scaled(levels),
                    i_star,
                })
            }
            _ => Err(Error::Serialization("unknown profile mode".into())),
        }
    }

    /// Four-level scaled profile tuned for reliable forging at desk scale.
    pub fn default_desk() -> FastProfile {
        FastProfile {
            levels: Levels::Scaled(vec![
                ScaledLevel { m: 4, small: 2, large: 4, p_num: 1, p_den: 1 },
                ScaledLevel { m: 12, small: 3, large: 12, p_num: 4, p_den: 5 },
                ScaledLevel { m: 12, small: 4, large: 12, p_num: 41, p_den: 50 },
                ScaledLevel { m: 12, small: 5, large: 12, p_num: 17, p_den: 20 },
            ]),
            i_star: 1,
        }
    }

    /// Two-level scaled profile small enough for atom-exact algebra work.
    pub fn default_tiny() -> FastProfile {
        FastProfile {
            levels: Levels::Scaled(vec![
                ScaledLevel { m: 3, small: 2, large: 3, p_num: 1, p_den: 1 },
                ScaledLevel { m: 4, small: 3, large: 4, p_num: 7, p_den: 10 },
            ]),
            i_star: 1,
        }
    }
}
