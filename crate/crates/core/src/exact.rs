//! Dyadic rationals, outward-rounded intervals and real numbers as
//! interval streams.
//!
//! Every finite-precision answer in the crate is a [`Interval`] with
//! dyadic endpoints. A real number is a [`RealStream`]: a map from a
//! precision `k` to an interval of width at most `2^-k` containing it.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExactError {
    #[error("series tail bound did not reach 2^-{needed} within {steps} steps")]
    Budget { needed: u32, steps: usize },
    #[error("division by an interval containing zero")]
    DivisionByZero,
    #[error("cannot parse dyadic rational from {0:?}")]
    Parse(String),
}

/// `mantissa * 2^exponent`, kept canonical: the mantissa is odd, or zero with
/// exponent zero. Canonical form makes derived equality structural.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Dyadic {
    mant: BigInt,
    exp: i64,
}

impl Dyadic {
    pub fn new(mant: impl Into<BigInt>, exp: i64) -> Self {
        let mant = mant.into();
        match mant.trailing_zeros() {
            None => Dyadic { mant: BigInt::zero(), exp: 0 },
            Some(0) => Dyadic { mant, exp },
            Some(tz) => Dyadic { mant: mant >> tz as usize, exp: exp + tz as i64 },
        }
    }

    pub fn zero() -> Self {
        Dyadic { mant: BigInt::zero(), exp: 0 }
    }

    pub fn one() -> Self {
        Dyadic { mant: BigInt::one(), exp: 0 }
    }

    pub fn from_i64(v: i64) -> Self {
        Dyadic::new(v, 0)
    }

    /// `2^e`
    pub fn pow2(e: i64) -> Self {
        Dyadic { mant: BigInt::one(), exp: e }
    }

    /// `n / 2^e`, the common way constants are written.
    pub fn frac(n: i64, e: u32) -> Self {
        Dyadic::new(n, -(e as i64))
    }

    pub fn mantissa(&self) -> &BigInt {
        &self.mant
    }

    pub fn exponent(&self) -> i64 {
        self.exp
    }

    pub fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.mant.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.mant.is_positive()
    }

    pub fn abs(&self) -> Self {
        Dyadic { mant: self.mant.abs(), exp: self.exp }
    }

    /// Multiply by `2^e`.
    pub fn shl(&self, e: i64) -> Self {
        if self.is_zero() {
            return Dyadic::zero();
        }
        Dyadic { mant: self.mant.clone(), exp: self.exp + e }
    }

    /// Scaled integer `self * 2^p` as an exact rational `num / 2^s` with `s >= 0`.
    fn scaled(&self, p: i64) -> (BigInt, u64) {
        let e = self.exp + p;
        if e >= 0 {
            (self.mant.clone() << e as usize, 0)
        } else {
            (self.mant.clone(), (-e) as u64)
        }
    }

    /// Largest multiple of `2^-p` not above `self`.
    pub fn floor_at(&self, p: i64) -> Self {
        let (num, s) = self.scaled(p);
        if s == 0 {
            return self.clone();
        }
        Dyadic::new(num.div_floor(&(BigInt::one() << s as usize)), -p)
    }

    /// Smallest multiple of `2^-p` not below `self`.
    pub fn ceil_at(&self, p: i64) -> Self {
        let (num, s) = self.scaled(p);
        if s == 0 {
            return self.clone();
        }
        Dyadic::new(num.div_ceil(&(BigInt::one() << s as usize)), -p)
    }

    pub fn floor_int(&self) -> BigInt {
        let (num, s) = self.scaled(0);
        num.div_floor(&(BigInt::one() << s as usize))
    }

    /// `a / b` rounded down to a multiple of `2^-p`.
    pub fn div_floor(a: &Dyadic, b: &Dyadic, p: i64) -> Dyadic {
        let (n, d) = Self::quotient_parts(a, b, p);
        Dyadic::new(n.div_floor(&d), -p)
    }

    /// `a / b` rounded up to a multiple of `2^-p`.
    pub fn div_ceil(a: &Dyadic, b: &Dyadic, p: i64) -> Dyadic {
        let (n, d) = Self::quotient_parts(a, b, p);
        Dyadic::new(n.div_ceil(&d), -p)
    }

    // a/b * 2^p = (ma * 2^(ea - eb + p)) / mb, written as n/d with d > 0
    fn quotient_parts(a: &Dyadic, b: &Dyadic, p: i64) -> (BigInt, BigInt) {
        assert!(!b.is_zero(), "dyadic division by zero");
        let shift = a.exp - b.exp + p;
        let (mut n, mut d) = if shift >= 0 {
            (a.mant.clone() << shift as usize, b.mant.clone())
        } else {
            (a.mant.clone(), b.mant.clone() << (-shift) as usize)
        };
        if d.is_negative() {
            n = -n;
            d = -d;
        }
        (n, d)
    }

    /// `floor(sqrt(self) * 2^p) * 2^-p` for `self >= 0`.
    pub fn sqrt_floor(&self, p: i64) -> Dyadic {
        assert!(!self.is_negative(), "square root of a negative dyadic");
        let (num, s) = self.scaled(2 * p);
        let z = num.div_floor(&(BigInt::one() << s as usize));
        Dyadic::new(z.sqrt(), -p)
    }

    /// `ceil(sqrt(self) * 2^p) * 2^-p` for `self >= 0`.
    pub fn sqrt_ceil(&self, p: i64) -> Dyadic {
        assert!(!self.is_negative(), "square root of a negative dyadic");
        let (num, s) = self.scaled(2 * p);
        let z = num.div_ceil(&(BigInt::one() << s as usize));
        let mut r = z.sqrt();
        if &r * &r < z {
            r += 1;
        }
        Dyadic::new(r, -p)
    }

    /// Smallest `j` with `|self| <= 2^j`; `None` for zero.
    pub fn ceil_log2(&self) -> Option<i64> {
        if self.is_zero() {
            return None;
        }
        let m = self.mant.abs();
        let bits = m.bits() as i64;
        // |m| is odd, so it is a power of two only when it equals 1
        let j = if m.is_one() { 0 } else { bits };
        Some(j + self.exp)
    }

    /// Lossy conversion for reporting only.
    pub fn to_f64(&self) -> f64 {
        let m = self.mant.to_f64().unwrap_or(f64::NAN);
        m * (2f64).powi(self.exp.clamp(i32::MIN as i64, i32::MAX as i64) as i32)
    }

    pub fn to_i64(&self) -> Option<i64> {
        if self.exp < 0 {
            return None;
        }
        (self.mant.clone() << self.exp as usize).to_i64()
    }

    pub fn min(a: &Dyadic, b: &Dyadic) -> Dyadic {
        if a <= b { a.clone() } else { b.clone() }
    }

    pub fn max(a: &Dyadic, b: &Dyadic) -> Dyadic {
        if a >= b { a.clone() } else { b.clone() }
    }
}

impl Default for Dyadic {
    fn default() -> Self {
        Dyadic::zero()
    }
}

impl From<i64> for Dyadic {
    fn from(v: i64) -> Self {
        Dyadic::from_i64(v)
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.mant.sign(), other.mant.sign()) {
            (a, b) if a != b => return sign_rank(a).cmp(&sign_rank(b)),
            (Sign::NoSign, _) => return Ordering::Equal,
            _ => {}
        }
        let e = self.exp.min(other.exp);
        let a = &self.mant << (self.exp - e) as usize;
        let b = &other.mant << (other.exp - e) as usize;
        a.cmp(&b)
    }
}

fn sign_rank(s: Sign) -> i8 {
    match s {
        Sign::Minus => -1,
        Sign::NoSign => 0,
        Sign::Plus => 1,
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<'a> Add<&'a Dyadic> for &'a Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: &Dyadic) -> Dyadic {
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        let e = self.exp.min(rhs.exp);
        let a = &self.mant << (self.exp - e) as usize;
        let b = &rhs.mant << (rhs.exp - e) as usize;
        Dyadic::new(a + b, e)
    }
}

impl<'a> Sub<&'a Dyadic> for &'a Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: &Dyadic) -> Dyadic {
        self + &(-rhs)
    }
}

impl<'a> Mul<&'a Dyadic> for &'a Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: &Dyadic) -> Dyadic {
        if self.is_zero() || rhs.is_zero() {
            return Dyadic::zero();
        }
        // product of odd mantissas is odd, already canonical
        Dyadic { mant: &self.mant * &rhs.mant, exp: self.exp + rhs.exp }
    }
}

impl Neg for &Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        Dyadic { mant: -&self.mant, exp: self.exp }
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        -&self
    }
}

macro_rules! owned_binop {
    ($tr:ident, $m:ident) => {
        impl $tr<Dyadic> for Dyadic {
            type Output = Dyadic;
            fn $m(self, rhs: Dyadic) -> Dyadic {
                (&self).$m(&rhs)
            }
        }
        impl<'a> $tr<&'a Dyadic> for Dyadic {
            type Output = Dyadic;
            fn $m(self, rhs: &Dyadic) -> Dyadic {
                (&self).$m(rhs)
            }
        }
        impl<'a> $tr<Dyadic> for &'a Dyadic {
            type Output = Dyadic;
            fn $m(self, rhs: Dyadic) -> Dyadic {
                self.$m(&rhs)
            }
        }
    };
}
owned_binop!(Add, add);
owned_binop!(Sub, sub);
owned_binop!(Mul, mul);

impl std::iter::Sum for Dyadic {
    fn sum<I: Iterator<Item = Dyadic>>(iter: I) -> Dyadic {
        iter.fold(Dyadic::zero(), |a, b| a + b)
    }
}

/// Text form: an integer `n`, or `n/d` with `d` a power of two.
impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp >= 0 {
            write!(f, "{}", &self.mant << self.exp as usize)
        } else {
            write!(f, "{}/{}", self.mant, BigInt::one() << (-self.exp) as usize)
        }
    }
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Dyadic {
    type Err = ExactError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ExactError::Parse(s.to_string());
        let t = s.trim();
        match t.split_once('/') {
            None => t.parse::<BigInt>().map(|n| Dyadic::new(n, 0)).map_err(|_| bad()),
            Some((n, d)) => {
                let n: BigInt = n.trim().parse().map_err(|_| bad())?;
                let d: BigInt = d.trim().parse().map_err(|_| bad())?;
                if !d.is_positive() {
                    return Err(bad());
                }
                let tz = d.trailing_zeros().ok_or_else(bad)?;
                if d != BigInt::one() << tz as usize {
                    return Err(bad());
                }
                Ok(Dyadic::new(n, -(tz as i64)))
            }
        }
    }
}

/// Serialized as `{"mantissa": m, "exponent": e}`. The mantissa is a JSON
/// integer when it fits in `i64`, otherwise a decimal string.
impl Serialize for Dyadic {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Dyadic", 2)?;
        match self.mant.to_i64() {
            Some(m) => st.serialize_field("mantissa", &m)?,
            None => st.serialize_field("mantissa", &self.mant.to_string())?,
        }
        st.serialize_field("exponent", &self.exp)?;
        st.end()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DyadicRepr {
    Int(i64),
    Text(String),
    Parts { mantissa: MantRepr, exponent: i64 },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MantRepr {
    Int(i64),
    Text(String),
}

/// Accepts the serialized object form, a JSON integer, or text like `"3/8"`.
impl<'de> Deserialize<'de> for Dyadic {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match DyadicRepr::deserialize(d)? {
            DyadicRepr::Int(v) => Ok(Dyadic::from_i64(v)),
            DyadicRepr::Text(s) => s.parse().map_err(D::Error::custom),
            DyadicRepr::Parts { mantissa, exponent } => {
                let m: BigInt = match mantissa {
                    MantRepr::Int(v) => v.into(),
                    MantRepr::Text(s) => s.parse().map_err(D::Error::custom)?,
                };
                Ok(Dyadic::new(m, exponent))
            }
        }
    }
}

/// Closed interval `[lo, hi]` with dyadic endpoints.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub lo: Dyadic,
    pub hi: Dyadic,
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl Interval {
    pub fn new(lo: Dyadic, hi: Dyadic) -> Self {
        assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(d: Dyadic) -> Self {
        Interval { lo: d.clone(), hi: d }
    }

    pub fn zero() -> Self {
        Interval::point(Dyadic::zero())
    }

    pub fn one() -> Self {
        Interval::point(Dyadic::one())
    }

    /// `[-e, e]`
    pub fn symmetric(e: &Dyadic) -> Self {
        Interval::new(-e, e.clone())
    }

    pub fn width(&self) -> Dyadic {
        &self.hi - &self.lo
    }

    pub fn mid(&self) -> Dyadic {
        (&self.lo + &self.hi).shl(-1)
    }

    /// True when the width is at most `2^-k`.
    pub fn within(&self, k: u32) -> bool {
        self.width() <= Dyadic::pow2(-(k as i64))
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: &Dyadic) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    pub fn contains_interval(&self, o: &Interval) -> bool {
        self.lo <= o.lo && o.hi <= self.hi
    }

    pub fn intersect(&self, o: &Interval) -> Option<Interval> {
        let lo = Dyadic::max(&self.lo, &o.lo);
        let hi = Dyadic::min(&self.hi, &o.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn hull(&self, o: &Interval) -> Interval {
        Interval { lo: Dyadic::min(&self.lo, &o.lo), hi: Dyadic::max(&self.hi, &o.hi) }
    }

    pub fn widen(&self, e: &Dyadic) -> Interval {
        Interval { lo: &self.lo - e, hi: &self.hi + e }
    }

    /// Round endpoints outward to the `2^-p` grid.
    pub fn round_out(&self, p: i64) -> Interval {
        Interval { lo: self.lo.floor_at(p), hi: self.hi.ceil_at(p) }
    }

    pub fn scale(&self, c: &Dyadic) -> Interval {
        let a = &self.lo * c;
        let b = &self.hi * c;
        if c.is_negative() { Interval { lo: b, hi: a } } else { Interval { lo: a, hi: b } }
    }

    pub fn min(&self, o: &Interval) -> Interval {
        Interval { lo: Dyadic::min(&self.lo, &o.lo), hi: Dyadic::min(&self.hi, &o.hi) }
    }

    pub fn max(&self, o: &Interval) -> Interval {
        Interval { lo: Dyadic::max(&self.lo, &o.lo), hi: Dyadic::max(&self.hi, &o.hi) }
    }

    pub fn abs(&self) -> Interval {
        if !self.lo.is_negative() {
            self.clone()
        } else if !self.hi.is_positive() {
            Interval { lo: -&self.hi, hi: -&self.lo }
        } else {
            Interval { lo: Dyadic::zero(), hi: Dyadic::max(&-&self.lo, &self.hi) }
        }
    }

    /// Clamp every point into `[a, b]`.
    pub fn clamp(&self, a: &Dyadic, b: &Dyadic) -> Interval {
        let f = |x: &Dyadic| Dyadic::min(&Dyadic::max(x, a), b);
        Interval { lo: f(&self.lo), hi: f(&self.hi) }
    }

    /// Pointwise `max(x, 0)`, the truncated subtraction `x ∸ 0`.
    pub fn pos_part(&self) -> Interval {
        self.max(&Interval::zero())
    }

    /// Outward quotient, endpoints on the `2^-p` grid.
    pub fn div(&self, o: &Interval, p: i64) -> Result<Interval, ExactError> {
        if o.contains(&Dyadic::zero()) {
            return Err(ExactError::DivisionByZero);
        }
        let mut lo: Option<Dyadic> = None;
        let mut hi: Option<Dyadic> = None;
        for a in [&self.lo, &self.hi] {
            for b in [&o.lo, &o.hi] {
                let l = Dyadic::div_floor(a, b, p);
                let h = Dyadic::div_ceil(a, b, p);
                lo = Some(match lo {
                    Some(x) => Dyadic::min(&x, &l),
                    None => l,
                });
                hi = Some(match hi {
                    Some(x) => Dyadic::max(&x, &h),
                    None => h,
                });
            }
        }
        Ok(Interval { lo: lo.unwrap(), hi: hi.unwrap() })
    }

    /// Exact quotient by a dyadic when it is a power of two, outward otherwise.
    pub fn div_dyadic(&self, c: &Dyadic, p: i64) -> Interval {
        assert!(!c.is_zero(), "division by zero");
        if c.mantissa().abs().is_one() {
            return self.scale(&Dyadic::new(c.mantissa().clone(), -c.exponent()));
        }
        self.div(&Interval::point(c.clone()), p).expect("nonzero point divisor")
    }

    pub fn recip(&self, p: i64) -> Result<Interval, ExactError> {
        Interval::one().div(self, p)
    }

    /// Square root of the nonnegative part, outward on the `2^-p` grid.
    pub fn sqrt(&self, p: i64) -> Interval {
        let lo = Dyadic::max(&self.lo, &Dyadic::zero());
        let hi = Dyadic::max(&self.hi, &Dyadic::zero());
        Interval { lo: lo.sqrt_floor(p), hi: hi.sqrt_ceil(p) }
    }

    /// `exp(-x)` for every `x` in the interval, clamping negative `x` to zero.
    /// Endpoint errors are at most `2^-p` each.
    pub fn exp_neg(&self, p: u32) -> Interval {
        let a = Dyadic::max(&self.lo, &Dyadic::zero());
        let b = Dyadic::max(&self.hi, &Dyadic::zero());
        let upper = exp_neg_bounds(&a, p).1;
        let lower = exp_neg_bounds(&b, p).0;
        Interval { lo: lower, hi: upper }
    }
}

impl Add for &Interval {
    type Output = Interval;
    fn add(self, o: &Interval) -> Interval {
        Interval { lo: &self.lo + &o.lo, hi: &self.hi + &o.hi }
    }
}

impl Sub for &Interval {
    type Output = Interval;
    fn sub(self, o: &Interval) -> Interval {
        Interval { lo: &self.lo - &o.hi, hi: &self.hi - &o.lo }
    }
}

impl Mul for &Interval {
    type Output = Interval;
    fn mul(self, o: &Interval) -> Interval {
        let c = [&self.lo * &o.lo, &self.lo * &o.hi, &self.hi * &o.lo, &self.hi * &o.hi];
        let lo = c.iter().min().unwrap().clone();
        let hi = c.iter().max().unwrap().clone();
        Interval { lo, hi }
    }
}

impl Neg for &Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval { lo: -&self.hi, hi: -&self.lo }
    }
}

macro_rules! owned_ivop {
    ($tr:ident, $m:ident) => {
        impl $tr<Interval> for Interval {
            type Output = Interval;
            fn $m(self, rhs: Interval) -> Interval {
                (&self).$m(&rhs)
            }
        }
    };
}
owned_ivop!(Add, add);
owned_ivop!(Sub, sub);
owned_ivop!(Mul, mul);

impl std::iter::Sum for Interval {
    fn sum<I: Iterator<Item = Interval>>(iter: I) -> Interval {
        iter.fold(Interval::zero(), |a, b| a + b)
    }
}

// Taylor bounds for e^y, 0 <= y <= 1/2, with every rounding on the 2^-w grid.
fn exp_small_bounds(y: &Dyadic, w: i64) -> (Dyadic, Dyadic) {
    let mut lo_sum = Dyadic::one();
    let mut hi_sum = Dyadic::one();
    let mut lo_t = Dyadic::one();
    let mut hi_t = Dyadic::one();
    let eps = Dyadic::pow2(-w);
    let mut i: i64 = 1;
    while hi_t > eps || i < 2 {
        let d = Dyadic::from_i64(i);
        lo_t = Dyadic::div_floor(&(&lo_t * y), &d, w);
        hi_t = Dyadic::div_ceil(&(&hi_t * y), &d, w);
        lo_sum = &lo_sum + &lo_t;
        hi_sum = &hi_sum + &hi_t;
        i += 1;
    }
    // remaining terms shrink at least geometrically by 1/2 once i > 1
    (lo_sum, &hi_sum + &hi_t)
}

/// Bounds `(lo, hi)` on `exp(-x)` for `x >= 0` with `hi - lo <= 2^-p`.
pub fn exp_neg_bounds(x: &Dyadic, p: u32) -> (Dyadic, Dyadic) {
    assert!(!x.is_negative());
    if x.is_zero() {
        return (Dyadic::one(), Dyadic::one());
    }
    let j = (x.ceil_log2().unwrap() + 1).max(0);
    let y = x.shl(-j);
    let target = Dyadic::pow2(-(p as i64));
    let mut w = p as i64 + j + 12;
    loop {
        let (mut lo, mut hi) = exp_small_bounds(&y, w);
        for _ in 0..j {
            lo = (&lo * &lo).floor_at(w);
            hi = (&hi * &hi).ceil_at(w);
        }
        let q = p as i64 + 2;
        let r_lo = Dyadic::div_floor(&Dyadic::one(), &hi, q);
        let r_hi = Dyadic::div_ceil(&Dyadic::one(), &lo, q);
        if &r_hi - &r_lo <= target {
            return (r_lo, r_hi);
        }
        w += 24;
    }
}

/// A real number as a map from precision `k` to an interval of width at most
/// `2^-k`.
#[derive(Clone)]
pub struct RealStream(Arc<dyn Fn(u32) -> Interval + Send + Sync>);

impl fmt::Debug for RealStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RealStream({:?} @ 2^-8)", self.refine(8))
    }
}

impl RealStream {
    pub fn from_fn(f: impl Fn(u32) -> Interval + Send + Sync + 'static) -> Self {
        RealStream(Arc::new(f))
    }

    pub fn constant(d: Dyadic) -> Self {
        let iv = Interval::point(d);
        RealStream::from_fn(move |_| iv.clone())
    }

    /// The rational `num / den`, `den > 0`.
    pub fn rational(num: i64, den: i64) -> Self {
        assert!(den > 0);
        let (n, d) = (Dyadic::from_i64(num), Dyadic::from_i64(den));
        RealStream::from_fn(move |k| {
            Interval::new(Dyadic::div_floor(&n, &d, k as i64), Dyadic::div_ceil(&n, &d, k as i64))
        })
    }

    pub fn refine(&self, k: u32) -> Interval {
        let iv = (self.0)(k);
        debug_assert!(iv.within(k), "stream answered {iv:?} at precision {k}");
        iv
    }

    pub fn add(&self, o: &RealStream) -> RealStream {
        let (a, b) = (self.clone(), o.clone());
        RealStream::from_fn(move |k| &a.refine(k + 1) + &b.refine(k + 1))
    }

    pub fn sub(&self, o: &RealStream) -> RealStream {
        let (a, b) = (self.clone(), o.clone());
        RealStream::from_fn(move |k| &a.refine(k + 1) - &b.refine(k + 1))
    }

    pub fn scale(&self, c: Dyadic) -> RealStream {
        let a = self.clone();
        let extra = c.ceil_log2().unwrap_or(0).max(0) as u32;
        RealStream::from_fn(move |k| a.refine(k + extra).scale(&c))
    }
}

/// Free-function form of [`RealStream::refine`].
pub fn refine(x: &RealStream, k: u32) -> Interval {
    x.refine(k)
}

/// `ceil(log2 n)` for `n >= 1`.
pub fn ceil_log2_usize(n: usize) -> u32 {
    if n <= 1 { 0 } else { usize::BITS - (n - 1).leading_zeros() }
}

/// Sum a series to precision `k`.
///
/// `term(n, p)` is the `n`-th term (from zero) at precision `p`;
/// `tail_bound(N)` bounds the absolute value of the sum of all terms with
/// index `>= N`. The head is cut at the first `N` with
/// `tail_bound(N) <= 2^-(k+2)` and each head term is evaluated at precision
/// `k + ceil(log2 N) + 1`.
pub fn sum_with_tail_bound<F, T>(term: F, tail_bound: T, k: u32, step_limit: usize) -> Result<Interval, ExactError>
where
    F: Fn(usize, u32) -> Interval + Sync + Send,
    T: Fn(usize) -> Dyadic,
{
    try_sum_with_tail_bound(|i, p| Ok::<_, ExactError>(term(i, p)), tail_bound, k, step_limit)
}

/// [`sum_with_tail_bound`] for terms that can fail.
pub fn try_sum_with_tail_bound<F, T, E>(term: F, tail_bound: T, k: u32, step_limit: usize) -> Result<Interval, E>
where
    F: Fn(usize, u32) -> Result<Interval, E> + Sync + Send,
    T: Fn(usize) -> Dyadic,
    E: From<ExactError> + Send,
{
    let threshold = Dyadic::pow2(-(k as i64) - 2);
    let mut n = 0usize;
    let tail = loop {
        let t = tail_bound(n);
        if t <= threshold {
            break t;
        }
        if n >= step_limit {
            return Err(ExactError::Budget { needed: k + 2, steps: step_limit }.into());
        }
        n += 1;
    };
    let p = k + ceil_log2_usize(n.max(1)) + 1;
    let head = crate::par::map_range(n, |i| term(i, p)).into_iter().collect::<Result<Vec<_>, E>>()?;
    Ok(head.into_iter().sum::<Interval>().widen(&tail))
}

/// Sum of a finite list of streams to precision `k`.
pub fn sum_streams(terms: &[RealStream], k: u32) -> Interval {
    let len = terms.len();
    sum_with_tail_bound(|i, p| terms[i].refine(p), |n| if n >= len { Dyadic::zero() } else { Dyadic::pow2(64) }, k, len)
        .expect("finite sums always terminate")
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn q(d: &Dyadic) -> BigRational {
        if d.exponent() >= 0 {
            BigRational::from_integer(d.mantissa() << d.exponent() as usize)
        } else {
            BigRational::new(d.mantissa().clone(), BigInt::one() << (-d.exponent()) as usize)
        }
    }

    #[test]
    fn canonical_form() {
        let d = Dyadic::new(12, 0);
        assert_eq!(d.mantissa(), &BigInt::from(3));
        assert_eq!(d.exponent(), 2);
        assert_eq!(Dyadic::new(0, 7), Dyadic::zero());
        assert_eq!(Dyadic::frac(2, 2), Dyadic::frac(1, 1));
    }

    #[test]
    fn parse_and_display() {
        for s in ["3/8", "-1/2", "5", "0", "-7/1024"] {
            let d: Dyadic = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert!("1/3".parse::<Dyadic>().is_err());
        assert_eq!("6/4".parse::<Dyadic>().unwrap(), Dyadic::frac(3, 1));
    }

    #[test]
    fn ordering_and_arith() {
        let a = Dyadic::frac(3, 3);
        let b = Dyadic::frac(1, 1);
        assert!(a < b);
        assert_eq!(&a + &b, Dyadic::frac(7, 3));
        assert_eq!(&a * &b, Dyadic::frac(3, 4));
        assert_eq!(&a - &b, Dyadic::frac(-1, 3));
        assert!(Dyadic::from_i64(-3) < Dyadic::zero());
    }

    #[test]
    fn rounding_grid() {
        let third_lo = Dyadic::div_floor(&Dyadic::one(), &Dyadic::from_i64(3), 3);
        let third_hi = Dyadic::div_ceil(&Dyadic::one(), &Dyadic::from_i64(3), 3);
        assert_eq!(third_lo, Dyadic::frac(2, 3));
        assert_eq!(third_hi, Dyadic::frac(3, 3));
        assert_eq!(Dyadic::frac(-5, 3).floor_at(1), Dyadic::from_i64(-1));
        assert_eq!(Dyadic::frac(-5, 3).ceil_at(1), Dyadic::frac(-1, 1));
    }

    #[test]
    fn refine_constant_and_third() {
        let half = RealStream::constant(Dyadic::frac(1, 1));
        assert_eq!(refine(&half, 10), Interval::point(Dyadic::frac(1, 1)));
        let third = RealStream::rational(1, 3);
        let iv = third.refine(3);
        assert!(iv.within(3));
        let t = BigRational::new(1.into(), 3.into());
        assert!(q(&iv.lo) <= t && t <= q(&iv.hi));
    }

    #[test]
    fn stream_sum_is_inside_parts() {
        let x = RealStream::rational(1, 3);
        let y = RealStream::rational(2, 7);
        for k in 0..20 {
            let s = x.add(&y).refine(k);
            assert!((&x.refine(k + 1) + &y.refine(k + 1)).contains_interval(&s));
            assert!(s.within(k));
        }
    }

    #[test]
    fn geometric_series() {
        // sum_{n>=1} 2^-n, remainder after N terms is 2^-N
        let iv = sum_with_tail_bound(|i, _| Interval::point(Dyadic::pow2(-(i as i64) - 1)), |n| Dyadic::pow2(-(n as i64)), 20, 1000)
            .unwrap();
        assert!(iv.contains(&Dyadic::one()));
        assert!(iv.within(20));
    }

    #[test]
    fn empty_and_zero_series() {
        let iv = sum_with_tail_bound(|_, _| Interval::one(), |_| Dyadic::zero(), 10, 10).unwrap();
        assert_eq!(iv, Interval::zero());
        let iv = sum_with_tail_bound(
            |i, _| Interval::point(Dyadic::pow2(-(i as i64)).mul(Dyadic::zero())),
            |n| if n >= 5 { Dyadic::zero() } else { Dyadic::one() },
            10,
            10,
        )
        .unwrap();
        assert_eq!(iv, Interval::zero());
    }

    #[test]
    fn series_budget_exhaustion() {
        let r = sum_with_tail_bound(|_, _| Interval::one(), |_| Dyadic::one(), 4, 50);
        assert!(matches!(r, Err(ExactError::Budget { .. })));
    }

    #[test]
    fn exp_neg_matches_float() {
        for (x, want) in [(Dyadic::zero(), 1.0f64), (Dyadic::one(), (-1f64).exp()), (Dyadic::frac(3, 2), (-0.75f64).exp()), (Dyadic::from_i64(40), (-40f64).exp())] {
            let (lo, hi) = exp_neg_bounds(&x, 30);
            assert!(lo.to_f64() <= want + 1e-12 && want - 1e-12 <= hi.to_f64(), "{x}: [{lo:?},{hi:?}] vs {want}");
            assert!(&hi - &lo <= Dyadic::pow2(-30));
        }
    }

    #[test]
    fn sqrt_bounds() {
        let iv = Interval::point(Dyadic::frac(1, 2)).sqrt(10);
        assert_eq!(iv, Interval::point(Dyadic::frac(1, 1)));
        let iv = Interval::point(Dyadic::from_i64(2)).sqrt(20);
        assert!(iv.lo.to_f64() <= 2f64.sqrt() && 2f64.sqrt() <= iv.hi.to_f64());
        assert!(iv.within(20));
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(Dyadic::one().ceil_log2(), Some(0));
        assert_eq!(Dyadic::from_i64(3).ceil_log2(), Some(2));
        assert_eq!(Dyadic::frac(1, 3).ceil_log2(), Some(-3));
        assert_eq!(Dyadic::frac(3, 3).ceil_log2(), Some(-1));
        assert_eq!(ceil_log2_usize(1), 0);
        assert_eq!(ceil_log2_usize(5), 3);
    }
}
