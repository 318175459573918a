//! Computable metric spaces, their basic points, and Cauchy names.
//!
//! A basic point is a [`BasicPoint`]: a plain index for the flat spaces and a
//! tuple of factor points for products. Each space fixes a bijection (or, for
//! Baire space and the measure spaces, a surjection) between natural numbers
//! and its basic points; see [`Space::decode_point`].
//!
//! | space | index `n` denotes |
//! |---|---|
//! | Cantor | the sequence whose bit `i` is bit `i` of `n`, followed by zeros |
//! | Baire | set bits `p0 < p1 < ...` of `n` give `a0 = p0`, `aj = pj - p(j-1) - 1`, then zeros |
//! | unit interval | `0 -> 0`, `1 -> 1`, else `m = n - 1 = 2^j + t` gives `(2t+1)/2^(j+1)` |
//! | real line | `(a, b) = unpair(n)`, value `unzig(a) / 2^b` |
//! | finite fixture | `n`, for `n` below the number of points |
//! | measures over `X` | an atomic measure, see `measures::atomic_from_code` |

use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coding;
use crate::exact::{Dyadic, Interval, RealStream};

/// Cantor and Baire points are resolved through `u64` indices, so names of
/// these spaces carry at most this many significant coordinates.
pub const MAX_SEQ_DEPTH: usize = 62;

/// Stages of computable unit-interval and real-line names past these depths
/// repeat the last one, since finer dyadics overflow the `u64` indices.
pub const UNIT_NAME_DEPTH: usize = 58;
pub const REAL_NAME_DEPTH: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpaceError {
    #[error("point code {0} does not fit this space's index range")]
    CodeRange(String),
    #[error("basic point {0} is not a point of {1}")]
    WrongShape(String, &'static str),
}

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BasicPoint {
    Idx(u64),
    Tuple(Vec<BasicPoint>),
}

impl fmt::Debug for BasicPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// `n`, or `(pt a b ...)` for tuples; the same text the S-expression reader takes.
impl fmt::Display for BasicPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasicPoint::Idx(n) => write!(f, "{n}"),
            BasicPoint::Tuple(ps) => {
                write!(f, "(pt")?;
                for p in ps {
                    write!(f, " {p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl BasicPoint {
    pub fn idx(&self) -> u64 {
        match self {
            BasicPoint::Idx(n) => *n,
            BasicPoint::Tuple(_) => panic!("tuple point used where an index was expected"),
        }
    }

    pub fn parts(&self) -> &[BasicPoint] {
        match self {
            BasicPoint::Tuple(ps) => ps,
            BasicPoint::Idx(_) => panic!("index point used where a tuple was expected"),
        }
    }
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Space {
    Cantor,
    Baire,
    #[serde(alias = "unit")]
    UnitInterval,
    #[serde(alias = "real")]
    RealLine,
    Product { factors: Vec<Space> },
    /// Fixture space with an explicit symmetric distance matrix.
    Finite { dist: Vec<Vec<Dyadic>> },
    /// Finite measures over `base` with the weak-convergence metric.
    Measures { base: Box<Space> },
}

impl fmt::Debug for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Space::Cantor => write!(f, "Cantor"),
            Space::Baire => write!(f, "Baire"),
            Space::UnitInterval => write!(f, "[0,1]"),
            Space::RealLine => write!(f, "R"),
            Space::Product { factors } => write!(f, "Product{factors:?}"),
            Space::Finite { dist } => write!(f, "Finite({})", dist.len()),
            Space::Measures { base } => write!(f, "M({base:?})"),
        }
    }
}

/// A set of points given by an enclosure, used for range evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    /// Closed ball around a basic point; radius zero is the point itself.
    Ball { center: BasicPoint, radius: Dyadic },
    /// Closed dyadic segment of the real line.
    Segment { lo: Dyadic, hi: Dyadic },
    /// Product of factor regions.
    Prod(Vec<Region>),
}

impl Region {
    pub fn point(p: BasicPoint) -> Region {
        Region::Ball { center: p, radius: Dyadic::zero() }
    }

    pub fn radius(&self) -> Dyadic {
        match self {
            Region::Ball { radius, .. } => radius.clone(),
            Region::Segment { lo, hi } => (hi - lo).shl(-1),
            Region::Prod(rs) => rs.iter().map(Region::radius).max().unwrap_or_else(Dyadic::zero),
        }
    }
}

pub fn product_space(factors: Vec<Space>) -> Space {
    Space::Product { factors }
}

/// The space of finite measures over `space`. Its basic points are the
/// atomic measures with dyadic weights at basic points.
pub fn measure_space_of(space: &Space) -> Space {
    Space::Measures { base: Box::new(space.clone()) }
}

fn bits_distance(a: u64, b: u64) -> Dyadic {
    if a == b { Dyadic::zero() } else { Dyadic::pow2(-((a ^ b).trailing_zeros() as i64)) }
}

/// Coordinates of a Baire basic point, without trailing zeros.
pub fn baire_coords(n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut prev: i64 = -1;
    for p in 0..64 {
        if n >> p & 1 == 1 {
            out.push((p - prev - 1) as u64);
            prev = p;
        }
    }
    out
}

pub fn baire_index(coords: &[u64]) -> u64 {
    let mut pos: u64 = 0;
    let mut n = 0u64;
    let mut first = true;
    for &a in coords {
        pos = if first { a } else { pos + a + 1 };
        first = false;
        assert!(pos < 64, "Baire prefix too long for a u64 index");
        n |= 1 << pos;
    }
    n
}

fn baire_distance(a: u64, b: u64) -> Dyadic {
    let (x, y) = (baire_coords(a), baire_coords(b));
    let len = x.len().max(y.len());
    for i in 0..len {
        if x.get(i).copied().unwrap_or(0) != y.get(i).copied().unwrap_or(0) {
            return Dyadic::pow2(-(i as i64));
        }
    }
    Dyadic::zero()
}

pub fn unit_value(n: u64) -> Dyadic {
    match n {
        0 => Dyadic::zero(),
        1 => Dyadic::one(),
        _ => {
            let m = n - 1;
            let j = 63 - m.leading_zeros() as i64;
            let t = m - (1 << j);
            Dyadic::new(2 * t as i128 + 1, -(j + 1))
        }
    }
}

pub fn unit_index(d: &Dyadic) -> u64 {
    assert!(!d.is_negative() && d <= &Dyadic::one(), "{d} is outside [0,1]");
    if d.is_zero() {
        return 0;
    }
    if d == &Dyadic::one() {
        return 1;
    }
    let j = -d.exponent() - 1;
    assert!(j < 62, "dyadic {d} too fine for a unit-interval index");
    let t = (d.mantissa() - 1u32) / 2u32;
    let t = t.to_u64().unwrap();
    (1u64 << j) + t + 1
}

pub fn real_value(n: u64) -> Dyadic {
    let (a, b) = coding::unpair(&BigUint::from(n));
    let v = coding::unzig(&a);
    Dyadic::new(v, -(b.to_i64().unwrap()))
}

pub fn real_index(d: &Dyadic) -> u64 {
    let (a, b) = if d.exponent() >= 0 {
        (d.mantissa().clone() << d.exponent() as usize, 0i64)
    } else {
        (d.mantissa().clone(), -d.exponent())
    };
    coding::pair(&coding::zig(&a), &BigUint::from(b as u64)).to_u64().expect("real-line index overflow")
}

impl Space {
    pub fn unit() -> Space {
        Space::UnitInterval
    }

    pub fn is_ultrametric(&self) -> bool {
        matches!(self, Space::Cantor | Space::Baire)
    }

    /// Distances between basic points are exact dyadics.
    pub fn exact_distance(&self) -> bool {
        match self {
            Space::Measures { .. } => false,
            Space::Product { factors } => factors.iter().all(Space::exact_distance),
            _ => true,
        }
    }

    /// Deepest stage at which names of this space still refine.
    pub fn name_depth(&self) -> usize {
        match self {
            Space::UnitInterval => UNIT_NAME_DEPTH,
            Space::RealLine => REAL_NAME_DEPTH,
            Space::Product { factors } => factors.iter().map(Space::name_depth).min().unwrap_or(MAX_SEQ_DEPTH),
            Space::Finite { .. } => usize::MAX,
            _ => MAX_SEQ_DEPTH,
        }
    }

    /// Number of basic points when finite.
    pub fn basic_count(&self) -> Option<u64> {
        match self {
            Space::Finite { dist } => Some(dist.len() as u64),
            Space::Product { factors } => {
                factors.iter().try_fold(1u64, |acc, f| f.basic_count().and_then(|c| acc.checked_mul(c)))
            }
            _ => None,
        }
    }

    /// Decode a natural-number code into a basic point.
    pub fn decode_point(&self, code: &BigUint) -> Result<BasicPoint, SpaceError> {
        match self {
            Space::Product { factors } => {
                let mut out = Vec::with_capacity(factors.len());
                let mut c = code.clone();
                for (i, f) in factors.iter().enumerate() {
                    if i + 1 == factors.len() {
                        out.push(f.decode_point(&c)?);
                    } else {
                        let (a, rest) = coding::unpair(&c);
                        out.push(f.decode_point(&a)?);
                        c = rest;
                    }
                }
                Ok(BasicPoint::Tuple(out))
            }
            _ => {
                let n = code.to_u64().ok_or_else(|| SpaceError::CodeRange(code.to_string()))?;
                if let Some(c) = self.basic_count() {
                    if n >= c {
                        return Err(SpaceError::CodeRange(code.to_string()));
                    }
                }
                Ok(BasicPoint::Idx(n))
            }
        }
    }

    pub fn encode_point(&self, p: &BasicPoint) -> BigUint {
        match (self, p) {
            (Space::Product { factors }, BasicPoint::Tuple(ps)) => {
                assert_eq!(factors.len(), ps.len());
                if ps.is_empty() {
                    return BigUint::zero();
                }
                let last = factors.len() - 1;
                let mut c = factors[last].encode_point(&ps[last]);
                for i in (0..last).rev() {
                    c = coding::pair(&factors[i].encode_point(&ps[i]), &c);
                }
                c
            }
            (_, BasicPoint::Idx(n)) => BigUint::from(*n),
            _ => panic!("point {p} does not belong to {self:?}"),
        }
    }

    /// Check that a point has the shape this space expects.
    pub fn check_point(&self, p: &BasicPoint) -> Result<(), SpaceError> {
        match (self, p) {
            (Space::Product { factors }, BasicPoint::Tuple(ps)) if factors.len() == ps.len() => {
                factors.iter().zip(ps).try_for_each(|(f, q)| f.check_point(q))
            }
            (Space::Product { .. }, _) => Err(SpaceError::WrongShape(p.to_string(), "a product")),
            (_, BasicPoint::Tuple(_)) => Err(SpaceError::WrongShape(p.to_string(), "a flat space")),
            (_, BasicPoint::Idx(n)) => match self.basic_count() {
                Some(c) if *n >= c => Err(SpaceError::CodeRange(n.to_string())),
                _ => Ok(()),
            },
        }
    }

    /// Distance between basic points, width at most `2^-k` (exact unless the
    /// space is a measure space).
    pub fn dist(&self, a: &BasicPoint, b: &BasicPoint, k: u32) -> Interval {
        match self {
            Space::Cantor => Interval::point(bits_distance(a.idx(), b.idx())),
            Space::Baire => Interval::point(baire_distance(a.idx(), b.idx())),
            Space::UnitInterval => Interval::point((unit_value(a.idx()) - unit_value(b.idx())).abs()),
            Space::RealLine => Interval::point((real_value(a.idx()) - real_value(b.idx())).abs()),
            Space::Finite { dist } => Interval::point(dist[a.idx() as usize][b.idx() as usize].clone()),
            Space::Product { factors } => {
                let mut acc = Interval::zero();
                for ((f, x), y) in factors.iter().zip(a.parts()).zip(b.parts()) {
                    acc = acc.max(&f.dist(x, y, k));
                }
                acc
            }
            Space::Measures { base } => {
                if a == b {
                    return Interval::zero();
                }
                let mu = crate::measures::atomic_from_code(base, a.idx());
                let nu = crate::measures::atomic_from_code(base, b.idx());
                crate::measures::measure_metric(&mu, &nu, k).expect("atomic measures integrate every basic function")
            }
        }
    }

    /// Range of `d(x, c)` over `x` in the region; width shrinks with the region.
    pub fn dist_range(&self, region: &Region, c: &BasicPoint, k: u32) -> Interval {
        match (self, region) {
            (Space::Product { factors }, Region::Prod(rs)) => {
                let mut acc = Interval::zero();
                for ((f, r), cc) in factors.iter().zip(rs).zip(c.parts()) {
                    acc = acc.max(&f.dist_range(r, cc, k));
                }
                acc
            }
            (Space::Product { factors }, Region::Ball { center, radius }) => {
                let mut acc = Interval::zero();
                for ((f, b), cc) in factors.iter().zip(center.parts()).zip(c.parts()) {
                    let r = Region::Ball { center: b.clone(), radius: radius.clone() };
                    acc = acc.max(&f.dist_range(&r, cc, k));
                }
                acc
            }
            (_, Region::Segment { lo, hi }) => {
                let v = self.line_value(c);
                if &v < lo {
                    Interval::new(lo - &v, hi - &v)
                } else if &v > hi {
                    Interval::new(&v - hi, &v - lo)
                } else {
                    Interval::new(Dyadic::zero(), Dyadic::max(&(&v - lo), &(hi - &v)))
                }
            }
            (_, Region::Ball { center, radius }) => {
                let d0 = self.dist(center, c, k + 1);
                if radius.is_zero() {
                    return d0;
                }
                if self.is_ultrametric() {
                    // every point of the ball sits at the center's distance once c is outside it
                    if &d0.lo > radius { d0 } else { Interval::new(Dyadic::zero(), radius.clone()) }
                } else if let Space::Finite { dist } = self {
                    let row = &dist[center.idx() as usize];
                    let vals: Vec<&Dyadic> = (0..dist.len())
                        .filter(|&x| &row[x] <= radius)
                        .map(|x| &dist[x][c.idx() as usize])
                        .collect();
                    Interval::new((*vals.iter().min().unwrap()).clone(), (*vals.iter().max().unwrap()).clone())
                } else {
                    Interval::new(Dyadic::max(&(&d0.lo - radius), &Dyadic::zero()), &d0.hi + radius)
                }
            }
            (_, Region::Prod(_)) => panic!("product region on a non-product space {self:?}"),
        }
    }

    /// Dyadic value of a basic point of the unit interval or the real line.
    pub fn line_value(&self, p: &BasicPoint) -> Dyadic {
        match self {
            Space::UnitInterval => unit_value(p.idx()),
            Space::RealLine => real_value(p.idx()),
            _ => panic!("{self:?} is not a line"),
        }
    }

    pub fn line_point(&self, d: &Dyadic) -> BasicPoint {
        match self {
            Space::UnitInterval => BasicPoint::Idx(unit_index(d)),
            Space::RealLine => BasicPoint::Idx(real_index(d)),
            _ => panic!("{self:?} is not a line"),
        }
    }

    /// A basic point inside the region.
    pub fn representative(&self, region: &Region) -> BasicPoint {
        match (self, region) {
            (_, Region::Ball { center, .. }) => center.clone(),
            (_, Region::Segment { lo, hi }) => {
                // the midpoint can be finer than the index range allows; the lower end is also inside
                let mid = (lo + hi).shl(-1);
                if mid.exponent() > -60 { self.line_point(&mid) } else { self.line_point(lo) }
            }
            (Space::Product { factors }, Region::Prod(rs)) => {
                BasicPoint::Tuple(factors.iter().zip(rs).map(|(f, r)| f.representative(r)).collect())
            }
            _ => panic!("region shape does not match {self:?}"),
        }
    }

    /// Split a product region into factor regions.
    pub fn factor_regions(&self, region: &Region) -> Vec<Region> {
        match (self, region) {
            (Space::Product { .. }, Region::Prod(rs)) => rs.clone(),
            (Space::Product { .. }, Region::Ball { center, radius }) => center
                .parts()
                .iter()
                .map(|c| Region::Ball { center: c.clone(), radius: radius.clone() })
                .collect(),
            _ => panic!("not a product region"),
        }
    }

    pub fn factors(&self) -> &[Space] {
        match self {
            Space::Product { factors } => factors,
            _ => panic!("{self:?} is not a product"),
        }
    }
}

/// A point given by a stream of basic points `h` with
/// `d(b_h(j), b_h(i)) <= 2^-i` for `j >= i`.
#[derive(Clone)]
pub struct CauchyName {
    h: Arc<dyn Fn(usize) -> BasicPoint + Send + Sync>,
    exact: Option<BasicPoint>,
}

impl fmt::Debug for CauchyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.exact {
            Some(p) => write!(f, "CauchyName(exactly {p})"),
            None => write!(f, "CauchyName{:?}", self.prefix(4)),
        }
    }
}

fn cantor_prefix_index(bits: &dyn Fn(usize) -> bool, len: usize) -> u64 {
    (0..len.min(MAX_SEQ_DEPTH)).fold(0u64, |acc, i| if bits(i) { acc | 1 << i } else { acc })
}

impl CauchyName {
    pub fn from_fn(f: impl Fn(usize) -> BasicPoint + Send + Sync + 'static) -> Self {
        CauchyName { h: Arc::new(f), exact: None }
    }

    /// The constant name of a basic point.
    pub fn basic(p: BasicPoint) -> Self {
        let q = p.clone();
        CauchyName { h: Arc::new(move |_| q.clone()), exact: Some(p) }
    }

    pub fn idx(n: u64) -> Self {
        CauchyName::basic(BasicPoint::Idx(n))
    }

    /// A finite prefix extended by repeating its last entry.
    pub fn from_prefix(prefix: Vec<BasicPoint>) -> Self {
        assert!(!prefix.is_empty());
        let v = Arc::new(prefix);
        CauchyName::from_fn(move |i| v[i.min(v.len() - 1)].clone())
    }

    /// A Cantor point from its bits; `h(i)` agrees with it on bits `0..=i`.
    pub fn cantor(bits: impl Fn(usize) -> bool + Send + Sync + 'static) -> Self {
        let bits = Arc::new(bits);
        CauchyName::from_fn(move |i| BasicPoint::Idx(cantor_prefix_index(&*bits, i + 1)))
    }

    /// `prefix` followed by the constant `tail` bit.
    pub fn cantor_eventually(prefix: Vec<bool>, tail: bool) -> Self {
        if !tail {
            let n = cantor_prefix_index(&|i| prefix[i], prefix.len());
            return CauchyName::idx(n);
        }
        CauchyName::cantor(move |i| prefix.get(i).copied().unwrap_or(tail))
    }

    /// A Baire point from its coordinates.
    pub fn baire(coords: impl Fn(usize) -> u64 + Send + Sync + 'static) -> Self {
        CauchyName::from_fn(move |i| {
            let c: Vec<u64> = (0..=i).map(&coords).collect();
            BasicPoint::Idx(baire_index(&c))
        })
    }

    /// A dyadic point of the unit interval.
    pub fn unit_dyadic(d: &Dyadic) -> Self {
        CauchyName::idx(unit_index(d))
    }

    /// A computable point of the unit interval.
    pub fn unit_real(x: RealStream) -> Self {
        CauchyName::from_fn(move |i| {
            let p = i.min(UNIT_NAME_DEPTH) as u32 + 3;
            let m = x.refine(p).mid().floor_at(p as i64).clamp_unit();
            BasicPoint::Idx(unit_index(&m))
        })
    }

    pub fn real_dyadic(d: &Dyadic) -> Self {
        CauchyName::idx(real_index(d))
    }

    pub fn real(x: RealStream) -> Self {
        CauchyName::from_fn(move |i| {
            let p = i.min(REAL_NAME_DEPTH) as u32 + 3;
            BasicPoint::Idx(real_index(&x.refine(p).mid().floor_at(p as i64)))
        })
    }

    /// Componentwise name of a point of a product space.
    pub fn product(names: Vec<CauchyName>) -> Self {
        let exact = names.iter().map(|n| n.exact.clone()).collect::<Option<Vec<_>>>().map(BasicPoint::Tuple);
        let names = Arc::new(names);
        CauchyName {
            h: Arc::new(move |i| BasicPoint::Tuple(names.iter().map(|n| n.at(i)).collect())),
            exact,
        }
    }

    pub fn at(&self, i: usize) -> BasicPoint {
        (self.h)(i)
    }

    pub fn exact(&self) -> Option<&BasicPoint> {
        self.exact.as_ref()
    }

    pub fn prefix(&self, depth: usize) -> Vec<BasicPoint> {
        (0..depth).map(|i| self.at(i)).collect()
    }

    /// Enclosure of the named point known from the first `m + 1` entries.
    pub fn region(&self, m: usize) -> Region {
        match &self.exact {
            Some(p) => Region::point(p.clone()),
            None => Region::Ball { center: self.at(m), radius: Dyadic::pow2(-(m as i64)) },
        }
    }

    /// Project a product-space name onto factor `i`.
    pub fn project(&self, i: usize) -> CauchyName {
        let me = self.clone();
        CauchyName {
            h: Arc::new(move |d| me.at(d).parts()[i].clone()),
            exact: self.exact.as_ref().map(|p| p.parts()[i].clone()),
        }
    }
}

trait ClampUnit {
    fn clamp_unit(&self) -> Dyadic;
}

impl ClampUnit for Dyadic {
    fn clamp_unit(&self) -> Dyadic {
        Dyadic::min(&Dyadic::max(self, &Dyadic::zero()), &Dyadic::one())
    }
}

/// Distance between named points, width at most `2^-k` while `k + 3` is
/// within the resolution of the space's names.
///
/// Uses basic points at depth `m = k + 3`, each within `2^-m` of its limit.
pub fn point_distance(space: &Space, x: &CauchyName, y: &CauchyName, k: u32) -> Interval {
    if let (Some(a), Some(b)) = (x.exact(), y.exact()) {
        return space.dist(a, b, k);
    }
    let m = (k as usize + 3).min(space.name_depth());
    let d = space.dist(&x.at(m), &y.at(m), k + 1);
    let slack = Dyadic::pow2(-(m as i64) + 1);
    let iv = d.widen(&slack);
    Interval::new(Dyadic::max(&iv.lo, &Dyadic::zero()), Dyadic::max(&iv.hi, &Dyadic::zero()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum NameVerdict {
    Consistent,
    Violated { i: usize, j: usize },
}

/// Check `d(b_h(j), b_h(i)) <= 2^-i` for all `i <= j < depth`. A violation
/// is reported only when the certified lower bound of the distance exceeds
/// `2^-i`; the first violating pair in `(i, j)` order is returned.
pub fn validate_name_prefix(space: &Space, h: &CauchyName, depth: usize) -> NameVerdict {
    let pts = h.prefix(depth);
    for i in 0..depth {
        let bound = Dyadic::pow2(-(i as i64));
        for j in i + 1..depth {
            let d = space.dist(&pts[j], &pts[i], i as u32 + 8);
            if d.lo > bound {
                return NameVerdict::Violated { i, j };
            }
        }
    }
    NameVerdict::Consistent
}
