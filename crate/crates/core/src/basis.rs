//! Basic functions: bump functions, the constant one, and their closure under
//! max, min and dyadic linear combinations.
//!
//! The bump `f_{c,r,s}` is `1` within distance `r` of `c`, `0` beyond `s`, and
//! linear in the distance in between; as a formula it is
//! `median(1, (s - d(c, y)) / (s - r), 0)`.
//!
//! # Enumeration
//!
//! [`BasisEnumeration`] fixes a bijection between natural numbers and trees
//! (relative to the space's point coding). With `pair`, `unpair`, `zig` from
//! [`crate::coding`]:
//!
//! - `0` is `One`.
//! - odd `n = 2p + 1` is `Bump(c, r, r + g)` where `(cc, q) = unpair(p)`,
//!   `c = decode_point(cc)`, `(rc, gc) = unpair(q)`, `r = pos(rc)`, `g = pos(gc)`.
//! - even `n = 2m + 2` has tag `m mod 3` and payload `m / 3`:
//!   tag 0 is `Max` and tag 1 is `Min` over the nonempty list coded by the
//!   payload; tag 2 is `LinComb` over the (possibly empty) list coded by the
//!   payload, each entry `unpair(e) = (coefficient code, tree code)`.
//!
//! Positive dyadics are `pos(c) = (2a + 1) 2^e` with `(zig e, a) = unpair(c)`;
//! signed coefficients use `0 -> 0` and then the sign in the low bit of `c - 1`.
//! Lists use `[] -> 0`, `x :: rest -> 1 + pair(x, code(rest))`; nonempty lists
//! use `pair(x, code(rest))`.
//!
//! # Text form
//!
//! ```text
//! f := (one) | (bump P R S) | (max f ...) | (min f ...) | (lin (C f) ...)
//! P := index | (pt P ...)
//! ```
//! Numbers are dyadic literals such as `3`, `-1/2` or `3/8`.

use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;
use thiserror::Error;

use crate::coding;
use crate::exact::{Dyadic, Interval};
use crate::spaces::{BasicPoint, CauchyName, Region, Space, SpaceError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BasisError {
    #[error("bump needs 0 < r < s, got r = {r}, s = {s}")]
    BadBump { r: Dyadic, s: Dyadic },
    #[error("max/min over an empty list")]
    EmptyList,
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("s-expression: {0}")]
    Syntax(String),
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub enum BasicFunction {
    One,
    Bump { center: BasicPoint, r: Dyadic, s: Dyadic },
    Max(Vec<BasicFunction>),
    Min(Vec<BasicFunction>),
    LinComb(Vec<(Dyadic, BasicFunction)>),
}

impl fmt::Debug for BasicFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl BasicFunction {
    pub fn bump(center: BasicPoint, r: Dyadic, s: Dyadic) -> Result<Self, BasisError> {
        if !(r.is_positive() && r < s) {
            return Err(BasisError::BadBump { r, s });
        }
        Ok(BasicFunction::Bump { center, r, s })
    }

    pub fn zero() -> Self {
        BasicFunction::LinComb(Vec::new())
    }

    pub fn constant(c: Dyadic) -> Self {
        BasicFunction::LinComb(vec![(c, BasicFunction::One)])
    }

    pub fn max(items: Vec<BasicFunction>) -> Result<Self, BasisError> {
        if items.is_empty() {
            return Err(BasisError::EmptyList);
        }
        Ok(BasicFunction::Max(items))
    }

    pub fn min(items: Vec<BasicFunction>) -> Result<Self, BasisError> {
        if items.is_empty() {
            return Err(BasisError::EmptyList);
        }
        Ok(BasicFunction::Min(items))
    }

    pub fn scale(self, c: Dyadic) -> Self {
        BasicFunction::LinComb(vec![(c, self)])
    }

    /// `a + b`
    pub fn plus(self, other: BasicFunction) -> Self {
        BasicFunction::LinComb(vec![(Dyadic::one(), self), (Dyadic::one(), other)])
    }

    /// Structural bounds `lo <= f <= hi`.
    pub fn bounds(&self) -> (Dyadic, Dyadic) {
        match self {
            BasicFunction::One => (Dyadic::one(), Dyadic::one()),
            BasicFunction::Bump { .. } => (Dyadic::zero(), Dyadic::one()),
            BasicFunction::Max(fs) => {
                let bs: Vec<_> = fs.iter().map(BasicFunction::bounds).collect();
                (bs.iter().map(|b| b.0.clone()).max().unwrap(), bs.iter().map(|b| b.1.clone()).max().unwrap())
            }
            BasicFunction::Min(fs) => {
                let bs: Vec<_> = fs.iter().map(BasicFunction::bounds).collect();
                (bs.iter().map(|b| b.0.clone()).min().unwrap(), bs.iter().map(|b| b.1.clone()).min().unwrap())
            }
            BasicFunction::LinComb(ts) => {
                let iv: Interval = ts
                    .iter()
                    .map(|(c, f)| {
                        let (lo, hi) = f.bounds();
                        Interval::new(lo, hi).scale(c)
                    })
                    .sum();
                (iv.lo, iv.hi)
            }
        }
    }

    /// Upper bound on the Lipschitz constant with respect to the distance.
    pub fn lipschitz(&self) -> Dyadic {
        match self {
            BasicFunction::One => Dyadic::zero(),
            BasicFunction::Bump { r, s, .. } => {
                let g = s - r;
                // 2^-floor(log2 g) >= 1/g
                let fl = g.ceil_log2().unwrap() - if g.mantissa() == &num_bigint::BigInt::from(1) { 0 } else { 1 };
                Dyadic::pow2(-fl)
            }
            BasicFunction::Max(fs) | BasicFunction::Min(fs) => {
                fs.iter().map(BasicFunction::lipschitz).max().unwrap_or_else(Dyadic::zero)
            }
            BasicFunction::LinComb(ts) => ts.iter().map(|(c, f)| c.abs() * f.lipschitz()).sum(),
        }
    }

    /// Sum of absolute coefficient products along the tree, bounding how much
    /// per-leaf rounding can accumulate.
    fn leaf_weight(&self) -> Dyadic {
        match self {
            BasicFunction::One => Dyadic::zero(),
            BasicFunction::Bump { .. } => Dyadic::one(),
            BasicFunction::Max(fs) | BasicFunction::Min(fs) => {
                fs.iter().map(BasicFunction::leaf_weight).max().unwrap_or_else(Dyadic::zero)
            }
            BasicFunction::LinComb(ts) => ts.iter().map(|(c, f)| c.abs() * f.leaf_weight()).sum(),
        }
    }

    /// Check that every leaf is well formed for `space`.
    pub fn check(&self, space: &Space) -> Result<(), BasisError> {
        match self {
            BasicFunction::One => Ok(()),
            BasicFunction::Bump { center, r, s } => {
                if !(r.is_positive() && r < s) {
                    return Err(BasisError::BadBump { r: r.clone(), s: s.clone() });
                }
                Ok(space.check_point(center)?)
            }
            BasicFunction::Max(fs) | BasicFunction::Min(fs) => {
                if fs.is_empty() {
                    return Err(BasisError::EmptyList);
                }
                fs.iter().try_for_each(|f| f.check(space))
            }
            BasicFunction::LinComb(ts) => ts.iter().try_for_each(|(_, f)| f.check(space)),
        }
    }

    /// Enclosure of the values over `region`, bump quotients rounded outward
    /// on the `2^-p` grid.
    pub fn range(&self, space: &Space, region: &Region, p: u32) -> Interval {
        self.range_with(&mut |c: &BasicPoint| space.dist_range(region, c, p), p)
    }

    /// Same as [`range`](Self::range) with distances supplied by the caller.
    pub fn range_with(&self, dist: &mut dyn FnMut(&BasicPoint) -> Interval, p: u32) -> Interval {
        match self {
            BasicFunction::One => Interval::one(),
            BasicFunction::Bump { center, r, s } => bump_value(&dist(center), r, s, p),
            BasicFunction::Max(fs) => {
                let mut it = fs.iter().map(|f| f.range_with(dist, p));
                let first = it.next().expect("nonempty max");
                it.fold(first, |a, b| a.max(&b))
            }
            BasicFunction::Min(fs) => {
                let mut it = fs.iter().map(|f| f.range_with(dist, p));
                let first = it.next().expect("nonempty min");
                it.fold(first, |a, b| a.min(&b))
            }
            BasicFunction::LinComb(ts) => ts.iter().map(|(c, f)| f.range_with(dist, p).scale(c)).sum(),
        }
    }

    /// Distinct bump centers in order of first occurrence.
    pub fn centers(&self) -> Vec<BasicPoint> {
        let mut out = Vec::new();
        self.collect_centers(&mut out);
        out
    }

    fn collect_centers(&self, out: &mut Vec<BasicPoint>) {
        match self {
            BasicFunction::One => {}
            BasicFunction::Bump { center, .. } => {
                if !out.contains(center) {
                    out.push(center.clone())
                }
            }
            BasicFunction::Max(fs) | BasicFunction::Min(fs) => fs.iter().for_each(|f| f.collect_centers(out)),
            BasicFunction::LinComb(ts) => ts.iter().for_each(|(_, f)| f.collect_centers(out)),
        }
    }

    /// Precision needed on distances so that a region of radius `rho` gives
    /// an enclosure of width at most `2^-k`: `2^-k >= 2 L rho + rounding`.
    pub fn depth_for(&self, k: u32) -> usize {
        let l = self.lipschitz();
        let lb = l.ceil_log2().unwrap_or(0).max(0) as usize;
        k as usize + lb + 3
    }

    pub(crate) fn rounding_precision(&self, k: u32) -> u32 {
        let w = self.leaf_weight();
        k + w.ceil_log2().unwrap_or(0).max(0) as u32 + 3
    }
}

/// `median(1, (s - d)/(s - r), 0)` over a distance interval.
pub fn bump_value(d: &Interval, r: &Dyadic, s: &Dyadic, p: u32) -> Interval {
    let g = s - r;
    let num = Interval::new(s - &d.hi, s - &d.lo);
    num.div_dyadic(&g, p as i64).clamp(&Dyadic::zero(), &Dyadic::one())
}

/// Evaluate `f` at the named point to within `2^-k`.
pub fn eval_basic(f: &BasicFunction, space: &Space, x: &CauchyName, k: u32) -> Interval {
    let p = f.rounding_precision(k);
    if x.exact().is_some() {
        let iv = f.range(space, &x.region(0), p);
        if iv.within(k) {
            return iv;
        }
    }
    let mut m = f.depth_for(k);
    loop {
        let iv = f.range(space, &x.region(m), p + (m as u32).saturating_sub(k));
        if iv.within(k) {
            return iv;
        }
        m += 4;
        assert!(m < 4096, "basic function evaluation failed to converge");
    }
}

/// `Bump(center, radius - 2 * 2^-n, radius - 2^-n)`: below the indicator of
/// the open ball, nondecreasing in `n`, and the zero function while
/// `radius <= 2 * 2^-n`.
pub fn ball_lower_approx(center: BasicPoint, radius: &Dyadic, n: u32) -> BasicFunction {
    let e = Dyadic::pow2(-(n as i64));
    let two_e = e.shl(1);
    if radius <= &two_e {
        return BasicFunction::zero();
    }
    BasicFunction::Bump { center, r: radius - &two_e, s: radius - &e }
}

/// The enumeration of basic functions over one space.
#[derive(Clone, Debug)]
pub struct BasisEnumeration {
    space: Space,
}

impl BasisEnumeration {
    pub fn new(space: &Space) -> Self {
        BasisEnumeration { space: space.clone() }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn nth(&self, i: u64) -> Result<BasicFunction, BasisError> {
        self.decode(&BigUint::from(i))
    }

    pub fn decode(&self, n: &BigUint) -> Result<BasicFunction, BasisError> {
        if n.is_zero() {
            return Ok(BasicFunction::One);
        }
        let two = BigUint::from(2u32);
        if (n % &two) == BigUint::from(1u32) {
            let p = n / &two;
            let (cc, q) = coding::unpair(&p);
            let center = self.space.decode_point(&cc)?;
            let (rc, gc) = coding::unpair(&q);
            let r = coding::pos_dyadic(&rc);
            let s = &r + &coding::pos_dyadic(&gc);
            return Ok(BasicFunction::Bump { center, r, s });
        }
        let m = (n - 2u32) / 2u32;
        let tag = (&m % 3u32).iter_u32_digits().next().unwrap_or(0);
        let payload = m / 3u32;
        match tag {
            0 | 1 => {
                let items = coding::nonempty_seq(&payload).iter().map(|c| self.decode(c)).collect::<Result<Vec<_>, _>>()?;
                Ok(if tag == 0 { BasicFunction::Max(items) } else { BasicFunction::Min(items) })
            }
            _ => {
                let terms = coding::seq(&payload)
                    .iter()
                    .map(|e| {
                        let (dc, tc) = coding::unpair(e);
                        Ok((coding::dyadic(&dc), self.decode(&tc)?))
                    })
                    .collect::<Result<Vec<_>, BasisError>>()?;
                Ok(BasicFunction::LinComb(terms))
            }
        }
    }

    pub fn encode(&self, f: &BasicFunction) -> BigUint {
        match f {
            BasicFunction::One => BigUint::zero(),
            BasicFunction::Bump { center, r, s } => {
                let q = coding::pair(&coding::pos_dyadic_code(r), &coding::pos_dyadic_code(&(s - r)));
                let p = coding::pair(&self.space.encode_point(center), &q);
                p * 2u32 + 1u32
            }
            BasicFunction::Max(fs) | BasicFunction::Min(fs) => {
                let codes: Vec<BigUint> = fs.iter().map(|g| self.encode(g)).collect();
                let tag = if matches!(f, BasicFunction::Max(_)) { 0u32 } else { 1u32 };
                (coding::nonempty_seq_code(&codes) * 3u32 + tag) * 2u32 + 2u32
            }
            BasicFunction::LinComb(ts) => {
                let codes: Vec<BigUint> =
                    ts.iter().map(|(c, g)| coding::pair(&coding::dyadic_code(c), &self.encode(g))).collect();
                (coding::seq_code(&codes) * 3u32 + 2u32) * 2u32 + 2u32
            }
        }
    }
}

impl fmt::Display for BasicFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasicFunction::One => write!(f, "(one)"),
            BasicFunction::Bump { center, r, s } => write!(f, "(bump {center} {r} {s})"),
            BasicFunction::Max(fs) | BasicFunction::Min(fs) => {
                write!(f, "({}", if matches!(self, BasicFunction::Max(_)) { "max" } else { "min" })?;
                for g in fs {
                    write!(f, " {g}")?;
                }
                write!(f, ")")
            }
            BasicFunction::LinComb(ts) => {
                write!(f, "(lin")?;
                for (c, g) in ts {
                    write!(f, " ({c} {g})")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn tokenize(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' | ')' => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn read_sexp(toks: &[String], pos: &mut usize) -> Result<Sexp, BasisError> {
    let t = toks.get(*pos).ok_or_else(|| BasisError::Syntax("unexpected end of input".into()))?;
    *pos += 1;
    match t.as_str() {
        "(" => {
            let mut items = Vec::new();
            loop {
                match toks.get(*pos).map(String::as_str) {
                    Some(")") => {
                        *pos += 1;
                        return Ok(Sexp::List(items));
                    }
                    Some(_) => items.push(read_sexp(toks, pos)?),
                    None => return Err(BasisError::Syntax("unbalanced parenthesis".into())),
                }
            }
        }
        ")" => Err(BasisError::Syntax("unexpected ')'".into())),
        a => Ok(Sexp::Atom(a.to_string())),
    }
}

fn atom_dyadic(s: &Sexp) -> Result<Dyadic, BasisError> {
    match s {
        Sexp::Atom(a) => a.parse().map_err(|_| BasisError::Syntax(format!("bad number {a}"))),
        _ => Err(BasisError::Syntax("expected a number".into())),
    }
}

fn sexp_point(s: &Sexp) -> Result<BasicPoint, BasisError> {
    match s {
        Sexp::Atom(a) => a.parse::<u64>().map(BasicPoint::Idx).map_err(|_| BasisError::Syntax(format!("bad point {a}"))),
        Sexp::List(items) => match items.split_first() {
            Some((Sexp::Atom(h), rest)) if h == "pt" => Ok(BasicPoint::Tuple(rest.iter().map(sexp_point).collect::<Result<_, _>>()?)),
            _ => Err(BasisError::Syntax("expected (pt ...)".into())),
        },
    }
}

fn sexp_function(s: &Sexp) -> Result<BasicFunction, BasisError> {
    let items = match s {
        Sexp::List(items) => items,
        Sexp::Atom(a) => return Err(BasisError::Syntax(format!("expected a list, got {a}"))),
    };
    let (head, rest) = match items.split_first() {
        Some((Sexp::Atom(h), rest)) => (h.as_str(), rest),
        _ => return Err(BasisError::Syntax("expected an operator".into())),
    };
    match (head, rest.len()) {
        ("one", 0) => Ok(BasicFunction::One),
        ("bump", 3) => BasicFunction::bump(sexp_point(&rest[0])?, atom_dyadic(&rest[1])?, atom_dyadic(&rest[2])?),
        ("max", _) => BasicFunction::max(rest.iter().map(sexp_function).collect::<Result<_, _>>()?),
        ("min", _) => BasicFunction::min(rest.iter().map(sexp_function).collect::<Result<_, _>>()?),
        ("lin", _) => {
            let terms = rest
                .iter()
                .map(|t| match t {
                    Sexp::List(pair) if pair.len() == 2 => Ok((atom_dyadic(&pair[0])?, sexp_function(&pair[1])?)),
                    _ => Err(BasisError::Syntax("lin terms are (coefficient function)".into())),
                })
                .collect::<Result<_, _>>()?;
            Ok(BasicFunction::LinComb(terms))
        }
        (h, n) => Err(BasisError::Syntax(format!("unknown form ({h} ...) with {n} arguments"))),
    }
}

impl std::str::FromStr for BasicFunction {
    type Err = BasisError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let toks = tokenize(s);
        let mut pos = 0;
        let e = read_sexp(&toks, &mut pos)?;
        if pos != toks.len() {
            return Err(BasisError::Syntax("trailing input".into()));
        }
        sexp_function(&e)
    }
}
