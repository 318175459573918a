//! Null-boundary balls, measures of their Boolean combinations, and the ξ
//! measure on Cauchy names.

use std::sync::{Arc, Mutex};

use num_bigint::BigUint;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::basis::BasicFunction;
use crate::coding;
use crate::exact::{ceil_log2_usize, Dyadic, Interval, RealStream};
use crate::measures::{MeasureError, MeasureOracle};
use crate::par;
use crate::search::{refine_stage, PieceBound, SearchPlan, SearchStage};
use crate::semicomp::Memo;
use crate::spaces::{point_distance, BasicPoint, CauchyName, Space};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("search exhausted its budget: {0}")]
    Budget(String),
}

/// `-ceil(log2 x)` clamped at zero: the precision at which a width of `2^-p`
/// fits inside `x`.
pub(crate) fn bits_below(x: &Dyadic) -> u32 {
    (-x.ceil_log2().unwrap_or(0)).max(0) as u32
}

/// The annulus search keeps the full subdivision at every stage.
const PLAN: SearchPlan = SearchPlan { max_effort: 6, coarse_first: false };

struct AnnulusBound<'a> {
    mu: &'a MeasureOracle,
    center: &'a BasicPoint,
}

/// Lower and upper indicator approximations of the ball `B(c, r)` for
/// `r ∈ [a, b]`: `1{d <= a - 2 fat}`-ish below, `1{d <= b}`-ish above. Their
/// difference is the annulus window on `[a - fat, b]`.
fn ball_sandwich(c: &BasicPoint, a: &Dyadic, b: &Dyadic, fat: &Dyadic) -> (BasicFunction, BasicFunction) {
    let upper = BasicFunction::Bump { center: c.clone(), r: b.clone(), s: b + fat };
    let inner = a - &fat.shl(1);
    let lower = if inner.is_positive() {
        BasicFunction::Bump { center: c.clone(), r: inner, s: a - fat }
    } else {
        BasicFunction::zero()
    };
    (lower, upper)
}

impl PieceBound for AnnulusBound<'_> {
    type Error = NameError;
    fn bound(&self, a: &Dyadic, b: &Dyadic, fat: &Dyadic, tol: &Dyadic) -> Result<(Dyadic, usize), NameError> {
        let (lower, upper) = ball_sandwich(self.center, a, b, fat);
        let w = BasicFunction::LinComb(vec![(Dyadic::one(), upper), (-Dyadic::one(), lower)]);
        Ok((self.mu.integrate(&w, bits_below(tol) + 2)?.hi, 0))
    }
}

struct RadiusInner {
    mu: MeasureOracle,
    center: BasicPoint,
    q1: Dyadic,
    q2: Dyadic,
    norm_hi: Dyadic,
    stages: Mutex<Vec<SearchStage>>,
}

/// A radius `r ∈ [q1, q2]` whose sphere around `center` is `μ`-null,
/// certified by nested intervals whose annulus masses go to zero.
#[derive(Clone)]
pub struct NullRadius(Arc<RadiusInner>);

impl std::fmt::Debug for NullRadius {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "NullRadius({:?}, [{}, {}], {} stages)", self.0.center, self.0.q1, self.0.q2, self.computed().len())
    }
}

/// Search for a null-boundary radius in `[q1, q2]`, computing stages until
/// the stage mass budget is at most `eps`. Later stages are computed on
/// demand.
pub fn find_null_radius(mu: &MeasureOracle, center: BasicPoint, q1: Dyadic, q2: Dyadic, eps: &Dyadic) -> Result<NullRadius, NameError> {
    if !(q1.is_positive() && q1 < q2) {
        return Err(NameError::Precondition(format!("radius window [{q1}, {q2}] must satisfy 0 < q1 < q2")));
    }
    mu.space().check_point(&center).map_err(MeasureError::from)?;
    let norm_hi = mu.norm(20)?.hi;
    let nr = NullRadius(Arc::new(RadiusInner { mu: mu.clone(), center, q1, q2, norm_hi, stages: Mutex::new(Vec::new()) }));
    let mut s = 1;
    while &Dyadic::pow2(-(s as i64)) > eps {
        s += 1;
    }
    nr.stage(s)?;
    Ok(nr)
}

impl NullRadius {
    pub fn center(&self) -> &BasicPoint {
        &self.0.center
    }

    pub fn measure(&self) -> &MeasureOracle {
        &self.0.mu
    }

    pub fn window(&self) -> (Dyadic, Dyadic) {
        (self.0.q1.clone(), self.0.q2.clone())
    }

    /// Stages computed so far.
    pub fn computed(&self) -> Vec<SearchStage> {
        self.0.stages.lock().unwrap().clone()
    }

    /// Stage `s >= 1`, computing it and its predecessors when needed.
    pub fn stage(&self, s: u32) -> Result<SearchStage, NameError> {
        assert!(s >= 1);
        let mut st = self.0.stages.lock().unwrap();
        while st.len() < s as usize {
            let (lo, hi) = match st.last() {
                Some(p) => (p.lo.clone(), p.hi.clone()),
                None => (self.0.q1.clone(), self.0.q2.clone()),
            };
            let next = st.len() as u32 + 1;
            let b = AnnulusBound { mu: &self.0.mu, center: &self.0.center };
            match refine_stage(&lo, &hi, next, &self.0.norm_hi, &b, PLAN)? {
                Some(stage) => st.push(stage),
                None => return Err(NameError::Budget(format!("no light annulus at stage {next}"))),
            }
        }
        Ok(st[s as usize - 1].clone())
    }

    /// The radius to within `2^-k`.
    pub fn radius(&self, k: u32) -> Result<Interval, NameError> {
        let mut s = 1;
        loop {
            let st = self.stage(s)?;
            let iv = Interval::new(st.lo, st.hi);
            if iv.within(k) {
                return Ok(iv);
            }
            s += 1;
        }
    }

    /// The radius as a stream. Panics if the search fails, which needs an
    /// integration error from the measure.
    pub fn to_stream(&self) -> RealStream {
        let me = self.clone();
        RealStream::from_fn(move |k| me.radius(k).expect("null radius search"))
    }

    /// Indicator approximations of the ball from stage `s`, with `∫` of the
    /// difference at most `ε_s`.
    pub fn sandwich(&self, s: u32) -> Result<(BasicFunction, BasicFunction), NameError> {
        let st = self.stage(s)?;
        Ok(ball_sandwich(&self.0.center, &st.lo, &st.hi, &st.fat))
    }
}

/// A ball with a certified null boundary.
#[derive(Clone, Debug)]
pub struct AeBall {
    pub center: BasicPoint,
    pub cert: NullRadius,
}

/// The `e`-th triple `(i, q1, q2)` of the fixed enumeration:
/// `e = <i, <c1, c2>>`, `q1 = pos(c1)`, `q2 = q1 + pos(c2)`.
pub fn ae_triple(e: u64) -> (BigUint, Dyadic, Dyadic) {
    let (i, w) = coding::unpair(&BigUint::from(e));
    let (c1, c2) = coding::unpair(&w);
    let q1 = coding::pos_dyadic(&c1);
    let q2 = &q1 + &coding::pos_dyadic(&c2);
    (i, q1, q2)
}

/// Null-boundary balls for every triple of the fixed enumeration whose point
/// code is valid for the space, certified down to `eps`.
pub fn ae_ball_enumeration(mu: &MeasureOracle, eps: Dyadic) -> impl Iterator<Item = Result<AeBall, NameError>> + '_ {
    (0u64..).filter_map(move |e| {
        let (i, q1, q2) = ae_triple(e);
        let center = mu.space().decode_point(&i).ok()?;
        Some(find_null_radius(mu, center.clone(), q1, q2, &eps).map(|cert| AeBall { center, cert }))
    })
}

/// A finite Boolean expression over null-boundary balls.
#[derive(Clone, Debug)]
pub enum Combo {
    Ball(AeBall),
    Not(Box<Combo>),
    And(Vec<Combo>),
    Or(Vec<Combo>),
}

impl Combo {
    fn leaves(&self) -> usize {
        match self {
            Combo::Ball(_) => 1,
            Combo::Not(c) => c.leaves(),
            Combo::And(cs) | Combo::Or(cs) => cs.iter().map(Combo::leaves).sum(),
        }
    }

    fn sandwich(&self, mu: &MeasureOracle, s: u32) -> Result<(BasicFunction, BasicFunction), NameError> {
        match self {
            Combo::Ball(b) => {
                if !b.cert.measure().same_as(mu) {
                    return Err(NameError::Precondition(format!("ball around {:?} is certified for another measure", b.center)));
                }
                b.cert.sandwich(s)
            }
            Combo::Not(c) => {
                let (lo, hi) = c.sandwich(mu, s)?;
                let flip = |f: BasicFunction| BasicFunction::LinComb(vec![(Dyadic::one(), BasicFunction::One), (-Dyadic::one(), f)]);
                Ok((flip(hi), flip(lo)))
            }
            Combo::And(cs) | Combo::Or(cs) => {
                if cs.is_empty() {
                    let v = if matches!(self, Combo::And(_)) { BasicFunction::One } else { BasicFunction::zero() };
                    return Ok((v.clone(), v));
                }
                let parts = cs.iter().map(|c| c.sandwich(mu, s)).collect::<Result<Vec<_>, _>>()?;
                let (los, his): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
                Ok(if matches!(self, Combo::And(_)) {
                    (BasicFunction::Min(los), BasicFunction::Min(his))
                } else {
                    (BasicFunction::Max(los), BasicFunction::Max(his))
                })
            }
        }
    }
}

/// `μ(A)` to within `2^-k` for a Boolean combination `A` of null-boundary
/// balls. Lower and upper indicator approximations of the leaves propagate
/// through min, max and complement, and the gap between them is at most the
/// sum of the leaves' annulus masses.
pub fn boolean_combo_measure(mu: &MeasureOracle, combo: &Combo, k: u32) -> Result<Interval, NameError> {
    let leaves = combo.leaves().max(1);
    let s = k + 2 + ceil_log2_usize(leaves);
    let (lo, hi) = combo.sandwich(mu, s)?;
    let (a, b) = par::join(|| mu.integrate(&lo, k + 2), || mu.integrate(&hi, k + 2));
    let (a, b) = (a?, b?);
    let lower = Dyadic::max(&a.lo, &Dyadic::zero());
    let upper = Dyadic::max(&b.hi, &lower);
    Ok(Interval::new(lower, upper))
}

struct XiInner {
    space: Space,
    target: CauchyName,
    count: Option<u64>,
    denoms: Memo<Interval, (usize, u32)>,
}

/// The measure on Cauchy names of `target` whose coordinates are independent,
/// coordinate `i` taking the value `n` with probability proportional to
/// `2^-n (2^-(i+1) ∸ d(b_n, z))`.
#[derive(Clone)]
pub struct XiMeasure(Arc<XiInner>);

impl std::fmt::Debug for XiMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "XiMeasure({:?})", self.0.space)
    }
}

const XI_MAX_HEAD: usize = 1 << 26;

impl XiMeasure {
    pub fn new(space: &Space, target: CauchyName) -> Self {
        XiMeasure(Arc::new(XiInner { space: space.clone(), target, count: space.basic_count(), denoms: Memo::new() }))
    }

    pub fn space(&self) -> &Space {
        &self.0.space
    }

    fn point(&self, n: usize) -> Option<BasicPoint> {
        self.0.space.decode_point(&BigUint::from(n)).ok()
    }

    /// `2^-n (2^-(i+1) ∸ d(b_n, z))` with an absolute error of `2^-(n+p)`.
    pub fn weight(&self, i: usize, n: usize, p: u32) -> Interval {
        let Some(b) = self.point(n) else { return Interval::zero() };
        let d = point_distance(&self.0.space, &CauchyName::basic(b), &self.0.target, p);
        let cap = Interval::point(Dyadic::pow2(-(i as i64) - 1));
        (&cap - &d).pos_part().scale(&Dyadic::pow2(-(n as i64)))
    }

    /// Indices in `start..end`, in order, that may lie within `2^-(i+1)` of
    /// the target; every other index has weight zero. On the unit interval
    /// these form one run per dyadic level, on Cantor space a progression.
    fn candidates(&self, i: usize, start: usize, end: usize) -> Vec<usize> {
        let end = match self.0.count {
            Some(c) => end.min(c as usize),
            None => end,
        };
        let space = &self.0.space;
        let m = i + 3;
        if start >= end {
            return Vec::new();
        }
        if m + 4 > space.name_depth().min(60) {
            return (start..end).collect();
        }
        match space {
            Space::UnitInterval => {
                // coordinate m of the target is within 2^-m of it
                let v = space.line_value(&self.0.target.at(m));
                let r = &Dyadic::pow2(-(i as i64) - 1) + &Dyadic::pow2(-(m as i64));
                let (lo, hi) = (&v - &r, &v + &r);
                let near = |x: &Dyadic| &lo <= x && x <= &hi;
                let mut out: Vec<usize> = [(0, Dyadic::zero()), (1, Dyadic::one())]
                    .into_iter()
                    .filter(|(n, x)| (start..end).contains(n) && near(x))
                    .map(|(n, _)| n)
                    .collect();
                // level j holds (2t + 1) 2^-(j+1) at index 2^j + t + 1, t < 2^j
                let mut j = 0u32;
                while (1usize << j) + 1 < end {
                    let base = (1usize << j) + 1;
                    let at = |x: &Dyadic| (&x.shl(j as i64 + 1) - &Dyadic::one()).shl(-1);
                    let t_lo = at(&lo).ceil_at(0).to_i64().unwrap_or(i64::MAX).max(0) as usize;
                    let t_hi = at(&hi).floor_at(0).to_i64().unwrap_or(-1).min((1i64 << j) - 1);
                    if t_hi >= 0 {
                        let from = (base + t_lo).max(start);
                        let to = (base + t_hi as usize + 1).min(end);
                        out.extend(from..to);
                    }
                    j += 1;
                }
                out
            }
            Space::Cantor => {
                // points within 2^-(i+1) agree with the target on bits 0..=i+1
                let low = self.0.target.at(m).idx() & ((1u64 << (i + 2)) - 1);
                let step = 1usize << (i + 2);
                let first = low as usize + (start.saturating_sub(low as usize)).div_ceil(step) * step;
                (first..end).step_by(step).collect()
            }
            _ => (start..end).collect(),
        }
    }

    /// Bound on the total weight of the indices `>= from`.
    fn tail(&self, i: usize, from: usize) -> Dyadic {
        match self.0.count {
            Some(c) if from as u64 >= c => Dyadic::zero(),
            _ => Dyadic::pow2(1 - from as i64 - i as i64 - 1),
        }
    }

    /// Normalizing sum for coordinate `i` with relative error at most `2^-k`.
    pub fn denominator(&self, i: usize, k: u32) -> Interval {
        self.0.denoms.get_or((i, k), || {
            let mut head_len = 16usize;
            let mut p = k + 4;
            loop {
                let n_max = match self.0.count {
                    Some(c) => head_len.min(c as usize),
                    None => head_len,
                };
                let cands = self.candidates(i, 0, n_max);
                let terms = par::map_slice(&cands, |&n| self.weight(i, n, p));
                let head: Interval = terms.into_iter().sum();
                let total = Interval::new(head.lo.clone(), &head.hi + &self.tail(i, n_max));
                if head.lo.is_positive() {
                    let allowed = head.lo.shl(-(k as i64) - 1);
                    if total.width() <= allowed {
                        return total;
                    }
                    p = p.max(k + 4 + bits_below(&head.lo));
                }
                assert!(head_len < XI_MAX_HEAD, "ξ coordinate {i}: no basic point near the target among the first {head_len}");
                head_len *= 2;
                p += 2;
            }
        })
    }

    /// Probability that coordinate `i` equals `n`, to within `2^-k`.
    pub fn factor(&self, i: usize, n: usize, k: u32) -> Interval {
        let den = self.denominator(i, k + 3);
        let num = self.weight(i, n, k + 3 + bits_below(&den.lo));
        num.div(&den, k as i64 + 3).expect("positive denominator").clamp(&Dyadic::zero(), &Dyadic::one())
    }

    /// `ξ[σ]`, the product of the coordinate factors for `i < |σ|`.
    pub fn cylinder(&self, sigma: &[usize], k: u32) -> Interval {
        if sigma.is_empty() {
            return Interval::one();
        }
        let q = k + 2 + ceil_log2_usize(sigma.len());
        let factors = par::map_range(sigma.len(), |i| self.factor(i, sigma[i], q));
        factors.iter().fold(Interval::one(), |acc, f| &acc * f).round_out(k as i64 + 3)
    }

    /// Coordinate `i` of the name sampled with `seed`, by inverse CDF against
    /// a uniform draw `U = (2u + 1) 2^-65`. Index `n` is returned only once
    /// `C_{n-1} <= U D < C_n` is certain for the cumulative weights `C`, which
    /// forces the weight of `n` to be certified positive.
    pub fn sample_coordinate(&self, seed: u64, i: usize) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let u = Dyadic::new(2 * num_bigint::BigInt::from(rng.next_u64()) + 1, -65);
        let limit = self.0.count.map(|c| c as usize).unwrap_or(usize::MAX);
        // distances to an inexact target resolve only as deep as its name
        let max_p = match self.0.target.exact() {
            Some(_) => 2048,
            None => self.0.space.name_depth().min(2048) as u32 - 8,
        };
        let mut p = 32u32;
        loop {
            let den = self.denominator(i, p);
            let target = den.scale(&u);
            let mut cum = Interval::zero();
            let mut start = 0usize;
            'scan: while start < limit {
                let end = (start.max(1 << 12) * 2).min(limit);
                for n in self.candidates(i, start, end) {
                    let prev = cum.clone();
                    cum = &cum + &self.weight(i, n, p + 8);
                    if prev.hi > target.lo {
                        break 'scan;
                    }
                    if target.hi < cum.lo {
                        return n;
                    }
                }
                start = end;
            }
            assert!(p < max_p, "ξ sampling at coordinate {i} did not resolve");
            p = (2 * p).min(max_p);
        }
    }
}

/// A name of the ξ target sampled deterministically from `seed`. Coordinates
/// are drawn lazily and memoized.
pub fn sample_name(xi: &XiMeasure, seed: u64) -> CauchyName {
    let xi = xi.clone();
    let memo: Arc<Memo<BasicPoint>> = Arc::new(Memo::new());
    CauchyName::from_fn(move |i| {
        memo.get_or(i, || {
            let n = xi.sample_coordinate(seed, i);
            xi.point(n).expect("sampled index decodes")
        })
    })
}

/// Certificate of one stage for export.
#[derive(Clone, Debug, Serialize)]
pub struct RadiusReport {
    pub center: u64,
    pub q1: Dyadic,
    pub q2: Dyadic,
    pub stages: Vec<SearchStage>,
}

impl NullRadius {
    pub fn report(&self) -> RadiusReport {
        let center = match &self.0.center {
            BasicPoint::Idx(n) => *n,
            BasicPoint::Tuple(_) => u64::MAX,
        };
        RadiusReport { center, q1: self.0.q1.clone(), q2: self.0.q2.clone(), stages: self.computed() }
    }
}
