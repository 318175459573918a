//! Randomness-test frontends: sequential tests and the conversions between
//! them and integral tests, Kurtz tests, martingale checks on Cantor space,
//! the built-in integral tests and deficiency estimates.

use std::fmt;
use std::sync::{Arc, Mutex};

use serde::Serialize;
use thiserror::Error;

use crate::basis::{ball_lower_approx, BasicFunction};
use crate::exact::{ceil_log2_usize, Dyadic, ExactError, Interval, RealStream};
use crate::measures::{measure_open_lower, MeasureError, MeasureOracle, OpenSet};
use crate::names::{bits_below, boolean_combo_measure, find_null_radius, AeBall, Combo, NameError};
use crate::par;
use crate::search::{refine_stage, PieceBound, SearchPlan, SearchStage};
use crate::semicomp::{IntegralFn, IntegralTest, LscFunction, Memo, SemiError, TestFamily, TestIntegral};
use crate::spaces::{point_distance, BasicPoint, CauchyName, Space};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TestError {
    #[error(transparent)]
    Semi(#[from] SemiError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Name(#[from] NameError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("null-level search for level {level} found no light piece at stage {stage}")]
    Budget { level: usize, stage: u32 },
    #[error("nullity unverified at budget {budget}")]
    Unverified { budget: usize },
}

/// The levels `U_0 ⊇ U_1 ⊇ ...` of a sequential test, for one measure or
/// uniformly in the measure.
pub trait LevelFamily: Send + Sync {
    /// Stage `m` lower approximation of `1_{U_n}`: nondecreasing in `m` with
    /// supremum `1_{U_n}`. `None` stands for the zero function.
    fn stage_function(&self, mu: &MeasureOracle, n: usize, m: usize) -> Result<Option<BasicFunction>, TestError>;

    /// Membership of `x` in `U_n` when the first `depth` stages settle it.
    fn contains(&self, mu: &MeasureOracle, n: usize, x: &CauchyName, depth: usize) -> Result<Option<bool>, TestError>;

    /// `μ(U_n)` to within `2^-k`.
    fn level_measure(&self, mu: &MeasureOracle, n: usize, k: u32) -> Result<Interval, TestError>;

    /// The threshold `c` of a level `{t > c}` and the stages used, if any.
    fn threshold(&self, _mu: &MeasureOracle, _n: usize, _k: u32) -> Result<Option<(Interval, usize)>, TestError> {
        Ok(None)
    }
}

/// A sequential test: `μ(U_n) <= 2^-n` with `μ(U_n)` computable.
#[derive(Clone)]
pub struct SequentialTest {
    name: String,
    space: Space,
    levels: Arc<dyn LevelFamily>,
}

impl fmt::Debug for SequentialTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SequentialTest({}, {:?})", self.name, self.space)
    }
}

/// Exported summary of one level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LevelCertificate {
    pub n: usize,
    pub c: Option<Interval>,
    pub level_measure: Interval,
    pub stages_used: usize,
}

impl SequentialTest {
    pub fn new(name: impl Into<String>, space: &Space, levels: impl LevelFamily + 'static) -> Self {
        SequentialTest { name: name.into(), space: space.clone(), levels: Arc::new(levels) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    fn check(&self, mu: &MeasureOracle) -> Result<(), TestError> {
        if mu.space() != &self.space {
            return Err(MeasureError::SpaceMismatch(format!("test on {:?}, measure on {:?}", self.space, mu.space())).into());
        }
        Ok(())
    }

    pub fn stage_function(&self, mu: &MeasureOracle, n: usize, m: usize) -> Result<Option<BasicFunction>, TestError> {
        self.check(mu)?;
        self.levels.stage_function(mu, n, m)
    }

    pub fn contains(&self, mu: &MeasureOracle, n: usize, x: &CauchyName, depth: usize) -> Result<Option<bool>, TestError> {
        self.check(mu)?;
        self.levels.contains(mu, n, x, depth)
    }

    pub fn level_measure(&self, mu: &MeasureOracle, n: usize, k: u32) -> Result<Interval, TestError> {
        self.check(mu)?;
        self.levels.level_measure(mu, n, k)
    }

    pub fn certificate(&self, mu: &MeasureOracle, n: usize, k: u32) -> Result<LevelCertificate, TestError> {
        let level_measure = self.level_measure(mu, n, k)?;
        let (c, stages_used) = match self.levels.threshold(mu, n, k)? {
            Some((c, s)) => (Some(c), s),
            None => (None, 0),
        };
        Ok(LevelCertificate { n, c, level_measure, stages_used })
    }
}

/// Bit `i` of a Cantor-space name; stage `i` agrees with the point on bits
/// `0..=i`.
pub fn cantor_bit(x: &CauchyName, i: usize) -> bool {
    i < 64 && x.at(i).idx() >> i & 1 == 1
}

/// Indicator of the cylinder `[σ]`, exact because Cantor distances are
/// powers of two.
pub fn cylinder_indicator(sigma: &[bool]) -> BasicFunction {
    if sigma.is_empty() {
        return BasicFunction::One;
    }
    assert!(sigma.iter().skip(64).all(|b| !b), "cylinder centers are limited to 64 bits");
    let c = sigma.iter().take(64).enumerate().fold(0u64, |acc, (i, &b)| if b { acc | 1 << i } else { acc });
    let l = sigma.len() as i64;
    BasicFunction::Bump { center: BasicPoint::Idx(c), r: Dyadic::pow2(-l), s: Dyadic::pow2(1 - l) }
}

/// Levels `U_n = [σ_n]` on Cantor space.
pub struct CylinderLevels {
    prefix: Arc<dyn Fn(usize) -> Vec<bool> + Send + Sync>,
}

impl CylinderLevels {
    pub fn new(prefix: impl Fn(usize) -> Vec<bool> + Send + Sync + 'static) -> Self {
        CylinderLevels { prefix: Arc::new(prefix) }
    }
}

impl LevelFamily for CylinderLevels {
    fn stage_function(&self, _mu: &MeasureOracle, n: usize, _m: usize) -> Result<Option<BasicFunction>, TestError> {
        Ok(Some(cylinder_indicator(&(self.prefix)(n))))
    }

    fn contains(&self, _mu: &MeasureOracle, n: usize, x: &CauchyName, _depth: usize) -> Result<Option<bool>, TestError> {
        let sigma = (self.prefix)(n);
        Ok(Some(sigma.iter().enumerate().all(|(i, &b)| cantor_bit(x, i) == b)))
    }

    fn level_measure(&self, mu: &MeasureOracle, n: usize, k: u32) -> Result<Interval, TestError> {
        let sigma = (self.prefix)(n);
        if let Some(m) = mu.cylinder_mass(&sigma) {
            return Ok(Interval::point(m));
        }
        Ok(mu.integrate(&cylinder_indicator(&sigma), k)?)
    }
}

/// `U_n = [0^n]`, a test for every measure with `μ[0^n] <= 2^-n`. Level 0 is
/// the whole space.
pub fn zero_run_test() -> SequentialTest {
    SequentialTest::new("zero-run", &Space::Cantor, CylinderLevels::new(|n| vec![false; n]))
}

/// `t = Σ_n 1_{U_n}`. Stage `N` sums the stage-`N` approximations of the
/// first `N` levels; the integral adds the level measures with the tail
/// bound `Σ_{n >= N} 2^-n = 2^{1-N}`. A level certainly heavier than `2^-n`
/// is reported as a precondition failure.
pub fn sum_sequential_to_integral(seq: &SequentialTest) -> IntegralTest {
    let src = seq.clone();
    let family: TestFamily = Arc::new(move |mu| {
        let (seq, mu) = (src.clone(), mu.clone());
        Ok(LscFunction::from_stages(&seq.space.clone(), true, move |big_n| {
            let terms = (0..big_n)
                .filter_map(|n| seq.stage_function(&mu, n, big_n).ok().flatten())
                .map(|f| (Dyadic::one(), f))
                .collect();
            BasicFunction::LinComb(terms)
        }))
    });
    let src = seq.clone();
    let integral: TestIntegral = Arc::new(move |mu, k| {
        let big_n = k as usize + 3;
        let p = k + 3 + ceil_log2_usize(big_n);
        let levels = par::map_range(big_n, |n| src.level_measure(mu, n, p));
        let mut acc = Interval::zero();
        for (n, lv) in levels.into_iter().enumerate() {
            let lv = lv.map_err(|e| SemiError::Precondition(e.to_string()))?;
            let cap = Dyadic::pow2(-(n as i64));
            if lv.lo > cap {
                return Err(SemiError::Precondition(format!("level {n} has measure above 2^-{n}")));
            }
            acc = &acc + &Interval::new(Dyadic::max(&lv.lo, &Dyadic::zero()), Dyadic::min(&lv.hi, &cap));
        }
        Ok(Interval::new(acc.lo, &acc.hi + &Dyadic::pow2(1 - big_n as i64)))
    });
    IntegralTest::new(format!("sum({})", seq.name), &seq.space, family, integral)
}

/// `clamp((g - u) / f, 0, 1)` for a power of two `f`.
fn ramp_up(g: &BasicFunction, u: &Dyadic, f: &Dyadic) -> BasicFunction {
    let inv = Dyadic::pow2(-f.exponent());
    let lin = BasicFunction::LinComb(vec![(inv.clone(), g.clone()), (-(u * &inv), BasicFunction::One)]);
    BasicFunction::Min(vec![BasicFunction::One, BasicFunction::Max(vec![BasicFunction::zero(), lin])])
}

/// 1 on `[a - f, b]`, 0 outside `(a - 2f, b + f)`, as a function of `g`.
fn window(g: &BasicFunction, a: &Dyadic, b: &Dyadic, f: &Dyadic) -> BasicFunction {
    let up = ramp_up(g, &(a - &f.shl(1)), f);
    let down = BasicFunction::LinComb(vec![(Dyadic::one(), BasicFunction::One), (-Dyadic::one(), ramp_up(g, b, f))]);
    BasicFunction::Min(vec![up, down])
}

const NULL_LEVEL_PLAN: SearchPlan = SearchPlan { max_effort: 6, coarse_first: true };
const MAX_LSC_STAGE: usize = 1 << 14;

struct LevelInner {
    n: usize,
    mu: MeasureOracle,
    lsc: LscFunction,
    integral: IntegralFn,
    norm_hi: Dyadic,
    stages: Mutex<Vec<SearchStage>>,
}

/// A threshold `c ∈ [2^{n+1}, 2^{n+2}]` with `μ{t = c} = 0`, found by nested
/// subdivision of the window, so that `μ{t > c}` is computable and at most
/// `2^-n`.
#[derive(Clone)]
pub struct NullLevel(Arc<LevelInner>);

impl fmt::Debug for NullLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NullLevel(n={}, {} stages)", self.0.n, self.0.stages.lock().unwrap().len())
    }
}

impl LevelInner {
    /// Upper bound on `∫ t - ∫ t_m`.
    fn gap(&self, m: usize, q: u32) -> Result<Dyadic, TestError> {
        let (total, part) = par::join(|| (self.integral)(q), || self.mu.integrate(&self.lsc.stage(m), q));
        Ok(Dyadic::max(&(&total?.hi - &part?.lo), &Dyadic::zero()))
    }

    /// The first lsc stage from `base` on (in steps of a quarter) whose gap
    /// is at most `target`, with that gap.
    fn stage_for(&self, base: usize, target: &Dyadic) -> Result<(usize, Dyadic), TestError> {
        let q = bits_below(target) + 3;
        let mut m = base.max(1);
        loop {
            let gap = self.gap(m, q)?;
            if &gap <= target {
                return Ok((m, gap));
            }
            if m > MAX_LSC_STAGE {
                return Err(SemiError::Budget(m).into());
            }
            m += (m / 4).max(2);
        }
    }
}

struct LevelBound<'a> {
    inner: &'a LevelInner,
    base: usize,
    memo: Memo<Result<(usize, Dyadic), TestError>, (Dyadic, Dyadic)>,
}

impl PieceBound for LevelBound<'_> {
    type Error = TestError;
    fn bound(&self, a: &Dyadic, b: &Dyadic, fat: &Dyadic, tol: &Dyadic) -> Result<(Dyadic, usize), TestError> {
        // the stage depends only on (fat, tol), which all pieces of a round
        // share, so parallel pieces agree on it
        let (m, gap) = self.memo.get_or((fat.clone(), tol.clone()), || {
            self.inner.stage_for(self.base, &(fat * tol).shl(-1))
        })?;
        let w = window(&self.inner.lsc.stage(m), a, b, fat);
        let iv = self.inner.mu.integrate(&w, bits_below(tol) + 2)?;
        Ok((&iv.hi + &gap.shl(-fat.exponent()), m))
    }
}

/// Search for the null level `n` of `t` under `μ`. Requires `∫ t dμ <= 2`,
/// which holds after normalization.
pub fn find_null_level(t: &IntegralTest, mu: &MeasureOracle, n: usize) -> Result<NullLevel, TestError> {
    let lsc = t.lsc(mu)?;
    let integral = t.integral_fn(mu);
    check_integral_at_most_two(&integral)?;
    let norm_hi = mu.norm(20)?.hi;
    let level = NullLevel(Arc::new(LevelInner { n, mu: mu.clone(), lsc, integral, norm_hi, stages: Mutex::new(Vec::new()) }));
    level.stage(1)?;
    Ok(level)
}

fn check_integral_at_most_two(integral: &IntegralFn) -> Result<(), TestError> {
    if integral(12)?.lo > Dyadic::from(2) {
        return Err(TestError::Precondition("∫ t dμ exceeds 2; normalize the test first".into()));
    }
    Ok(())
}

impl NullLevel {
    pub fn n(&self) -> usize {
        self.0.n
    }

    /// Stages computed so far.
    pub fn computed(&self) -> Vec<SearchStage> {
        self.0.stages.lock().unwrap().clone()
    }

    /// Stage `s >= 1`, computing it and its predecessors when needed.
    pub fn stage(&self, s: u32) -> Result<SearchStage, TestError> {
        assert!(s >= 1);
        let inner = &*self.0;
        let mut st = inner.stages.lock().unwrap();
        while st.len() < s as usize {
            let (lo, hi, base) = match st.last() {
                Some(p) => (p.lo.clone(), p.hi.clone(), p.effort),
                None => (Dyadic::pow2(inner.n as i64 + 1), Dyadic::pow2(inner.n as i64 + 2), 1),
            };
            let next = st.len() as u32 + 1;
            let bound = LevelBound { inner, base, memo: Memo::new() };
            match refine_stage(&lo, &hi, next, &inner.norm_hi, &bound, NULL_LEVEL_PLAN)? {
                Some(stage) => st.push(stage),
                None => return Err(TestError::Budget { level: inner.n, stage: next }),
            }
        }
        Ok(st[s as usize - 1].clone())
    }

    /// `c` to within `2^-k`, with the number of stages used.
    pub fn threshold(&self, k: u32) -> Result<(Interval, usize), TestError> {
        let mut s = 1;
        loop {
            let st = self.stage(s)?;
            let iv = Interval::new(st.lo, st.hi);
            if iv.within(k) {
                return Ok((iv, s as usize));
            }
            s += 1;
        }
    }

    pub fn c_stream(&self) -> RealStream {
        let me = self.clone();
        RealStream::from_fn(move |k| me.threshold(k).expect("null-level search").0)
    }

    /// Markov's bound `μ{t > 2^{n+1}} <= 2^{-(n+1)} ∫ t dμ`.
    pub fn markov_bound(&self) -> Result<Dyadic, TestError> {
        Ok((self.0.integral)(12)?.hi.shl(-(self.0.n as i64) - 1))
    }

    /// `μ{t > c}` to within `2^-k`. The lower bound integrates a ramp of
    /// `t_m` above the stage interval; the upper bound integrates a ramp
    /// below it and adds `(∫ t - ∫ t_m) / fat` for the part of `t` the
    /// stage misses, capped by Markov's bound.
    pub fn level_measure(&self, k: u32) -> Result<Interval, TestError> {
        let st = self.stage(k + 2)?;
        let inner = &*self.0;
        let (m, gap) = inner.stage_for(st.effort, &st.fat.shl(-(k as i64) - 3))?;
        let g = inner.lsc.stage(m);
        let lower = ramp_up(&g, &st.hi, &st.fat);
        let upper = ramp_up(&g, &(&st.lo - &st.fat.shl(1)), &st.fat);
        let (l, u) = par::join(|| inner.mu.integrate(&lower, k + 3), || inner.mu.integrate(&upper, k + 3));
        let lo = Dyadic::max(&l?.lo, &Dyadic::zero());
        let hi = Dyadic::min(&(&u?.hi + &gap.shl(-st.fat.exponent())), &self.markov_bound()?);
        Ok(Interval::new(lo.clone(), Dyadic::max(&hi, &lo)))
    }

    pub fn level_stream(&self) -> RealStream {
        let me = self.clone();
        RealStream::from_fn(move |k| me.level_measure(k).expect("null-level search"))
    }

    /// Stage `m` lower approximation of `1{t > c}`: a ramp of `t_m` that
    /// reaches 1 at `hi_{m+1} + fat_{m+1}`.
    pub fn stage_function(&self, m: usize) -> Result<BasicFunction, TestError> {
        let st = self.stage(m as u32 + 1)?;
        Ok(ramp_up(&self.0.lsc.stage(m), &st.hi, &st.fat))
    }

    /// `Some(true)` once a stage of `t` at `x` certainly exceeds the first
    /// stage's upper end; membership is never refuted from lower bounds.
    pub fn contains(&self, x: &CauchyName, depth: usize) -> Result<Option<bool>, TestError> {
        let c_hi = self.stage(1)?.hi;
        Ok((0..=depth).any(|m| self.0.lsc.approx(m, x, m as u32 + 4).lo > c_hi).then_some(true))
    }
}

struct DerivedLevels {
    t: IntegralTest,
    mu: MeasureOracle,
    levels: Memo<Result<NullLevel, TestError>>,
}

impl DerivedLevels {
    fn level(&self, mu: &MeasureOracle, n: usize) -> Result<NullLevel, TestError> {
        if !mu.same_as(&self.mu) {
            return Err(TestError::Precondition(format!("levels were derived for {}", self.mu.describe())));
        }
        self.levels.get_or(n, || find_null_level(&self.t, &self.mu, n))
    }
}

impl LevelFamily for DerivedLevels {
    fn stage_function(&self, mu: &MeasureOracle, n: usize, m: usize) -> Result<Option<BasicFunction>, TestError> {
        Ok(Some(self.level(mu, n)?.stage_function(m)?))
    }

    fn contains(&self, mu: &MeasureOracle, n: usize, x: &CauchyName, depth: usize) -> Result<Option<bool>, TestError> {
        self.level(mu, n)?.contains(x, depth)
    }

    fn level_measure(&self, mu: &MeasureOracle, n: usize, k: u32) -> Result<Interval, TestError> {
        self.level(mu, n)?.level_measure(k)
    }

    fn threshold(&self, mu: &MeasureOracle, n: usize, k: u32) -> Result<Option<(Interval, usize)>, TestError> {
        Ok(Some(self.level(mu, n)?.threshold(k)?))
    }
}

/// The sequential test `V_n = {t > c_n}` of an integral test with
/// `∫ t dμ <= 2`, for this `μ`. Levels are searched on first use.
pub fn integral_to_sequential(t: &IntegralTest, mu: &MeasureOracle) -> Result<SequentialTest, TestError> {
    check_integral_at_most_two(&t.integral_fn(mu))?;
    let levels = DerivedLevels { t: t.clone(), mu: mu.clone(), levels: Memo::new() };
    Ok(SequentialTest::new(format!("levels({})", t.name()), t.space(), levels))
}

/// `P = X \ U` for an effectively open `U`. That `μ(P) = 0` is the caller's
/// claim.
#[derive(Clone, Debug)]
pub struct KurtzTest {
    pub space: Space,
    pub complement: OpenSet,
}

struct KurtzLevels {
    p: KurtzTest,
    mu: MeasureOracle,
    budget: usize,
    covers: Memo<Result<Arc<Vec<AeBall>>, TestError>>,
}

fn union(balls: &[AeBall]) -> Combo {
    Combo::Or(balls.iter().cloned().map(Combo::Ball).collect())
}

impl KurtzLevels {
    /// Closed null-boundary balls inside `U` whose union has measure above
    /// `‖μ‖ - 2^-n`. Each ball `B(c, r)` of `U` contributes `B̄(c, r')` with
    /// `r' ∈ [5r/8, 7r/8]`.
    fn cover(&self, mu: &MeasureOracle, n: usize) -> Result<Arc<Vec<AeBall>>, TestError> {
        if !mu.same_as(&self.mu) {
            return Err(TestError::Precondition(format!("levels were derived for {}", self.mu.describe())));
        }
        self.covers.get_or(n, || {
            let k = n as u32 + 3;
            let goal = &self.mu.norm(k)?.hi - &Dyadic::pow2(-(n as i64));
            if !goal.is_positive() {
                return Ok(Arc::new(Vec::new()));
            }
            let mut balls = Vec::new();
            for i in 0..self.budget {
                let Some((center, r)) = self.p.complement.ball(i) else { continue };
                let q1 = &r * &Dyadic::frac(5, 3);
                let q2 = &r * &Dyadic::frac(7, 3);
                let cert = find_null_radius(&self.mu, center.clone(), q1, q2, &Dyadic::frac(1, 1))?;
                balls.push(AeBall { center, cert });
                if boolean_combo_measure(&self.mu, &union(&balls), k)?.lo > goal {
                    return Ok(Arc::new(balls));
                }
            }
            Err(TestError::Unverified { budget: self.budget })
        })
    }
}

impl LevelFamily for KurtzLevels {
    fn stage_function(&self, mu: &MeasureOracle, n: usize, m: usize) -> Result<Option<BasicFunction>, TestError> {
        let balls = self.cover(mu, n)?;
        if balls.is_empty() {
            return Ok(Some(BasicFunction::One));
        }
        let uppers = balls.iter().map(|b| Ok(b.cert.sandwich(m as u32 + 1)?.1)).collect::<Result<Vec<_>, TestError>>()?;
        Ok(Some(BasicFunction::LinComb(vec![
            (Dyadic::one(), BasicFunction::One),
            (-Dyadic::one(), BasicFunction::Max(uppers)),
        ])))
    }

    fn contains(&self, mu: &MeasureOracle, n: usize, x: &CauchyName, depth: usize) -> Result<Option<bool>, TestError> {
        let balls = self.cover(mu, n)?;
        let mut all_outside = true;
        for b in balls.iter() {
            let d = point_distance(&self.p.space, x, &CauchyName::basic(b.center.clone()), depth as u32 + 4);
            let r = b.cert.radius(depth as u32)?;
            if d.hi < r.lo {
                return Ok(Some(false));
            }
            all_outside &= d.lo > r.hi;
        }
        Ok(all_outside.then_some(true))
    }

    fn level_measure(&self, mu: &MeasureOracle, n: usize, k: u32) -> Result<Interval, TestError> {
        let balls = self.cover(mu, n)?;
        let norm = self.mu.norm(k + 1)?;
        if balls.is_empty() {
            return Ok(norm);
        }
        let covered = boolean_combo_measure(&self.mu, &union(&balls), k + 1)?;
        Ok((&norm - &covered).clamp(&Dyadic::zero(), &norm.hi))
    }
}

/// The sequential test `V_n = X \ (B̄_1 ∪ ... ∪ B̄_K)` of a Kurtz test, for
/// this `μ`. Each level searches at most `budget` balls of `U`. Level 1 is
/// checked eagerly (level 0 is trivial for probability measures) so a false
/// nullity claim usually surfaces here as [`TestError::Unverified`].
pub fn kurtz_to_sequential(p: &KurtzTest, mu: &MeasureOracle, budget: usize) -> Result<SequentialTest, TestError> {
    if mu.space() != &p.space {
        return Err(MeasureError::SpaceMismatch(format!("test on {:?}, measure on {:?}", p.space, mu.space())).into());
    }
    let levels = KurtzLevels { p: p.clone(), mu: mu.clone(), budget, covers: Memo::new() };
    levels.cover(mu, 1)?;
    Ok(SequentialTest::new("kurtz", &p.space, levels))
}

/// A rate `f`, nondecreasing and unbounded.
pub type Rate = Arc<dyn Fn(usize) -> Dyadic + Send + Sync>;

/// `ν` with rate `f` on Cantor space. The uniform test flags
/// `ν[x↾n] > f(n) μ[x↾n]`; the blind mode flags `ν[x↾n] >= f(n) μ[x↾n]`.
#[derive(Clone)]
pub struct MartingaleTest {
    pub nu: MeasureOracle,
    pub rate: Rate,
    pub blind: bool,
}

impl fmt::Debug for MartingaleTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MartingaleTest({}, blind={})", self.nu.describe(), self.blind)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MartingaleRow {
    pub n: usize,
    pub mu: Dyadic,
    pub nu: Dyadic,
    pub rate: Dyadic,
    /// `ν/μ` to within `2^-32`, absent when `μ[x↾n] = 0`.
    pub ratio: Option<Interval>,
    pub exceeds: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum MartingaleVerdict {
    OutsideSupport { n: usize },
    Exceeds { first: usize, argmax: usize },
    WithinRate { argmax: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MartingaleReport {
    pub rows: Vec<MartingaleRow>,
    pub verdict: MartingaleVerdict,
}

fn exact_mass(m: &MeasureOracle, sigma: &[bool]) -> Result<Dyadic, TestError> {
    m.cylinder_mass(sigma)
        .ok_or_else(|| TestError::Precondition(format!("{} has no exact cylinder masses", m.describe())))
}

/// `ν[σ0] + ν[σ1] = ν[σ]`, compared exactly.
pub fn martingale_identity(nu: &MeasureOracle, sigma: &[bool]) -> Result<bool, TestError> {
    let child = |b: bool| {
        let mut s = sigma.to_vec();
        s.push(b);
        exact_mass(nu, &s)
    };
    Ok(&child(false)? + &child(true)? == exact_mass(nu, sigma)?)
}

/// Ratios `ν[x↾n] / μ[x↾n]` for `n <= depth` against the rate. The verdict
/// looks at the second half of the window: an exceedance there is the
/// finite-window reading of "infinitely often". The argmax is the leftmost
/// `n` in that half with the largest ratio.
pub fn martingale_check(m: &MartingaleTest, mu: &MeasureOracle, x: &CauchyName, depth: usize) -> Result<MartingaleReport, TestError> {
    if mu.space() != &Space::Cantor || m.nu.space() != &Space::Cantor {
        return Err(TestError::Precondition("martingale tests live on Cantor space".into()));
    }
    assert!(depth <= 64, "prefixes are read from basic points of at most 64 bits");
    let bits: Vec<bool> = (0..depth).map(|i| cantor_bit(x, i)).collect();
    let mut rows = Vec::new();
    for n in 0..=depth {
        let sigma = &bits[..n];
        let (mm, nm) = (exact_mass(mu, sigma)?, exact_mass(&m.nu, sigma)?);
        let rate = (m.rate)(n);
        if mm.is_zero() {
            rows.push(MartingaleRow { n, mu: mm, nu: nm, rate, ratio: None, exceeds: false });
            return Ok(MartingaleReport { rows, verdict: MartingaleVerdict::OutsideSupport { n } });
        }
        let bar = &rate * &mm;
        let exceeds = if m.blind { nm >= bar } else { nm > bar };
        let ratio = Interval::point(nm.clone()).div(&Interval::point(mm.clone()), 34)?.round_out(34);
        rows.push(MartingaleRow { n, mu: mm, nu: nm, rate, ratio: Some(ratio), exceeds });
    }
    let tail = &rows[depth / 2..];
    let mut best = &tail[0];
    for r in tail {
        // ν_r / μ_r > ν_b / μ_b, cross-multiplied
        if &r.nu * &best.mu > &best.nu * &r.mu {
            best = r;
        }
    }
    let argmax = best.n;
    let verdict = match tail.iter().find(|r| r.exceeds) {
        Some(r) => MartingaleVerdict::Exceeds { first: r.n, argmax },
        None => MartingaleVerdict::WithinRate { argmax },
    };
    Ok(MartingaleReport { rows, verdict })
}

/// `t_μ = ‖μ‖^{-1/2}`, constant in `x` and infinite at the zero measure, with
/// `∫ t dμ = ‖μ‖^{1/2}`.
pub fn zero_measure_test(space: &Space) -> IntegralTest {
    let family: TestFamily = Arc::new(|mu| {
        let space = mu.space().clone();
        let mu = mu.clone();
        let values: Arc<Memo<Dyadic>> = Arc::new(Memo::new());
        let value = move |j: usize| -> Dyadic {
            values.get_or(j, || {
                let p = 2 * j as u32 + 4;
                match mu.norm(p) {
                    Ok(iv) if iv.hi.is_positive() => {
                        let root = Interval::point(iv.hi).sqrt(p as i64).hi;
                        Interval::point(root).recip(p as i64).map(|r| r.lo).unwrap_or_else(|_| Dyadic::zero())
                    }
                    Ok(_) => Dyadic::pow2(j as i64),
                    Err(_) => Dyadic::zero(),
                }
            })
        };
        Ok(LscFunction::from_stages(&space, true, move |m| {
            let c = (0..=m).map(&value).max().expect("nonempty range");
            BasicFunction::constant(c)
        }))
    });
    let integral: TestIntegral = Arc::new(|mu, k| {
        let norm = mu.norm(2 * k + 4)?;
        let norm = Interval::new(Dyadic::max(&norm.lo, &Dyadic::zero()), Dyadic::max(&norm.hi, &Dyadic::zero()));
        Ok(norm.sqrt(k as i64 + 3))
    });
    IntegralTest::new("zero-measure", space, family, integral)
}

/// `t_μ = ∞` on the open ball `B(center, radius)` and 0 elsewhere, a test for
/// the measures with `μ(B) = 0`. Measures certified to charge `B` are
/// rejected.
pub fn support_test(space: &Space, center: BasicPoint, radius: Dyadic) -> IntegralTest {
    let (c, r) = (center.clone(), radius.clone());
    let family: TestFamily = Arc::new(move |mu| {
        let (c, r) = (c.clone(), r.clone());
        Ok(LscFunction::from_stages(mu.space(), false, move |n| {
            BasicFunction::LinComb(vec![(Dyadic::from(n as i64), ball_lower_approx(c.clone(), &r, n as u32))])
        }))
    });
    let ball = OpenSet::from_balls(vec![(center.clone(), radius.clone())]);
    let integral: TestIntegral = Arc::new(move |mu, k| {
        if measure_open_lower(mu, &ball, k as usize + 4)?.is_positive() {
            return Err(SemiError::Precondition(format!("{} charges the ball", mu.describe())));
        }
        Ok(Interval::zero())
    });
    IntegralTest::new(format!("support({center:?},{radius})"), space, family, integral)
}

struct Tent {
    mu: MeasureOracle,
    x0: BasicPoint,
    weights: Memo<Result<Interval, TestError>, (usize, u32)>,
}

impl Tent {
    /// `min(1 - 2^-j, f_m)` with `f_m = 1 ∸ 2^m d(x0, ·)`.
    fn approx(&self, m: usize, j: u32) -> BasicFunction {
        let s = Dyadic::pow2(-(m as i64));
        let inner = BasicFunction::Bump { center: self.x0.clone(), r: Dyadic::pow2(-(m as i64) - j as i64), s };
        BasicFunction::LinComb(vec![(&Dyadic::one() - &Dyadic::pow2(-(j as i64)), inner)])
    }

    /// `∫ f_m dμ` to within `2^-p`.
    fn mass(&self, m: usize, p: u32) -> Result<Interval, TestError> {
        let j = p + 1 + self.mu.norm_bound().ceil_log2().unwrap_or(0).max(0) as u32;
        let iv = self.mu.integrate(&self.approx(m, j), p + 1)?;
        let slack = &self.mu.norm_bound() * &Dyadic::pow2(-(j as i64));
        Ok(Interval::new(Dyadic::max(&iv.lo, &Dyadic::zero()), &iv.hi + &slack))
    }

    /// `w_m = 2^-m / max(2^-m, ∫ f_m dμ)` to within `2^-p`, with `p` rounded
    /// up to a multiple of 16 so the value does not depend on call order.
    fn weight(&self, m: usize, p: u32) -> Result<Interval, TestError> {
        let p = p.div_ceil(16) * 16;
        self.weights.get_or((m, p), || {
            let e = self.mass(m, p + m as u32 + 2)?;
            let s = Dyadic::pow2(-(m as i64));
            let den = Interval::new(Dyadic::max(&e.lo, &s), Dyadic::max(&e.hi, &s));
            Ok(Interval::point(s).div(&den, p as i64 + 2)?.round_out(p as i64 + 1))
        })
    }

    /// `c_{m,N} <= w_m`, nondecreasing in `N` and within `2^-N` of `w_m`.
    fn coefficient(&self, m: usize, big_n: usize) -> Dyadic {
        match self.weight(m, big_n as u32 + 2) {
            Ok(w) => {
                let lo = w.lo.floor_at(big_n as i64 + 2);
                Dyadic::max(&(&lo - &Dyadic::pow2(-(big_n as i64) - 1)), &Dyadic::zero())
            }
            Err(_) => Dyadic::zero(),
        }
    }
}

/// The tent test at `x0` over probability measures:
/// `t_μ = Σ_m 2^-m / max(2^-m, ∫ f_m dμ) · f_m` with `f_m = 1 ∸ 2^m d(x0, ·)`.
/// Stage `N` is `Σ_{m<N} c_{m,N} min(1 - 2^-N, f_m)`, and the integral is
/// `Σ_m min(∫ f_m dμ, 2^-m)` with tail `2^{1-N}`.
pub fn tent_test(space: &Space, x0: BasicPoint) -> IntegralTest {
    let x = x0.clone();
    let family: TestFamily = Arc::new(move |mu| {
        let tent = Arc::new(Tent { mu: mu.clone(), x0: x.clone(), weights: Memo::new() });
        Ok(LscFunction::from_stages(mu.space(), true, move |big_n| {
            let terms = (0..big_n)
                .map(|m| (tent.coefficient(m, big_n), tent.approx(m, big_n as u32)))
                .filter(|(c, _)| !c.is_zero())
                .collect();
            BasicFunction::LinComb(terms)
        }))
    });
    let x = x0.clone();
    let integral: TestIntegral = Arc::new(move |mu, k| {
        let tent = Tent { mu: mu.clone(), x0: x.clone(), weights: Memo::new() };
        let big_n = k as usize + 3;
        let p = k + 3 + ceil_log2_usize(big_n);
        let parts = par::map_range(big_n, |m| tent.mass(m, p));
        let mut acc = Interval::zero();
        for (m, e) in parts.into_iter().enumerate() {
            let e = e.map_err(|e| SemiError::Precondition(e.to_string()))?;
            acc = &acc + &e.min(&Interval::point(Dyadic::pow2(-(m as i64))));
        }
        Ok(Interval::new(acc.lo, &acc.hi + &Dyadic::pow2(1 - big_n as i64)))
    });
    IntegralTest::new(format!("tent({x0:?})"), space, family, integral)
}

/// Certified lower bound on `t_μ(x)` from the first `depth` stages;
/// nondecreasing in `depth` with supremum `t_μ(x)`.
pub fn eval_deficiency(t: &IntegralTest, mu: &MeasureOracle, x: &CauchyName, depth: usize) -> Result<Dyadic, TestError> {
    Ok(t.lsc(mu)?.lower_bound(x, depth))
}

#[cfg(test)]
mod tests;
