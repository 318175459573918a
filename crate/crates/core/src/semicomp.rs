//! Lower semicomputable functions and the families built from them.
//!
//! An [`LscFunction`] is the pointwise supremum of a nondecreasing sequence of
//! basic functions. From one we build the interpolating family `f(r)` of
//! basic functions, reparametrize it by its integral against a measure
//! (calibration), cut it off at an integral budget, cap it in the Luzin style,
//! and extend Lipschitz data off a finite set.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::basis::{eval_basic, BasicFunction, BasisError};
use crate::exact::{sum_with_tail_bound, Dyadic, ExactError, Interval};
use crate::measures::{MeasureError, MeasureOracle};
use crate::spaces::{point_distance, BasicPoint, CauchyName, Space};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemiError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("stage {stage} lies strictly below stage {} at the evaluated point", stage - 1)]
    Monotonicity { stage: usize },
    #[error("target out of range: {0}")]
    OutOfRange(String),
    #[error("search did not settle within {0} steps")]
    Budget(usize),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

/// A real number computed on demand, possibly failing.
pub type IntegralFn = Arc<dyn Fn(u32) -> Result<Interval, SemiError> + Send + Sync>;

pub type StageFn = Arc<dyn Fn(usize) -> BasicFunction + Send + Sync>;

/// Thread-safe memo table.
pub(crate) struct Memo<T, K = usize>(Mutex<HashMap<K, T>>);

impl<T: Clone, K: std::hash::Hash + Eq> Memo<T, K> {
    pub(crate) fn new() -> Self {
        Memo(Mutex::new(HashMap::new()))
    }

    pub(crate) fn get_or(&self, n: K, f: impl FnOnce() -> T) -> T {
        if let Some(v) = self.0.lock().unwrap().get(&n) {
            return v.clone();
        }
        // computed outside the lock; concurrent callers compute the same value
        let v = f();
        self.0.lock().unwrap().entry(n).or_insert(v).clone()
    }
}

#[derive(Clone)]
pub struct LscFunction {
    space: Space,
    stages: StageFn,
    clamp: bool,
}

impl fmt::Debug for LscFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LscFunction({:?}, clamp={})", self.space, self.clamp)
    }
}

impl LscFunction {
    /// `g` must be nondecreasing in `n`. With `clamp`, stage `n` is
    /// `min(g(n), n)`, which keeps the supremum and bounds every stage.
    pub fn from_stages(space: &Space, clamp: bool, g: impl Fn(usize) -> BasicFunction + Send + Sync + 'static) -> Self {
        LscFunction { space: space.clone(), stages: Arc::new(g), clamp }
    }

    pub fn constant(space: &Space, c: Dyadic) -> Self {
        LscFunction::from_stages(space, true, move |_| BasicFunction::constant(c.clone()))
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn stage(&self, n: usize) -> BasicFunction {
        let g = (self.stages)(n);
        if self.clamp {
            BasicFunction::Min(vec![g, BasicFunction::constant(Dyadic::from(n as i64))])
        } else {
            g
        }
    }

    /// Stage `n` at `x`, to within `2^-k`.
    pub fn approx(&self, n: usize, x: &CauchyName, k: u32) -> Interval {
        eval_basic(&self.stage(n), &self.space, x, k)
    }

    /// [`approx`](Self::approx), also comparing with the previous stage. A
    /// violation is reported only when stage `n` is certainly below stage
    /// `n - 1`.
    pub fn checked_approx(&self, n: usize, x: &CauchyName, k: u32) -> Result<Interval, SemiError> {
        let cur = self.approx(n, x, k);
        if n > 0 && cur.hi < self.approx(n - 1, x, k).lo {
            return Err(SemiError::Monotonicity { stage: n });
        }
        Ok(cur)
    }

    /// Certified lower bound on `t(x)` from the stages up to `depth`.
    pub fn lower_bound(&self, x: &CauchyName, depth: usize) -> Dyadic {
        (0..=depth).map(|n| self.approx(n, x, n as u32 + 4).lo).max().expect("at least stage 0")
    }
}

pub fn make_lsc_from_stages(space: &Space, g: impl Fn(usize) -> BasicFunction + Send + Sync + 'static) -> LscFunction {
    LscFunction::from_stages(space, true, g)
}

/// Running maximum of the certified lower bounds `∫ t_m dμ`, `m <= n`.
pub fn integrate_lsc_lower(mu: &MeasureOracle, t: &LscFunction, n: usize) -> Result<Dyadic, SemiError> {
    let mut best = Dyadic::zero();
    for m in 0..=n {
        let iv = mu.integrate(&t.stage(m), m as u32 + 4)?;
        best = Dyadic::max(&best, &iv.lo);
    }
    Ok(best)
}

/// `ln 2 = Σ_{n>=1} 1/(n 2^n)` to within `2^-k`.
pub fn ln2(k: u32) -> Interval {
    sum_with_tail_bound(
        |i, p| {
            let n = i as i64 + 1;
            Interval::point(Dyadic::pow2(-n)).div_dyadic(&Dyadic::from(n), p as i64 + 1)
        },
        |n| Dyadic::pow2(-(n as i64)),
        k,
        k as usize + 8,
    )
    .expect("geometric tail")
}

/// `2^-r` for `r >= 0` to within `2^-k`; exact when `r` is an integer.
pub fn pow2_neg(r: &Dyadic, k: u32) -> Interval {
    if r.exponent() >= 0 {
        if let Some(n) = r.to_i64() {
            return Interval::point(Dyadic::pow2(-n));
        }
    }
    let extra = r.ceil_log2().unwrap_or(0).max(0) as u32;
    let x = ln2(k + extra + 2).scale(r);
    x.exp_neg(k + 2)
}

/// Find `r >= 0` with `|I(r) - target| <= 2^-k` for a continuous
/// nondecreasing `I` starting at or below the target.
///
/// Doubling finds an upper end, then bisection closes in. Each probe
/// evaluates `I(r) - target` at precision `k + 3`; the search stops as soon as
/// that interval contains zero.
pub fn integral_inverse(
    map: &dyn Fn(&Dyadic, u32) -> Result<Interval, SemiError>,
    target: &dyn Fn(u32) -> Result<Interval, SemiError>,
    k: u32,
    sup: Option<&Interval>,
) -> Result<Dyadic, SemiError> {
    const DOUBLINGS: usize = 40;
    const HALVINGS: usize = 400;
    let q = k + 3;
    let t = target(q)?;
    if t.hi.is_negative() {
        return Err(SemiError::OutOfRange(format!("negative target {t:?}")));
    }
    if let Some(s) = sup {
        if t.lo >= s.hi {
            return Err(SemiError::OutOfRange(format!("target {t:?} is not below the supremum {s:?}")));
        }
    }
    let diff = |r: &Dyadic| -> Result<Interval, SemiError> { Ok(&map(r, q)? - &target(q)?) };
    let zero = Dyadic::zero();
    let d0 = diff(&zero)?;
    if d0.contains(&zero) {
        return Ok(zero);
    }
    if d0.lo.is_positive() {
        return Err(SemiError::OutOfRange(format!("target {t:?} lies below the value at 0")));
    }
    let mut lo = zero;
    let mut hi = Dyadic::one();
    let mut found = false;
    for _ in 0..DOUBLINGS {
        let d = diff(&hi)?;
        if d.contains(&Dyadic::zero()) {
            return Ok(hi);
        }
        if d.lo.is_positive() {
            found = true;
            break;
        }
        lo = hi.clone();
        hi = hi.shl(1);
    }
    if !found {
        return Err(SemiError::Budget(DOUBLINGS));
    }
    for _ in 0..HALVINGS {
        let mid = (&lo + &hi).shl(-1);
        let d = diff(&mid)?;
        if d.contains(&Dyadic::zero()) {
            return Ok(mid);
        }
        if d.lo.is_positive() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(SemiError::Budget(HALVINGS))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reparam {
    /// `r` is the interpolation parameter itself.
    Identity,
    /// `r` is the target integral.
    Integral,
    /// `r` is the target residual exponent: `∫(t - f(r)) dμ = 2^-r`.
    Residual,
}

/// The family `r ↦ f(ρ(r))` where `f` interpolates the stages of an lsc
/// function linearly and `ρ` is one of the [`Reparam`] choices.
#[derive(Clone)]
pub struct CalibratedFamily {
    t: LscFunction,
    mu: MeasureOracle,
    total: Option<IntegralFn>,
    floor: Option<Dyadic>,
    reparam: Reparam,
    k_cal: u32,
}

impl fmt::Debug for CalibratedFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CalibratedFamily({:?}, {:?}, {:?})", self.t, self.mu, self.reparam)
    }
}

/// Interpolating family of `t` against `mu`: `f(n + θ) = (1-θ) h(n) + θ h(n+1)`
/// with `h(0) = 0` and `h(n)` the `n`-th stage. With a positive `floor`
/// `c <= t`, the stages of `t - c` are interpolated instead and
/// `φ(r) c` is added, `φ` interpolating `1 - 2^-n`, so every member with
/// `r > 0` stays strictly positive. `total` is `∫ t dμ` when known.
pub fn approx_family(t: &LscFunction, mu: &MeasureOracle, total: Option<IntegralFn>, floor: Option<Dyadic>) -> CalibratedFamily {
    CalibratedFamily { t: t.clone(), mu: mu.clone(), total, floor, reparam: Reparam::Identity, k_cal: 24 }
}

/// Reparametrize so that `∫ g(r) dμ = r` up to `2^-k_cal`.
pub fn calibrate(fam: &CalibratedFamily) -> CalibratedFamily {
    CalibratedFamily { reparam: Reparam::Integral, ..fam.clone() }
}

/// Reparametrize so that `∫ (t - g(r)) dμ = 2^-r` up to `2^-k_cal`, for
/// `t >= 1`. Needs the total integral.
pub fn residual_calibrate(fam: &CalibratedFamily) -> Result<CalibratedFamily, SemiError> {
    let total = fam.total.as_ref().ok_or_else(|| SemiError::Precondition("residual calibration needs ∫t dμ".into()))?;
    let (tot, norm) = (total(10)?, fam.mu.norm(10)?);
    if tot.hi < norm.lo {
        return Err(SemiError::Precondition(format!("∫t dμ = {tot:?} is below ‖μ‖ = {norm:?}, so t >= 1 fails")));
    }
    Ok(CalibratedFamily { reparam: Reparam::Residual, ..fam.clone() })
}

impl CalibratedFamily {
    pub fn with_precision(mut self, k_cal: u32) -> Self {
        self.k_cal = k_cal;
        self
    }

    pub fn space(&self) -> &Space {
        self.t.space()
    }

    pub fn measure(&self) -> &MeasureOracle {
        &self.mu
    }

    pub fn reparam(&self) -> Reparam {
        self.reparam
    }

    fn h(&self, n: usize) -> BasicFunction {
        if n == 0 {
            return BasicFunction::zero();
        }
        let s = self.t.stage(n);
        match &self.floor {
            None => s,
            Some(c) => BasicFunction::Max(vec![
                BasicFunction::zero(),
                BasicFunction::LinComb(vec![(Dyadic::one(), s), (-c, BasicFunction::One)]),
            ]),
        }
    }

    /// The interpolated member at parameter `rho >= 0`.
    pub fn base_member(&self, rho: &Dyadic) -> BasicFunction {
        let n = rho.floor_int();
        let n: usize = n.try_into().expect("parameter fits in usize");
        let theta = rho - &Dyadic::from(n as i64);
        let mut terms = Vec::new();
        if theta.is_zero() {
            terms.push((Dyadic::one(), self.h(n)));
        } else {
            terms.push((&Dyadic::one() - &theta, self.h(n)));
            terms.push((theta.clone(), self.h(n + 1)));
        }
        if let Some(c) = &self.floor {
            let phi = |m: usize| &Dyadic::one() - &Dyadic::pow2(-(m as i64));
            let p = &(&(&Dyadic::one() - &theta) * &phi(n)) + &(&theta * &phi(n + 1));
            terms.push((&p * c, BasicFunction::One));
        }
        BasicFunction::LinComb(terms)
    }

    pub fn base_integral(&self, rho: &Dyadic, k: u32) -> Result<Interval, SemiError> {
        Ok(self.mu.integrate(&self.base_member(rho), k)?)
    }

    /// `∫ t dμ`, the supremum of the base integrals.
    pub fn total(&self, k: u32) -> Option<Result<Interval, SemiError>> {
        self.total.as_ref().map(|t| t(k))
    }

    /// The interpolation parameter for `r`.
    pub fn param(&self, r: &Dyadic) -> Result<Dyadic, SemiError> {
        if r.is_negative() {
            return Err(SemiError::OutOfRange(format!("negative parameter {r}")));
        }
        let map = |rho: &Dyadic, q: u32| self.base_integral(rho, q);
        let sup = match &self.total {
            Some(t) => Some(t(self.k_cal + 2)?),
            None => None,
        };
        match self.reparam {
            Reparam::Identity => Ok(r.clone()),
            Reparam::Integral => {
                let target = |_: u32| Ok(Interval::point(r.clone()));
                integral_inverse(&map, &target, self.k_cal, sup.as_ref())
            }
            Reparam::Residual => {
                let total = self.total.as_ref().expect("checked at construction");
                let target = |q: u32| Ok(&total(q + 1)? - &pow2_neg(r, q + 1));
                integral_inverse(&map, &target, self.k_cal, sup.as_ref())
            }
        }
    }

    pub fn member(&self, r: &Dyadic) -> Result<BasicFunction, SemiError> {
        Ok(self.base_member(&self.param(r)?))
    }

    pub fn eval(&self, r: &Dyadic, x: &CauchyName, k: u32) -> Result<Interval, SemiError> {
        Ok(eval_basic(&self.member(r)?, self.space(), x, k))
    }

    pub fn integral(&self, r: &Dyadic, k: u32) -> Result<Interval, SemiError> {
        self.base_integral(&self.param(r)?, k)
    }

    /// `∫ (t - f(r)) dμ`.
    pub fn residual(&self, r: &Dyadic, k: u32) -> Result<Interval, SemiError> {
        let total = self.total(k + 1).ok_or_else(|| SemiError::Precondition("residual needs ∫t dμ".into()))??;
        Ok(&total - &self.integral(r, k + 1)?)
    }
}

/// `ŝ = sup { g(r) : ∫ g(r) dμ <= budget }` for a calibrated family.
///
/// Stage `n` is the base member at the largest parameter found so far for the
/// budget's `n`-th monotone lower approximation, aimed `2^-k_cal` low so that
/// the integral never exceeds the budget. Once the budget is certainly above
/// `∫ t dμ`, stage `n` is the `n`-th stage of `t`.
pub fn cutoff(fam: &CalibratedFamily, budget: IntegralFn) -> LscFunction {
    let fam = fam.clone();
    let space = fam.space().clone();
    let params: Arc<Memo<Dyadic>> = Arc::new(Memo::new());
    let step = {
        let fam = fam.clone();
        move |n: usize| -> Dyadic {
            let eps = Dyadic::pow2(-(n as i64) - 1);
            let b = match budget(n as u32 + 1) {
                Ok(iv) => Dyadic::max(&(&iv.lo - &eps), &Dyadic::zero()),
                Err(_) => return Dyadic::zero(),
            };
            let aim = &b - &Dyadic::pow2(-(fam.k_cal as i64));
            if !aim.is_positive() {
                return Dyadic::zero();
            }
            match fam.param(&aim) {
                Ok(rho) => rho,
                Err(SemiError::OutOfRange(_)) => Dyadic::from(n as i64),
                Err(_) => Dyadic::zero(),
            }
        }
    };
    LscFunction::from_stages(&space, false, move |n| {
        let best = params.get_or(n, || (0..=n).map(&step).max().expect("nonempty"));
        fam.base_member(&best)
    })
}

/// The Luzin-style cap `h^m` of a residual-calibrated family `f`:
/// `h^m = sup { f(2r) : f(2r) <= g^{m,r} }` with
/// `g^{m,r} = inf { f(2s) + 2^-s : m <= s <= r }`, evaluated on the integer
/// grid `m..=R`.
#[derive(Clone, Debug)]
pub struct LuzinCap {
    fam: CalibratedFamily,
    m: u32,
}

pub fn luzin_cap(fam: &CalibratedFamily, m: u32) -> Result<LuzinCap, SemiError> {
    if fam.reparam != Reparam::Residual {
        return Err(SemiError::Precondition("the Luzin cap needs a residual-calibrated family".into()));
    }
    Ok(LuzinCap { fam: fam.clone(), m })
}

impl LuzinCap {
    /// Two-sided bounds on `h^m(x)` from the grid up to `R = m + k + 2`.
    ///
    /// Between grid points `f(2s)` is nondecreasing and `2^-s` decreasing, so
    /// `f(2 r_i) + 2^-r_{i+1}` bounds the infimum over `[r_i, r_{i+1}]` from
    /// below; that certifies the qualifying grid points. Every `g^{m,r}` is
    /// an upper bound.
    pub fn eval(&self, x: &CauchyName, k: u32) -> Result<Interval, SemiError> {
        let top = self.m + k + 2;
        let grid: Vec<u32> = (self.m..=top).collect();
        let vals = grid
            .iter()
            .map(|&r| self.fam.eval(&Dyadic::from(2 * r as i64), x, k + 2))
            .collect::<Result<Vec<_>, _>>()?;
        let p = |r: u32| Dyadic::pow2(-(r as i64));
        let mut lower: Option<Dyadic> = None;
        let mut upper: Option<Dyadic> = None;
        let mut inf_lo: Option<Dyadic> = None;
        for (j, &r) in grid.iter().enumerate() {
            let g_lo = if j == 0 {
                &vals[0].lo + &p(r)
            } else {
                let cell = &vals[j - 1].lo + &p(r);
                let v = match &inf_lo {
                    Some(a) => Dyadic::min(a, &cell),
                    None => cell,
                };
                inf_lo = Some(v.clone());
                v
            };
            if vals[j].hi <= g_lo {
                lower = Some(match lower {
                    Some(a) => Dyadic::max(&a, &vals[j].lo),
                    None => vals[j].lo.clone(),
                });
            }
            let cand = &vals[j].hi + &p(r);
            upper = Some(match upper {
                Some(a) => Dyadic::min(&a, &cand),
                None => cand,
            });
        }
        let upper = upper.expect("nonempty grid");
        let lower = lower.unwrap_or_else(Dyadic::zero);
        Ok(Interval::new(Dyadic::min(&lower, &upper), upper))
    }
}

/// McShane extension `f̄(x) = min_y (f(y) + L d(x, y))` of Lipschitz data on a
/// finite set, clamped into the range of the data.
#[derive(Clone, Debug)]
pub struct McShane {
    space: Space,
    data: Vec<(BasicPoint, Interval)>,
    lip: Dyadic,
    lo: Dyadic,
    hi: Dyadic,
}

pub fn mcshane_extend(space: &Space, data: Vec<(BasicPoint, Interval)>, lip: Dyadic) -> Result<McShane, SemiError> {
    if data.is_empty() {
        return Err(SemiError::Precondition("McShane extension of an empty set".into()));
    }
    if lip.is_negative() {
        return Err(SemiError::Precondition(format!("negative Lipschitz constant {lip}")));
    }
    let lo = data.iter().map(|(_, v)| v.lo.clone()).min().unwrap();
    let hi = data.iter().map(|(_, v)| v.hi.clone()).max().unwrap();
    Ok(McShane { space: space.clone(), data, lip, lo, hi })
}

impl McShane {
    pub fn eval(&self, x: &CauchyName, k: u32) -> Interval {
        let q = k + 2 + self.lip.ceil_log2().unwrap_or(0).max(0) as u32;
        let vals = crate::par::map_slice(&self.data, |(y, v)| {
            let d = point_distance(&self.space, x, &CauchyName::basic(y.clone()), q);
            v + &d.scale(&self.lip)
        });
        let best = vals.into_iter().reduce(|a, b| a.min(&b)).expect("nonempty data");
        best.clamp(&self.lo, &self.hi)
    }

    pub fn lipschitz(&self) -> &Dyadic {
        &self.lip
    }
}

pub type TestFamily = Arc<dyn Fn(&MeasureOracle) -> Result<LscFunction, SemiError> + Send + Sync>;
pub type TestIntegral = Arc<dyn Fn(&MeasureOracle, u32) -> Result<Interval, SemiError> + Send + Sync>;
type TestFloor = Arc<dyn Fn(&MeasureOracle) -> Result<Dyadic, SemiError> + Send + Sync>;

/// A measure-indexed family of nonnegative lsc functions `t_μ` together with
/// its integral map `μ ↦ ∫ t_μ dμ`.
#[derive(Clone)]
pub struct IntegralTest {
    name: String,
    space: Space,
    family: TestFamily,
    integral: TestIntegral,
    floor: Option<TestFloor>,
    normalized: bool,
}

impl fmt::Debug for IntegralTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IntegralTest({})", self.name)
    }
}

impl IntegralTest {
    pub fn new(name: impl Into<String>, space: &Space, family: TestFamily, integral: TestIntegral) -> Self {
        IntegralTest { name: name.into(), space: space.clone(), family, integral, floor: None, normalized: false }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    fn check(&self, mu: &MeasureOracle) -> Result<(), SemiError> {
        if mu.space() != &self.space {
            return Err(MeasureError::SpaceMismatch(format!("test on {:?}, measure on {:?}", self.space, mu.space())).into());
        }
        Ok(())
    }

    pub fn lsc(&self, mu: &MeasureOracle) -> Result<LscFunction, SemiError> {
        self.check(mu)?;
        (self.family)(mu)
    }

    pub fn integral(&self, mu: &MeasureOracle, k: u32) -> Result<Interval, SemiError> {
        self.check(mu)?;
        (self.integral)(mu, k)
    }

    pub fn integral_fn(&self, mu: &MeasureOracle) -> IntegralFn {
        let (t, mu) = (self.clone(), mu.clone());
        Arc::new(move |k| t.integral(&mu, k))
    }

    /// A positive dyadic `c <= t_μ`, when the test has one.
    pub fn floor(&self, mu: &MeasureOracle) -> Result<Option<Dyadic>, SemiError> {
        self.floor.as_ref().map(|f| f(mu)).transpose()
    }

    /// The interpolating family of `t_μ` against `μ`.
    pub fn family(&self, mu: &MeasureOracle) -> Result<CalibratedFamily, SemiError> {
        Ok(approx_family(&self.lsc(mu)?, mu, Some(self.integral_fn(mu)), self.floor(mu)?))
    }

    /// `t + c` for a constant `c >= 0`.
    pub fn shift(&self, c: Dyadic) -> IntegralTest {
        let src = self.clone();
        let c1 = c.clone();
        let family: TestFamily = Arc::new(move |mu| {
            let t = src.lsc(mu)?;
            let c = c1.clone();
            let space = t.space().clone();
            Ok(LscFunction::from_stages(&space, false, move |n| {
                let s = t.stage(n);
                if n == 0 {
                    s
                } else {
                    BasicFunction::LinComb(vec![(Dyadic::one(), s), (c.clone(), BasicFunction::One)])
                }
            }))
        });
        let src = self.clone();
        let c2 = c.clone();
        let integral: TestIntegral = Arc::new(move |mu, k| {
            let extra = c2.ceil_log2().unwrap_or(0).max(0) as u32;
            Ok(&src.integral(mu, k + 1)? + &mu.norm(k + 1 + extra)?.scale(&c2))
        });
        let name = format!("{}+{}", self.name, c);
        let src = self.clone();
        let floor: TestFloor = Arc::new(move |mu| Ok(&src.floor(mu)?.unwrap_or_else(Dyadic::zero) + &c));
        IntegralTest {
            name,
            space: self.space.clone(),
            family,
            integral,
            floor: Some(floor),
            normalized: false,
        }
    }
}


/// `1 / J` to within `2^-k`, where `J(p)` encloses a positive real.
pub(crate) fn recip_to(j: &dyn Fn(u32) -> Result<Interval, SemiError>, k: u32) -> Result<Interval, SemiError> {
    let mut p = k + 2;
    for _ in 0..24 {
        let iv = j(p)?;
        if !iv.hi.is_positive() {
            return Err(SemiError::Precondition("zero measure".into()));
        }
        if iv.lo.is_positive() {
            let c = iv.recip(k as i64 + 3)?;
            if c.within(k) {
                return Ok(c);
            }
            let bits = (-iv.lo.ceil_log2().unwrap()).max(0) as u32;
            p = p.max(k + 4 + 2 * bits);
        }
        p += 4;
    }
    Err(SemiError::Precondition("normalizing constant not separated from zero".into()))
}

/// `s_μ = (t_μ + 1) / ∫ (t_μ + 1) dμ`, so `∫ s_μ dμ = 1` and
/// `s_μ >= 1 / ∫ (t_μ + 1) dμ > 0`. The zero measure is rejected.
pub fn normalize(t: &IntegralTest) -> IntegralTest {
    let j = |t: &IntegralTest, mu: &MeasureOracle| -> IntegralFn {
        let (t, mu) = (t.clone(), mu.clone());
        Arc::new(move |p| Ok(&t.integral(&mu, p + 1)? + &mu.norm(p + 1)?))
    };
    let src = t.clone();
    let family: TestFamily = Arc::new(move |mu| {
        let inner = src.lsc(mu)?;
        let jf = j(&src, mu);
        // fail early on the zero measure
        recip_to(&*jf, 4)?;
        let consts: Memo<Dyadic> = Memo::new();
        let c = move |n: usize| {
            consts.get_or(n, || match recip_to(&*jf, n as u32 + 1) {
                Ok(iv) => Dyadic::max(&(&iv.lo - &Dyadic::pow2(-(n as i64) - 1)), &Dyadic::zero()),
                Err(_) => Dyadic::zero(),
            })
        };
        let space = inner.space().clone();
        Ok(LscFunction::from_stages(&space, true, move |n| {
            let cn = c(n);
            BasicFunction::LinComb(vec![(cn.clone(), inner.stage(n)), (cn, BasicFunction::One)])
        }))
    });
    let src = t.clone();
    let integral: TestIntegral = Arc::new(move |mu, k| {
        let jf = j(&src, mu);
        let mut p = k + 2;
        for _ in 0..16 {
            let jv = jf(p)?;
            let cv = recip_to(&*jf, p)?;
            let prod = &cv * &jv;
            if prod.within(k) {
                return Ok(prod);
            }
            p += 4;
        }
        Err(SemiError::Budget(16))
    });
    let src = t.clone();
    let floor: TestFloor = Arc::new(move |mu| {
        let jf = j(&src, mu);
        let c = recip_to(&*jf, 20)?;
        Ok(Dyadic::max(&(&c.lo - &Dyadic::pow2(-21)), &Dyadic::zero()))
    });
    IntegralTest {
        name: format!("normalize({})", t.name),
        space: t.space.clone(),
        family,
        integral,
        floor: Some(floor),
        normalized: true,
    }
}
