use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use unimeas::basis::{eval_basic, BasicFunction};
use unimeas::exact::{Dyadic, Interval};
use unimeas::measures::{MeasureOracle, OpenSet};
use unimeas::names::{sample_name, XiMeasure};
use unimeas::randtests::{
    eval_deficiency, integral_to_sequential, kurtz_to_sequential, martingale_check, martingale_identity, sum_sequential_to_integral,
    support_test, tent_test, zero_measure_test, zero_run_test, KurtzTest, MartingaleReport, MartingaleTest, MartingaleVerdict, Rate,
    SequentialTest,
};
use unimeas::semicomp::{calibrate, mcshane_extend, IntegralTest};
use unimeas::spaces::{point_distance, unit_value, validate_name_prefix, BasicPoint, CauchyName, NameVerdict, Space};

use crate::descriptors::{point_json, MeasureDesc, PointDesc};
use crate::CliError;

pub const DEMOS: [&str; 8] = ["zero-measure", "support", "tent", "seqtest", "kurtz", "martingale", "xi-sample", "extend-pipeline"];

pub struct Ctx {
    pub k: u32,
    pub depth: Option<usize>,
    pub seed: u64,
    pub budget: Option<usize>,
    pub config: Value,
}

impl Ctx {
    fn config<T: DeserializeOwned + Default>(&self) -> Result<T, CliError> {
        if self.config.is_null() {
            return Ok(T::default());
        }
        serde_json::from_value(self.config.clone()).map_err(|e| CliError::Usage(format!("bad demo config: {e}")))
    }
}

/// Collects results and remembers the first failed assertion.
struct Report {
    certificates: Vec<Value>,
    failure: Option<String>,
}

impl Report {
    fn new() -> Self {
        Report { certificates: Vec::new(), failure: None }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok && self.failure.is_none() {
            self.failure = Some(what());
        }
    }

    fn finish(self, demo: &str, ctx: &Ctx, extra: Value) -> (Value, Option<String>) {
        let status = if self.failure.is_some() { "failed" } else { "ok" };
        let mut out = json!({
            "demo": demo,
            "k": ctx.k,
            "seed": ctx.seed,
            "status": status,
            "certificates": self.certificates,
        });
        if let Some(f) = &self.failure {
            out["failure"] = json!(f);
        }
        if let (Value::Object(o), Value::Object(e)) = (&mut out, extra) {
            o.extend(e);
        }
        (out, self.failure)
    }
}

fn fail(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

fn build(m: &MeasureDesc) -> Result<MeasureOracle, CliError> {
    m.build().map_err(CliError::Usage)
}

fn dy(d: &Dyadic) -> Value {
    serde_json::to_value(d).expect("dyadics serialize")
}

fn iv(i: &Interval) -> Value {
    serde_json::to_value(i).expect("intervals serialize")
}

fn lambda() -> MeasureDesc {
    MeasureDesc::Bernoulli { p: Dyadic::frac(1, 1), given: String::new() }
}

fn unit_dirac(d: Dyadic) -> MeasureDesc {
    MeasureDesc::Dirac { space: Space::UnitInterval, point: PointDesc::Dyadic(d) }
}

pub fn run(name: &str, ctx: &Ctx) -> Result<(Value, Option<String>), CliError> {
    match name {
        "zero-measure" => zero_measure(ctx),
        "support" => support(ctx),
        "tent" => tent(ctx),
        "seqtest" => seqtest(ctx),
        "kurtz" => kurtz(ctx),
        "martingale" => martingale(ctx),
        "xi-sample" => xi_sample(ctx),
        "extend-pipeline" => extend_pipeline(ctx),
        _ => Err(CliError::Usage(format!("unknown demo {name}; expected one of {}", DEMOS.join(", ")))),
    }
}

fn deficiency_series(t: &IntegralTest, mu: &MeasureOracle, x: &CauchyName, depth: usize) -> Result<Vec<Dyadic>, CliError> {
    (1..=depth).map(|d| eval_deficiency(t, mu, x, d).map_err(fail)).collect()
}

fn strictly_increasing(xs: &[Dyadic]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

/// Zero for a while, then strictly increasing.
fn grows_once_positive(xs: &[Dyadic]) -> bool {
    let start = xs.iter().position(Dyadic::is_positive).unwrap_or(xs.len());
    xs[..start].iter().all(Dyadic::is_zero) && start < xs.len() && strictly_increasing(&xs[start..])
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ZeroMeasureConfig {
    measures: Vec<MeasureDesc>,
    point: PointDesc,
}

impl Default for ZeroMeasureConfig {
    fn default() -> Self {
        let quarter = MeasureDesc::Mixture { weights: vec![Dyadic::frac(1, 2)], parts: vec![lambda()] };
        ZeroMeasureConfig {
            measures: vec![lambda(), quarter, MeasureDesc::Zero { space: Space::Cantor }],
            point: PointDesc::Index(0),
        }
    }
}

/// `t_μ = ‖μ‖^{-1/2}`: the integral is `‖μ‖^{1/2}` and only the zero measure
/// sees unbounded deficiencies.
fn zero_measure(ctx: &Ctx) -> Result<(Value, Option<String>), CliError> {
    let cfg: ZeroMeasureConfig = ctx.config()?;
    let depth = ctx.depth.unwrap_or(8);
    let mut rep = Report::new();
    for desc in &cfg.measures {
        let mu = build(desc)?;
        let t = zero_measure_test(mu.space());
        let x = cfg.point.name(mu.space()).map_err(CliError::Usage)?;
        let integral = t.integral(&mu, ctx.k).map_err(fail)?;
        let norm = mu.norm(2 * ctx.k + 4).map_err(fail)?;
        let squared = &integral * &integral;
        rep.check(squared.lo <= norm.hi && norm.lo <= squared.hi, || format!("∫t d{} = {integral:?} squared misses ‖μ‖ = {norm:?}", mu.describe()));
        let series = deficiency_series(&t, &mu, &x, depth)?;
        let zero = norm.hi.is_zero();
        if zero {
            rep.check(strictly_increasing(&series), || "deficiency under the zero measure is not strictly increasing".into());
        } else {
            rep.check(series.windows(2).all(|w| w[0] <= w[1]), || format!("deficiency under {} decreased", mu.describe()));
        }
        rep.certificates.push(json!({
            "measure": mu.describe(),
            "norm": iv(&norm),
            "integral": iv(&integral),
            "deficiency": series.iter().map(dy).collect::<Vec<_>>(),
        }));
    }
    Ok(rep.finish("zero-measure", ctx, json!({"depth": depth})))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SupportCase {
    measure: MeasureDesc,
    charges: bool,
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SupportConfig {
    center: Dyadic,
    radius: Dyadic,
    cases: Vec<SupportCase>,
}

impl Default for SupportConfig {
    fn default() -> Self {
        SupportConfig {
            center: Dyadic::frac(1, 1),
            radius: Dyadic::frac(1, 2),
            cases: vec![
                SupportCase { measure: unit_dirac(Dyadic::zero()), charges: false },
                SupportCase { measure: MeasureDesc::Lebesgue, charges: true },
            ],
        }
    }
}

/// The support test of a ball on the unit interval: measures that do not
/// charge the ball are accepted with integral 0 and infinite deficiency at the
/// center; measures that charge it are rejected.
fn support(ctx: &Ctx) -> Result<(Value, Option<String>), CliError> {
    let cfg: SupportConfig = ctx.config()?;
    let depth = ctx.depth.unwrap_or(8);
    let unit = Space::UnitInterval;
    let center = PointDesc::Dyadic(cfg.center.clone()).basic(&unit).map_err(CliError::Usage)?;
    if !cfg.radius.is_positive() {
        return Err(CliError::Usage("the radius must be positive".into()));
    }
    let t = support_test(&unit, center.clone(), cfg.radius.clone());
    let mut rep = Report::new();
    for case in &cfg.cases {
        let mu = build(&case.measure)?;
        if mu.space() != &unit {
            return Err(CliError::Usage(format!("{} does not live on the unit interval", mu.describe())));
        }
        match t.integral(&mu, ctx.k) {
            Ok(integral) => {
                rep.check(!case.charges, || format!("{} charges the ball but was accepted", mu.describe()));
                rep.check(integral.contains(&Dyadic::zero()), || format!("support integral {integral:?} misses 0"));
                let series = deficiency_series(&t, &mu, &CauchyName::basic(center.clone()), depth)?;
                rep.check(grows_once_positive(&series), || "deficiency at the center does not grow".into());
                rep.certificates.push(json!({
                    "measure": mu.describe(),
                    "accepted": true,
                    "integral": iv(&integral),
                    "deficiency_at_center": series.iter().map(dy).collect::<Vec<_>>(),
                }));
            }
            Err(e) => {
                rep.check(case.charges, || format!("{} was rejected: {e}", mu.describe()));
                rep.certificates.push(json!({"measure": mu.describe(), "accepted": false, "reason": e.to_string()}));
            }
        }
    }
    Ok(rep.finish("support", ctx, json!({"center": dy(&cfg.center), "radius": dy(&cfg.radius), "depth": depth})))
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TentConfig {
    space: Space,
    target: PointDesc,
    measure: MeasureDesc,
}

impl Default for TentConfig {
    fn default() -> Self {
        TentConfig { space: Space::UnitInterval, target: PointDesc::Dyadic(Dyadic::frac(1, 1)), measure: unit_dirac(Dyadic::zero()) }
    }
}

/// The tent test at a target point against one measure. Away from the
/// measure's mass every tent contributes a full summand, so the deficiency
/// at the target grows with the stage.
fn tent(ctx: &Ctx) -> Result<(Value, Option<String>), CliError> {
    let cfg: TentConfig = ctx.config()?;
    let depth = ctx.depth.unwrap_or(12);
    let x0 = cfg.target.basic(&cfg.space).map_err(CliError::Usage)?;
    let mu = build(&cfg.measure)?;
    if mu.space() != &cfg.space {
        return Err(CliError::Usage(format!("the measure lives on {:?}, the target on {:?}", mu.space(), cfg.space)));
    }
    let t = tent_test(&cfg.space, x0.clone());
    let mut rep = Report::new();
    let integral = t.integral(&mu, ctx.k).map_err(fail)?;
    rep.check(integral.hi <= Dyadic::from(2) + Dyadic::pow2(-(ctx.k as i64)), || format!("tent integral {integral:?} exceeds 2"));
    let series = deficiency_series(&t, &mu, &CauchyName::basic(x0.clone()), depth)?;
    rep.check(strictly_increasing(&series), || "deficiency series at the target is not strictly increasing".into());
    rep.certificates.push(json!({
        "measure": mu.describe(),
        "target": point_json(&cfg.space, &x0),
        "integral": iv(&integral),
        "deficiency": series.iter().map(dy).collect::<Vec<_>>(),
    }));
    Ok(rep.finish("tent", ctx, json!({"depth": depth})))
}

#[derive(Deserialize, Default, Clone, Copy, PartialEq)]
#[serde(rename_all = "kebab-case")]
enum SeqFixture {
    #[default]
    CylinderSum,
    Tent,
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SeqConfig {
    fixture: SeqFixture,
    measure: Option<MeasureDesc>,
}

impl Default for SeqConfig {
    fn default() -> Self {
        SeqConfig { fixture: SeqFixture::CylinderSum, measure: None }
    }
}

/// Sequential levels `V_n = {t > c_n}` derived from an integral test, with
/// two-sided level measures and the threshold certificate of each level.
fn seqtest(ctx: &Ctx) -> Result<(Value, Option<String>), CliError> {
    let cfg: SeqConfig = ctx.config()?;
    let depth = ctx.depth.unwrap_or(4);
    let (t, default_mu, probe) = match cfg.fixture {
        SeqFixture::CylinderSum => (sum_sequential_to_integral(&zero_run_test()), lambda(), CauchyName::idx(0)),
        SeqFixture::Tent => {
            let half = Dyadic::frac(1, 1);
            (tent_test(&Space::UnitInterval, Space::UnitInterval.line_point(&half)), MeasureDesc::Lebesgue, CauchyName::unit_dyadic(&half))
        }
    };
    let mu = build(cfg.measure.as_ref().unwrap_or(&default_mu))?;
    if mu.space() != t.space() {
        return Err(CliError::Usage(format!("{} does not live on {:?}", mu.describe(), t.space())));
    }
    let seq = integral_to_sequential(&t, &mu).map_err(fail)?;
    let mut rep = Report::new();
    for n in 0..=depth {
        let cert = seq.certificate(&mu, n, ctx.k).map_err(fail)?;
        let cap = Dyadic::pow2(-(n as i64)) + Dyadic::pow2(-12);
        rep.check(cert.level_measure.hi <= cap, || format!("level {n}: measure {:?} above 2^-{n}", cert.level_measure));
        rep.check(cert.level_measure.within(ctx.k), || format!("level {n}: measure {:?} wider than 2^-{}", cert.level_measure, ctx.k));
        let inside = seq.contains(&mu, n, &probe, 12).map_err(fail)?;
        let mut v = serde_json::to_value(&cert).expect("certificates serialize");
        v["probe_inside"] = json!(inside);
        rep.certificates.push(v);
    }
    Ok(rep.finish("seqtest", ctx, json!({"test": t.name(), "measure": mu.describe(), "depth": depth})))
}

#[derive(Deserialize, Default, Clone, Copy)]
#[serde(rename_all = "kebab-case")]
enum KurtzFixture {
    #[default]
    Singleton,
    Atom,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct KurtzConfig {
    fixture: KurtzFixture,
}

fn levels_report(rep: &mut Report, seq: &SequentialTest, mu: &MeasureOracle, x: &CauchyName, depth: usize, k: u32) -> Result<(), CliError> {
    for n in 0..=depth {
        let cert = seq.certificate(mu, n, k).map_err(fail)?;
        let inside = seq.contains(mu, n, x, 12).map_err(fail)?;
        rep.check(cert.level_measure.hi <= Dyadic::pow2(-(n as i64)) + Dyadic::pow2(-(k as i64)), || {
            format!("level {n}: measure {:?} above 2^-{n}", cert.level_measure)
        });
        rep.check(inside == Some(true), || format!("level {n} does not certainly contain the null point"));
        let mut v = serde_json::to_value(&cert).expect("certificates serialize");
        v["contains_null_point"] = json!(inside);
        rep.certificates.push(v);
    }
    Ok(())
}

/// Kurtz tests `P = X \ U` turned into sequential tests. The singleton
/// `{0^∞}` is null for the uniform measure; the atom fixture claims that
/// `{1/2}` is null for `δ_{1/2}`, which no finite cover can confirm.
fn kurtz(ctx: &Ctx) -> Result<(Value, Option<String>), CliError> {
    let cfg: KurtzConfig = ctx.config()?;
    let depth = ctx.depth.unwrap_or(6);
    let mut rep = Report::new();
    let (fixture, p, mu, x, budget) = match cfg.fixture {
        KurtzFixture::Singleton => {
            let u = OpenSet::from_fn(|k| (k < 62).then(|| (BasicPoint::Idx(1 << k), Dyadic::pow2(-(k as i64)))));
            let p = KurtzTest { space: Space::Cantor, complement: u };
            ("singleton", p, build(&lambda())?, CauchyName::idx(0), ctx.budget.unwrap_or(64))
        }
        KurtzFixture::Atom => {
            let half = Dyadic::frac(1, 1);
            let u = OpenSet::from_fn(move |i| {
                let r = (&unit_value(i as u64) - &Dyadic::frac(1, 1)).abs();
                r.is_positive().then_some((BasicPoint::Idx(i as u64), r))
            });
            let p = KurtzTest { space: Space::UnitInterval, complement: u };
            ("atom", p, build(&unit_dirac(half.clone()))?, CauchyName::unit_dyadic(&half), ctx.budget.unwrap_or(12))
        }
    };
    match kurtz_to_sequential(&p, &mu, budget) {
        Ok(seq) => levels_report(&mut rep, &seq, &mu, &x, depth, ctx.k)?,
        Err(e) => rep.check(false, || e.to_string()),
    }
    Ok(rep.finish("kurtz", ctx, json!({"fixture": fixture, "measure": mu.describe(), "budget": budget, "depth": depth})))
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Expect {
    WithinRate,
    Exceeds,
    OutsideSupport,
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MartingaleConfig {
    nu: MeasureDesc,
    mu: MeasureDesc,
    point: Option<PointDesc>,
    slope: Dyadic,
    offset: Dyadic,
    expect: Option<Expect>,
}

impl Default for MartingaleConfig {
    fn default() -> Self {
        MartingaleConfig { nu: lambda(), mu: lambda(), point: None, slope: Dyadic::one(), offset: Dyadic::one(), expect: None }
    }
}

fn verdict_kind(v: &MartingaleVerdict) -> Expect {
    match v {
        MartingaleVerdict::WithinRate { .. } => Expect::WithinRate,
        MartingaleVerdict::Exceeds { .. } => Expect::Exceeds,
        MartingaleVerdict::OutsideSupport { .. } => Expect::OutsideSupport,
    }
}

/// Ratios `ν[x↾n]/μ[x↾n]` along one sequence against the rate
/// `slope·n + offset`, in the uniform and blind modes. The default point is
/// drawn from the seed.
fn martingale(ctx: &Ctx) -> Result<(Value, Option<String>), CliError> {
    let cfg: MartingaleConfig = ctx.config()?;
    let depth = ctx.depth.unwrap_or(32);
    if depth > 64 {
        return Err(CliError::Usage("martingale depth is limited to 64".into()));
    }
    let (nu, mu) = (build(&cfg.nu)?, build(&cfg.mu)?);
    let x = match &cfg.point {
        Some(p) => p.name(&Space::Cantor).map_err(CliError::Usage)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            let bits: Vec<bool> = (0..depth).map(|_| rng.gen()).collect();
            CauchyName::cantor_eventually(bits, false)
        }
    };
    let (slope, offset) = (cfg.slope.clone(), cfg.offset.clone());
    let rate: Rate = Arc::new(move |n| &(&slope * &Dyadic::from(n as i64)) + &offset);
    let uniform = MartingaleTest { nu: nu.clone(), rate: rate.clone(), blind: false };
    let blind = MartingaleTest { blind: true, ..uniform.clone() };
    let u: MartingaleReport = martingale_check(&uniform, &mu, &x, depth).map_err(fail)?;
    let b: MartingaleReport = martingale_check(&blind, &mu, &x, depth).map_err(fail)?;
    let mut rep = Report::new();
    let bits: Vec<bool> = (0..depth).map(|i| unimeas::randtests::cantor_bit(&x, i)).collect();
    for n in 0..depth {
        let holds = martingale_identity(&nu, &bits[..n]).map_err(fail)?;
        rep.check(holds, || format!("ν[σ0] + ν[σ1] ≠ ν[σ] at length {n}"));
    }
    if let Some(want) = cfg.expect {
        rep.check(verdict_kind(&u.verdict) == want, || format!("uniform verdict {:?} differs from the expectation", u.verdict));
    }
    let exceedances = u.rows.iter().filter(|r| r.exceeds).count();
    let prefix: String = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
    rep.certificates.push(json!({"mode": "uniform", "report": u, "exceedances": exceedances}));
    rep.certificates.push(json!({"mode": "blind", "report": b, "exceedances": b.rows.iter().filter(|r| r.exceeds).count()}));
    let agree = u.verdict == b.verdict;
    Ok(rep.finish(
        "martingale",
        ctx,
        json!({"nu": nu.describe(), "mu": mu.describe(), "prefix": prefix, "depth": depth, "verdicts_agree": agree}),
    ))
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct XiConfig {
    space: Space,
    target: PointDesc,
    samples: usize,
}

impl Default for XiConfig {
    fn default() -> Self {
        XiConfig { space: Space::UnitInterval, target: PointDesc::Rational(1, 3), samples: 8 }
    }
}

/// Names of a target point drawn from `ξ`, one per seed `seed, seed+1, ...`,
/// each checked against the Cauchy contract and its distance to the target.
fn xi_sample(ctx: &Ctx) -> Result<(Value, Option<String>), CliError> {
    let cfg: XiConfig = ctx.config()?;
    let depth = ctx.depth.unwrap_or(12);
    let samples = ctx.budget.unwrap_or(cfg.samples);
    let z = cfg.target.name(&cfg.space).map_err(CliError::Usage)?;
    let xi = XiMeasure::new(&cfg.space, z.clone());
    let mut rep = Report::new();
    for j in 0..samples {
        let seed = ctx.seed.wrapping_add(j as u64);
        let name = sample_name(&xi, seed);
        let verdict = validate_name_prefix(&cfg.space, &name, depth);
        rep.check(verdict == NameVerdict::Consistent, || format!("sample {seed}: {verdict:?}"));
        let last = CauchyName::basic(name.at(depth.saturating_sub(1)));
        let d = point_distance(&cfg.space, &last, &z, depth as u32 + 4);
        rep.check(d.lo <= Dyadic::pow2(-(depth as i64)), || format!("sample {seed}: stage {} is {d:?} from the target", depth - 1));
        rep.certificates.push(json!({
            "seed": seed,
            "prefix": name.prefix(depth).iter().map(|p| point_json(&cfg.space, p)).collect::<Vec<_>>(),
            "name_check": verdict,
            "distance_at_depth": iv(&d),
        }));
    }
    Ok(rep.finish("xi-sample", ctx, json!({"depth": depth, "samples": samples})))
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExtendConfig {
    target: Dyadic,
    r: Dyadic,
    grid: u32,
    measures: Vec<MeasureDesc>,
}

impl Default for ExtendConfig {
    fn default() -> Self {
        let mix = MeasureDesc::Mixture {
            weights: vec![Dyadic::frac(1, 1), Dyadic::frac(1, 1)],
            parts: vec![MeasureDesc::Lebesgue, unit_dirac(Dyadic::frac(1, 2))],
        };
        ExtendConfig {
            target: Dyadic::frac(1, 1),
            r: Dyadic::frac(1, 1),
            grid: 4,
            measures: vec![MeasureDesc::Lebesgue, mix, MeasureDesc::Zero { space: Space::UnitInterval }],
        }
    }
}

/// McShane extension of grid data as a basic function: the cones
/// `v + L max(0, d - ε)` with a flat top of radius `ε`, clamped into the data
/// range. It is within `L ε` of `min_y (v_y + L d(·, y))`.
fn mcshane_basic(data: &[(BasicPoint, Dyadic)], lip: &Dyadic, eps: &Dyadic) -> BasicFunction {
    let reach = Dyadic::one() + eps.clone();
    let cones = data
        .iter()
        .map(|(y, v)| {
            let bump = BasicFunction::bump(y.clone(), eps.clone(), reach.clone()).expect("eps < 1 + eps");
            BasicFunction::LinComb(vec![(v + lip, BasicFunction::One), (-lip.clone(), bump)])
        })
        .collect();
    let lo = data.iter().map(|(_, v)| v.clone()).min().expect("nonempty grid");
    let hi = data.iter().map(|(_, v)| v.clone()).max().expect("nonempty grid");
    BasicFunction::Max(vec![BasicFunction::constant(lo), BasicFunction::Min(vec![BasicFunction::constant(hi), BasicFunction::Min(cones)])])
}

/// The extension pipeline for the tent test on the unit interval: calibrate
/// to `∫ h dμ = r`, sample `h` on a dyadic grid, extend by McShane, and
/// rescale to `ĥ = 2‖μ‖r / ∫h̄ dμ · h̄`. At the zero measure `ĥ = 2r`.
fn extend_pipeline(ctx: &Ctx) -> Result<(Value, Option<String>), CliError> {
    let cfg: ExtendConfig = ctx.config()?;
    let unit = Space::UnitInterval;
    let k = ctx.k;
    let x0 = PointDesc::Dyadic(cfg.target.clone()).basic(&unit).map_err(CliError::Usage)?;
    if !cfg.r.is_positive() || cfg.grid > 12 {
        return Err(CliError::Usage("r must be positive and grid at most 12".into()));
    }
    let t = tent_test(&unit, x0);
    let tol = Dyadic::pow2(-(k as i64));
    let mut rep = Report::new();
    for desc in &cfg.measures {
        let mu = build(desc)?;
        if mu.space() != &unit {
            return Err(CliError::Usage(format!("{} does not live on the unit interval", mu.describe())));
        }
        let norm = mu.norm(k + 4).map_err(fail)?;
        if norm.hi.is_zero() {
            let patch = &cfg.r * &Dyadic::from(2);
            rep.certificates.push(json!({"measure": mu.describe(), "norm": iv(&norm), "zero_patch": dy(&patch)}));
            continue;
        }
        let fam = calibrate(&t.family(&mu).map_err(fail)?.with_precision(k + 6));
        let h = fam.member(&cfg.r).map_err(fail)?;
        let calibrated = mu.integrate(&h, k + 4).map_err(fail)?;
        rep.check((&calibrated.mid() - &cfg.r).abs() <= tol, || format!("calibrated integral {calibrated:?} is not within 2^-{k} of r"));
        let q = k + 8;
        let grid: Vec<(BasicPoint, Dyadic)> = (0..=1u64 << cfg.grid)
            .map(|j| {
                let y = unit.line_point(&Dyadic::new(j as i64, -(cfg.grid as i64)));
                let v = eval_basic(&h, &unit, &CauchyName::basic(y.clone()), q).lo;
                (y, v)
            })
            .collect();
        let lip = h.lipschitz();
        let ext = mcshane_extend(&unit, grid.iter().map(|(y, v)| (y.clone(), Interval::point(v.clone()))).collect(), lip.clone()).map_err(fail)?;
        let eps = Dyadic::pow2(-(q as i64) - lip.ceil_log2().unwrap_or(0).max(0));
        let hbar = mcshane_basic(&grid, &lip, &eps);
        for j in 0..(1u64 << cfg.grid) {
            let x = CauchyName::unit_dyadic(&Dyadic::new(2 * j as i64 + 1, -(cfg.grid as i64) - 1));
            let (a, b) = (ext.eval(&x, q), eval_basic(&hbar, &unit, &x, q));
            rep.check((&a.mid() - &b.mid()).abs() <= Dyadic::pow2(-(q as i64) + 2), || format!("McShane forms disagree: {a:?} vs {b:?}"));
        }
        let extended = mu.integrate(&hbar, k + 4).map_err(fail)?;
        rep.check(extended.lo.is_positive(), || format!("∫h̄ dμ = {extended:?} is not certainly positive"));
        if !extended.lo.is_positive() {
            continue;
        }
        let goal = norm.scale(&(&cfg.r * &Dyadic::from(2)));
        let scale = goal.div(&extended, k as i64 + 8).map_err(fail)?;
        let hhat = hbar.clone().scale(scale.mid());
        let rescaled = mu.integrate(&hhat, k + 4).map_err(fail)?;
        rep.check((&rescaled.mid() - &goal.mid()).abs() <= tol, || format!("∫ĥ dμ = {rescaled:?} misses 2‖μ‖r = {goal:?}"));
        rep.certificates.push(json!({
            "measure": mu.describe(),
            "norm": iv(&norm),
            "calibrated_integral": iv(&calibrated),
            "lipschitz": dy(&lip),
            "grid_values": grid.iter().map(|(_, v)| dy(v)).collect::<Vec<_>>(),
            "extended_integral": iv(&extended),
            "scale": iv(&scale),
            "rescaled_integral": iv(&rescaled),
            "goal": iv(&goal),
        }));
    }
    Ok(rep.finish("extend-pipeline", ctx, json!({"target": dy(&cfg.target), "r": dy(&cfg.r), "grid": cfg.grid})))
}
