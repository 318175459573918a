use super::*;
use crate::semicomp::{integrate_lsc_lower, normalize};
use crate::spaces::unit_index;

fn lambda() -> MeasureOracle {
    MeasureOracle::bernoulli(Dyadic::frac(1, 1)).unwrap()
}

fn zeros() -> CauchyName {
    CauchyName::idx(0)
}

fn unit_pt(d: Dyadic) -> BasicPoint {
    BasicPoint::Idx(unit_index(&d))
}

fn constant_test(space: &Space, c: Dyadic) -> IntegralTest {
    let (c1, name) = (c.clone(), format!("const({c})"));
    let family: TestFamily = Arc::new(move |mu| Ok(LscFunction::constant(mu.space(), c1.clone())));
    let integral: TestIntegral = Arc::new(move |mu, k| Ok(mu.norm(k + 4)?.scale(&c)));
    IntegralTest::new(name, space, family, integral)
}

struct NoLevels;

impl LevelFamily for NoLevels {
    fn stage_function(&self, _: &MeasureOracle, _: usize, _: usize) -> Result<Option<BasicFunction>, TestError> {
        Ok(None)
    }
    fn contains(&self, _: &MeasureOracle, _: usize, _: &CauchyName, _: usize) -> Result<Option<bool>, TestError> {
        Ok(Some(false))
    }
    fn level_measure(&self, _: &MeasureOracle, _: usize, _: u32) -> Result<Interval, TestError> {
        Ok(Interval::zero())
    }
}

#[test]
fn zero_run_levels() {
    let seq = zero_run_test();
    let mu = lambda();
    for n in 0..10 {
        assert_eq!(seq.level_measure(&mu, n, 20).unwrap(), Interval::point(Dyadic::pow2(-(n as i64))));
        assert_eq!(seq.contains(&mu, n, &zeros(), 0).unwrap(), Some(true));
    }
    let x = CauchyName::cantor_eventually(vec![false, false, true], false);
    assert_eq!(seq.contains(&mu, 2, &x, 0).unwrap(), Some(true));
    assert_eq!(seq.contains(&mu, 3, &x, 0).unwrap(), Some(false));
    // a measure without exact cylinders goes through the indicator integral
    let leb = MeasureOracle::lebesgue_unit();
    assert!(matches!(seq.level_measure(&leb, 1, 8), Err(TestError::Measure(MeasureError::SpaceMismatch(_)))));
}

#[test]
fn summing_levels() {
    let mu = lambda();
    let t = sum_sequential_to_integral(&zero_run_test());
    let iv = t.integral(&mu, 12).unwrap();
    assert!(iv.contains(&Dyadic::from(2)) && iv.within(12));
    assert!(iv.lo >= Dyadic::zero() && iv.hi <= &Dyadic::from(2) + &Dyadic::pow2(-10));
    // 0^∞ lies in every level
    assert_eq!(eval_deficiency(&t, &mu, &zeros(), 12).unwrap(), Dyadic::from(12));
    // the n = 0 level is the whole space, so the lower integrals reach 2
    let lower = integrate_lsc_lower(&mu, &t.lsc(&mu).unwrap(), 12).unwrap();
    assert!(lower <= Dyadic::from(2) && lower >= &Dyadic::from(2) - &Dyadic::pow2(-10));

    let empty = SequentialTest::new("empty", &Space::Cantor, NoLevels);
    let z = sum_sequential_to_integral(&empty);
    assert_eq!(eval_deficiency(&z, &mu, &zeros(), 8).unwrap(), Dyadic::zero());
    assert!(z.integral(&mu, 10).unwrap().contains(&Dyadic::zero()));
}

#[test]
fn heavy_level_is_rejected() {
    // a point mass at 0^∞ puts mass 1 on every [0^n]
    let mu = MeasureOracle::dirac(&Space::Cantor, zeros());
    let t = sum_sequential_to_integral(&zero_run_test());
    assert!(matches!(t.integral(&mu, 8), Err(SemiError::Precondition(_))));
}

#[test]
fn bounded_test_has_empty_levels() {
    let mu = MeasureOracle::lebesgue_unit();
    let t = constant_test(&Space::unit(), Dyadic::one());
    let lvl = find_null_level(&t, &mu, 0).unwrap();
    assert!(lvl.markov_bound().unwrap() <= Dyadic::one());
    let (c, _) = lvl.threshold(6).unwrap();
    assert!(c.lo >= Dyadic::from(2) && c.hi <= Dyadic::from(4));
    assert_eq!(lvl.level_measure(8).unwrap(), Interval::zero());
    let x = CauchyName::unit_dyadic(&Dyadic::frac(1, 2));
    assert_eq!(lvl.contains(&x, 8).unwrap(), None);
}

#[test]
fn too_heavy_for_levels() {
    let mu = MeasureOracle::lebesgue_unit();
    let t = constant_test(&Space::unit(), Dyadic::from(3));
    assert!(matches!(integral_to_sequential(&t, &mu), Err(TestError::Precondition(_))));
}

#[test]
fn zero_test_has_empty_levels() {
    let mu = MeasureOracle::lebesgue_unit();
    let t = constant_test(&Space::unit(), Dyadic::zero());
    let seq = integral_to_sequential(&t, &mu).unwrap();
    for n in 0..3 {
        assert_eq!(seq.level_measure(&mu, n, 6).unwrap(), Interval::zero());
    }
    let cert = seq.certificate(&mu, 1, 6).unwrap();
    assert!(cert.c.unwrap().lo >= Dyadic::from(4));
}

#[test]
fn derived_levels_of_the_zero_run_sum() {
    let mu = lambda();
    let t = sum_sequential_to_integral(&zero_run_test());
    let seq = integral_to_sequential(&t, &mu).unwrap();
    for n in 0..4 {
        assert_eq!(seq.contains(&mu, n, &zeros(), 40).unwrap(), Some(true), "level {n}");
        let m = seq.level_measure(&mu, n, 6).unwrap();
        assert!(m.within(6), "level {n}: {m:?}");
        assert!(m.hi <= &Dyadic::pow2(-(n as i64)) + &Dyadic::pow2(-12), "level {n}: {m:?}");
    }
    let other = MeasureOracle::bernoulli(Dyadic::frac(1, 2)).unwrap();
    assert!(matches!(seq.level_measure(&other, 0, 4), Err(TestError::Precondition(_))));
}

#[test]
fn kurtz_singleton_under_lambda() {
    // U = ∪_k [0^k 1], so P = {0^∞}
    let u = OpenSet::from_fn(|k| (k < 63).then(|| (BasicPoint::Idx(1 << k), Dyadic::pow2(-(k as i64)))));
    let p = KurtzTest { space: Space::Cantor, complement: u };
    let mu = lambda();
    let seq = kurtz_to_sequential(&p, &mu, 64).unwrap();
    for n in 0..=6 {
        assert_eq!(seq.contains(&mu, n, &zeros(), 8).unwrap(), Some(true));
        let m = seq.level_measure(&mu, n, 12).unwrap();
        assert!(m.hi <= &Dyadic::pow2(-(n as i64)) + &Dyadic::pow2(-12), "level {n}: {m:?}");
    }
    let one = CauchyName::cantor_eventually(vec![true], false);
    assert_eq!(seq.contains(&mu, 3, &one, 8).unwrap(), Some(false));
}

#[test]
fn kurtz_with_an_empty_set() {
    let u = OpenSet::from_balls(vec![(BasicPoint::Idx(0), Dyadic::from(2))]);
    let p = KurtzTest { space: Space::Cantor, complement: u };
    let mu = lambda();
    let seq = kurtz_to_sequential(&p, &mu, 4).unwrap();
    assert!(seq.level_measure(&mu, 5, 10).unwrap().hi <= Dyadic::pow2(-10));
}

#[test]
fn kurtz_atom_is_unverified() {
    let unit = Space::unit();
    let half = Dyadic::frac(1, 1);
    let mu = MeasureOracle::dirac(&unit, CauchyName::unit_dyadic(&half));
    // every basic point other than 1/2, with radius its distance to 1/2
    let u = OpenSet::from_fn(move |i| {
        let v = crate::spaces::unit_value(i as u64);
        let r = (&v - &Dyadic::frac(1, 1)).abs();
        r.is_positive().then_some((BasicPoint::Idx(i as u64), r))
    });
    let p = KurtzTest { space: unit, complement: u };
    assert_eq!(kurtz_to_sequential(&p, &mu, 12).unwrap_err(), TestError::Unverified { budget: 12 });
}

fn rate_n_plus_one() -> Rate {
    Arc::new(|n| Dyadic::from(n as i64 + 1))
}

#[test]
fn martingale_of_lambda_against_itself() {
    let m = MartingaleTest { nu: lambda(), rate: rate_n_plus_one(), blind: false };
    let x = CauchyName::cantor(|i| i % 3 == 1);
    let rep = martingale_check(&m, &lambda(), &x, 20).unwrap();
    assert_eq!(rep.rows.len(), 21);
    assert!(rep.rows.iter().all(|r| r.ratio == Some(Interval::one()) && !r.exceeds));
    assert_eq!(rep.verdict, MartingaleVerdict::WithinRate { argmax: 10 });
}

#[test]
fn martingale_exceedance_and_blind_mode() {
    // ν = Bernoulli(3/4) against λ along 1^∞: ratio (3/2)^n
    let nu = MeasureOracle::bernoulli(Dyadic::frac(3, 2)).unwrap();
    let x = CauchyName::cantor(|_| true);
    let uniform = MartingaleTest { nu: nu.clone(), rate: rate_n_plus_one(), blind: false };
    let blind = MartingaleTest { blind: true, ..uniform.clone() };
    let a = martingale_check(&uniform, &lambda(), &x, 16).unwrap();
    let b = martingale_check(&blind, &lambda(), &x, 16).unwrap();
    assert_eq!(a.verdict, MartingaleVerdict::Exceeds { first: 8, argmax: 16 });
    assert_eq!(a.verdict, b.verdict);
    // (3/2)^n > n + 1 first at n = 4
    assert!(!a.rows[3].exceeds && a.rows[4].exceeds);
}

#[test]
fn blind_mode_counts_ties() {
    let m = MartingaleTest { nu: lambda(), rate: Arc::new(|_| Dyadic::one()), blind: true };
    let rep = martingale_check(&m, &lambda(), &zeros(), 4).unwrap();
    assert!(rep.rows.iter().all(|r| r.exceeds));
    let m = MartingaleTest { blind: false, ..m };
    assert!(martingale_check(&m, &lambda(), &zeros(), 4).unwrap().rows.iter().all(|r| !r.exceeds));
}

#[test]
fn martingale_outside_support() {
    let mu = MeasureOracle::bernoulli_given(Dyadic::frac(1, 1), vec![false, false, true]).unwrap();
    let m = MartingaleTest { nu: lambda(), rate: rate_n_plus_one(), blind: false };
    let rep = martingale_check(&m, &mu, &zeros(), 10).unwrap();
    assert_eq!(rep.verdict, MartingaleVerdict::OutsideSupport { n: 3 });
    assert_eq!(rep.rows.len(), 4);
}

#[test]
fn martingale_identity_holds_exactly() {
    let nu = MeasureOracle::bernoulli_given(Dyadic::frac(3, 2), vec![true, false]).unwrap();
    for code in 0u32..64 {
        let sigma: Vec<bool> = (0..6).map(|i| code >> i & 1 == 1).collect();
        assert!(martingale_identity(&nu, &sigma).unwrap());
    }
    let leb = MeasureOracle::lebesgue_unit();
    assert!(matches!(martingale_identity(&leb, &[true]), Err(TestError::Precondition(_))));
}

#[test]
fn zero_measure_test_values() {
    let unit = Space::unit();
    let t = zero_measure_test(&unit);
    let x = CauchyName::unit_dyadic(&Dyadic::frac(1, 2));
    let leb = MeasureOracle::lebesgue_unit();
    assert!(t.integral(&leb, 16).unwrap().contains(&Dyadic::one()));
    assert!(eval_deficiency(&t, &leb, &x, 12).unwrap() >= &Dyadic::one() - &Dyadic::pow2(-10));

    let quarter = MeasureOracle::mixture(vec![Dyadic::frac(1, 2)], vec![leb]).unwrap();
    let iv = t.integral(&quarter, 16).unwrap();
    assert!(iv.contains(&Dyadic::frac(1, 1)) && iv.within(16));
    let d = eval_deficiency(&t, &quarter, &x, 12).unwrap();
    assert!(d >= &Dyadic::from(2) - &Dyadic::pow2(-10) && d <= Dyadic::from(2));

    let zero = MeasureOracle::zero(&unit);
    assert!(eval_deficiency(&t, &zero, &x, 10).unwrap() >= Dyadic::from(10));
    assert!(t.integral(&zero, 10).unwrap().contains(&Dyadic::zero()));
}

#[test]
fn support_test_values() {
    let unit = Space::unit();
    let c = unit_pt(Dyadic::frac(1, 1));
    let t = support_test(&unit, c, Dyadic::frac(1, 3));
    let y = MeasureOracle::dirac(&unit, CauchyName::unit_dyadic(&Dyadic::one()));
    let inside = CauchyName::unit_dyadic(&Dyadic::frac(1, 1));
    let outside = CauchyName::unit_dyadic(&Dyadic::frac(7, 3));
    let d = eval_deficiency(&t, &y, &inside, 12).unwrap();
    assert!(d >= Dyadic::from(11), "{d}");
    assert_eq!(eval_deficiency(&t, &y, &outside, 12).unwrap(), Dyadic::zero());
    let lsc = t.lsc(&y).unwrap();
    for n in 0..8 {
        assert_eq!(y.integrate(&lsc.stage(n), 20).unwrap(), Interval::zero());
    }
    assert_eq!(t.integral(&y, 10).unwrap(), Interval::zero());
    let leb = MeasureOracle::lebesgue_unit();
    assert!(matches!(t.integral(&leb, 10), Err(SemiError::Precondition(_))));
}

#[test]
fn tent_at_its_center() {
    let unit = Space::unit();
    let x0 = unit_pt(Dyadic::zero());
    let t = tent_test(&unit, x0.clone());
    let far = MeasureOracle::dirac(&unit, CauchyName::unit_dyadic(&Dyadic::one()));
    let x = CauchyName::basic(x0);
    let lsc = t.lsc(&far).unwrap();
    // every summand is 1 at x0 and its weight is 1
    let mut prev = Dyadic::zero();
    for depth in 1..8 {
        let d = eval_deficiency(&t, &far, &x, depth).unwrap();
        assert!(d > prev, "depth {depth}: {d}");
        prev = d;
    }
    assert!(prev >= Dyadic::from(5));
    assert!(lsc.approx(6, &x, 20).lo > Dyadic::from(5));
}

#[test]
fn tent_integral_under_lebesgue() {
    let t = tent_test(&Space::unit(), unit_pt(Dyadic::frac(1, 1)));
    let leb = MeasureOracle::lebesgue_unit();
    // ∫ f_0 = 3/4 and ∫ f_m = 2^-m for m >= 1
    let iv = t.integral(&leb, 16).unwrap();
    assert!(iv.contains(&Dyadic::frac(7, 2)) && iv.within(16), "{iv:?}");
    assert!(iv.hi <= &Dyadic::from(2) + &Dyadic::pow2(-10));
    let lower = integrate_lsc_lower(&leb, &t.lsc(&leb).unwrap(), 14).unwrap();
    assert!(lower <= iv.hi && lower >= Dyadic::frac(3, 1));
}

#[test]
fn normalized_builtins_integrate_to_one() {
    let unit = Space::unit();
    let leb = MeasureOracle::lebesgue_unit();
    for t in [zero_measure_test(&unit), tent_test(&unit, unit_pt(Dyadic::frac(1, 1)))] {
        let s = normalize(&t);
        assert!(s.integral(&leb, 16).unwrap().contains(&Dyadic::one()), "{}", t.name());
    }
    let s = normalize(&sum_sequential_to_integral(&zero_run_test()));
    assert!(s.integral(&lambda(), 16).unwrap().contains(&Dyadic::one()));
}

#[test]
fn tent_levels_contain_the_center() {
    let unit = Space::unit();
    let x0 = unit_pt(Dyadic::zero());
    let mu = MeasureOracle::dirac(&unit, CauchyName::unit_dyadic(&Dyadic::one()));
    let t = normalize(&tent_test(&unit, x0.clone()));
    let seq = integral_to_sequential(&t, &mu).unwrap();
    for n in 0..3 {
        assert_eq!(seq.contains(&mu, n, &CauchyName::basic(x0.clone()), 24).unwrap(), Some(true), "level {n}");
        assert!(seq.level_measure(&mu, n, 4).unwrap().hi <= Dyadic::pow2(-(n as i64)));
    }
}
