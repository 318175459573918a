mod common;

use common::{d, lambda};
use proptest::prelude::*;
use std::sync::Arc;
use unimeas::exact::Dyadic;
use unimeas::measures::{MeasureOracle, OpenSet};
use unimeas::randtests::{
    eval_deficiency, integral_to_sequential, kurtz_to_sequential, martingale_check, martingale_identity, sum_sequential_to_integral, tent_test,
    zero_run_test, KurtzTest, MartingaleTest,
};
use unimeas::spaces::{unit_index, BasicPoint, CauchyName, Space};

fn bits_of(code: u64, len: usize) -> Vec<bool> {
    (0..len).map(|i| code >> i & 1 == 1).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    /// Levels of the test derived from `Σ_n 1_[0^n]` obey the Markov bound
    /// whenever `μ[0^n] <= 2^-n`.
    #[test]
    fn derived_levels_are_light(p in 4i64..=8) {
        let mu = MeasureOracle::bernoulli(d(p, 3)).unwrap();
        let seq = integral_to_sequential(&sum_sequential_to_integral(&zero_run_test()), &mu).unwrap();
        for n in 0..=3 {
            let m = seq.level_measure(&mu, n, 12).unwrap();
            prop_assert!(m.hi <= &Dyadic::pow2(-(n as i64)) + &Dyadic::pow2(-12), "level {n}: {m:?}");
        }
    }

    /// `P = {x : x_{2j} = 0 for all j}` is λ-null and closed; its points lie
    /// in every level of the derived test.
    #[test]
    fn kurtz_levels_contain_the_set(odd in any::<u64>()) {
        // bit 2j set after even bits 0..2j clear, any odd bits
        let u = OpenSet::from_fn(|e| {
            let j = (usize::BITS - (e + 1).leading_zeros() - 1) as usize;
            let odd = (e + 1 - (1 << j)) as u64;
            (j < 31).then(|| {
                let spread: u64 = (0..j).map(|t| (odd >> t & 1) << (2 * t + 1)).sum();
                (BasicPoint::Idx(spread | 1 << (2 * j)), Dyadic::pow2(-2 * j as i64))
            })
        });
        let p = KurtzTest { space: Space::Cantor, complement: u };
        let mu = lambda();
        let seq = kurtz_to_sequential(&p, &mu, 64).unwrap();
        let x = CauchyName::cantor(move |i| i % 2 == 1 && odd >> (i / 2 % 64) & 1 == 1);
        for n in 0..=3 {
            prop_assert_eq!(seq.contains(&mu, n, &x, 10).unwrap(), Some(true));
            let m = seq.level_measure(&mu, n, 12).unwrap();
            prop_assert!(m.hi <= &Dyadic::pow2(-(n as i64)) + &Dyadic::pow2(-12), "level {n}: {m:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn deficiency_grows_with_depth(x in 0i64..=64, c in 0i64..=8) {
        let unit = Space::unit();
        let t = tent_test(&unit, BasicPoint::Idx(unit_index(&d(c, 3))));
        let mu = MeasureOracle::lebesgue_unit();
        let x = CauchyName::unit_dyadic(&d(x, 6));
        let mut prev = Dyadic::zero();
        for depth in [1, 2, 4, 6, 8] {
            let v = eval_deficiency(&t, &mu, &x, depth).unwrap();
            prop_assert!(v >= prev, "depth {depth}: {v} < {prev}");
            prev = v;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn martingale_identity_on_cylinders(p in 0i64..=8, given in 0u64..8, glen in 0usize..3, code in any::<u64>(), len in 0usize..24) {
        let nu = MeasureOracle::bernoulli_given(d(p, 3), bits_of(given, glen)).unwrap();
        prop_assert!(martingale_identity(&nu, &bits_of(code, len)).unwrap());
    }

    /// Ratios `(2p)^a (2 - 2p)^b` have exponent at least `-2n`, so a rate
    /// with a `2^-60` offset never ties and the two modes agree.
    #[test]
    fn blind_and_uniform_modes_agree(p in 1i64..8, code in any::<u64>()) {
        let nu = MeasureOracle::bernoulli(d(p, 3)).unwrap();
        let rate: unimeas::randtests::Rate = Arc::new(|n| &Dyadic::from(n as i64 + 1) + &Dyadic::pow2(-60));
        let uniform = MartingaleTest { nu, rate, blind: false };
        let blind = MartingaleTest { blind: true, ..uniform.clone() };
        let x = CauchyName::cantor(move |i| code >> (i % 64) & 1 == 1);
        let a = martingale_check(&uniform, &lambda(), &x, 24).unwrap();
        let b = martingale_check(&blind, &lambda(), &x, 24).unwrap();
        prop_assert_eq!(a.verdict, b.verdict);
        prop_assert_eq!(a.rows.iter().map(|r| r.exceeds).collect::<Vec<_>>(), b.rows.iter().map(|r| r.exceeds).collect::<Vec<_>>());
    }
}
