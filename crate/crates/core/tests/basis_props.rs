mod common;

use common::unit_dyadic;
use proptest::prelude::*;
use unimeas::basis::{ball_lower_approx, eval_basic, BasicFunction, BasisEnumeration};
use unimeas::exact::Dyadic;
use unimeas::spaces::{BasicPoint, CauchyName, Space};

fn pos_dyadic() -> impl Strategy<Value = Dyadic> {
    (1i64..64, 0u32..8).prop_map(|(m, e)| Dyadic::frac(m, e))
}

fn any_dyadic() -> impl Strategy<Value = Dyadic> {
    (-64i64..64, 0u32..8).prop_map(|(m, e)| Dyadic::frac(m, e))
}

fn tree(space: Space) -> impl Strategy<Value = BasicFunction> {
    let leaf = prop_oneof![
        Just(BasicFunction::One),
        (0u64..200, pos_dyadic(), pos_dyadic()).prop_map(move |(c, r, g)| {
            let center = space.decode_point(&c.into()).unwrap();
            BasicFunction::Bump { center, r: r.clone(), s: &r + &g }
        }),
    ];
    leaf.prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            proptest::collection::vec(inner.clone(), 1..3).prop_map(BasicFunction::Max),
            proptest::collection::vec(inner.clone(), 1..3).prop_map(BasicFunction::Min),
            proptest::collection::vec((any_dyadic(), inner), 0..3).prop_map(BasicFunction::LinComb),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn enumeration_round_trips(f in tree(Space::UnitInterval), g in tree(Space::Product { factors: vec![Space::Cantor, Space::Baire] })) {
        let en = BasisEnumeration::new(&Space::UnitInterval);
        prop_assert_eq!(en.decode(&en.encode(&f)).unwrap(), f.clone());
        let prod = Space::Product { factors: vec![Space::Cantor, Space::Baire] };
        let en = BasisEnumeration::new(&prod);
        prop_assert_eq!(en.decode(&en.encode(&g)).unwrap(), g);
    }

    #[test]
    fn text_form_round_trips(f in tree(Space::Cantor)) {
        let back: BasicFunction = f.to_string().parse().unwrap();
        prop_assert_eq!(back, f);
    }

    /// With `s - r` a power of two the three-case bump formula is a dyadic
    /// and evaluation reproduces it exactly.
    #[test]
    fn bump_formula_is_exact(c in unit_dyadic(8), x in unit_dyadic(10), r in 1i64..32, j in 1u32..8, k in 0u32..30) {
        let unit = Space::UnitInterval;
        let r = Dyadic::frac(r, 6);
        let s = &r + &Dyadic::pow2(-(j as i64));
        let f = BasicFunction::bump(unit.line_point(&c), r.clone(), s.clone()).unwrap();
        let dist = (&x - &c).abs();
        let want = if dist <= r {
            Dyadic::one()
        } else if dist >= s {
            Dyadic::zero()
        } else {
            (&s - &dist).shl(j as i64)
        };
        let got = eval_basic(&f, &unit, &CauchyName::unit_dyadic(&x), k);
        prop_assert_eq!(got.mid(), want);
    }

    #[test]
    fn ball_approximations_vanish_outside(c in unit_dyadic(8), x in unit_dyadic(10), radius in 1i64..64, n in 0u32..20) {
        let unit = Space::UnitInterval;
        let radius = Dyadic::frac(radius, 6);
        let f = ball_lower_approx(unit.line_point(&c), &radius, n);
        let v = eval_basic(&f, &unit, &CauchyName::unit_dyadic(&x), 20);
        if (&x - &c).abs() >= radius {
            prop_assert!(v.hi.is_zero(), "{v:?}");
        }
        prop_assert!(v.hi <= Dyadic::one());
    }

    #[test]
    fn cantor_ball_approximations_vanish_outside(c in 0u64..1024, x in 0u64..1024, l in 0i64..10, n in 0u32..16) {
        let radius = Dyadic::pow2(-l);
        let f = ball_lower_approx(BasicPoint::Idx(c), &radius, n);
        let v = eval_basic(&f, &Space::Cantor, &CauchyName::idx(x), 20);
        if Space::Cantor.dist(&BasicPoint::Idx(c), &BasicPoint::Idx(x), 20).lo >= radius {
            prop_assert!(v.hi.is_zero());
        }
    }
}
