#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use proptest::prelude::*;
use unimeas::exact::Dyadic;
use unimeas::measures::MeasureOracle;
use unimeas::spaces::Space;

pub fn d(n: i64, e: u32) -> Dyadic {
    Dyadic::frac(n, e)
}

pub fn rational(x: &Dyadic) -> BigRational {
    let m = BigRational::from_integer(x.mantissa().clone());
    let e = x.exponent();
    let p = BigRational::from_integer(BigInt::one() << e.unsigned_abs() as usize);
    if e >= 0 { m * p } else { m / p }
}

/// `m 2^-e` with `|m| < 2^bits` and `e <= max_e`.
pub fn dyadic(bits: u32, max_e: u32) -> impl Strategy<Value = Dyadic> {
    let lim = 1i64 << bits;
    (-lim + 1..lim, 0..=max_e).prop_map(|(m, e)| Dyadic::frac(m, e))
}

/// A dyadic in `[0, 1]` on the `2^-bits` grid.
pub fn unit_dyadic(bits: u32) -> impl Strategy<Value = Dyadic> {
    (0..=1i64 << bits).prop_map(move |m| Dyadic::frac(m, bits))
}

pub fn lambda() -> MeasureOracle {
    MeasureOracle::bernoulli(d(1, 1)).unwrap()
}

/// The Cantor-space fixtures with exact cylinder masses.
pub fn cantor_fixtures() -> Vec<MeasureOracle> {
    vec![
        lambda(),
        MeasureOracle::bernoulli(d(1, 2)).unwrap(),
        MeasureOracle::dirac(&Space::Cantor, unimeas::spaces::CauchyName::idx(0)),
    ]
}

pub fn bits_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}
