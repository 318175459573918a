//! Bijective integer codings shared by the point and basis enumerations.
//!
//! `pair(x, y) = (x + y)(x + y + 1)/2 + y` is the Cantor pairing; `zig` maps
//! `0, -1, 1, -2, 2, ...` to `0, 1, 2, 3, 4, ...`.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};

use crate::exact::Dyadic;

pub fn pair(x: &BigUint, y: &BigUint) -> BigUint {
    let s = x + y;
    (&s * (&s + 1u32)) / 2u32 + y
}

pub fn unpair(z: &BigUint) -> (BigUint, BigUint) {
    let w = (((z * 8u32) + 1u32).sqrt() - 1u32) / 2u32;
    let t = (&w * (&w + 1u32)) / 2u32;
    let y = z - &t;
    let x = &w - &y;
    (x, y)
}

pub fn zig(e: &BigInt) -> BigUint {
    if e.sign() == num_bigint::Sign::Minus {
        (-e * 2i32 - 1i32).to_biguint().unwrap()
    } else {
        (e * 2i32).to_biguint().unwrap()
    }
}

pub fn unzig(j: &BigUint) -> BigInt {
    let j = BigInt::from(j.clone());
    if (&j % 2u32).is_one() {
        -((j + 1u32) / 2u32)
    } else {
        j / 2u32
    }
}

/// Positive dyadic `(2a+1) 2^e` with `(zig e, a) = unpair(c)`.
pub fn pos_dyadic(c: &BigUint) -> Dyadic {
    let (j, a) = unpair(c);
    let e = unzig(&j).to_i64().expect("exponent code out of range");
    Dyadic::new(BigInt::from(a) * 2u32 + 1u32, e)
}

pub fn pos_dyadic_code(d: &Dyadic) -> BigUint {
    assert!(d.is_positive(), "positive dyadic expected, got {d}");
    let a = ((d.mantissa() - 1u32) / 2u32).to_biguint().unwrap();
    pair(&zig(&BigInt::from(d.exponent())), &a)
}

/// All dyadics: `0 -> 0`, then sign in the low bit of `c - 1`.
pub fn dyadic(c: &BigUint) -> Dyadic {
    if c.is_zero() {
        return Dyadic::zero();
    }
    let c = c - 1u32;
    let v = pos_dyadic(&(&c / 2u32));
    if (&c % 2u32).is_one() { -v } else { v }
}

pub fn dyadic_code(d: &Dyadic) -> BigUint {
    if d.is_zero() {
        return BigUint::zero();
    }
    let base = pos_dyadic_code(&d.abs()) * 2u32;
    if d.is_negative() { base + 2u32 } else { base + 1u32 }
}

/// Finite sequences: `[] -> 0`, `x :: rest -> 1 + pair(x, code(rest))`.
pub fn seq(c: &BigUint) -> Vec<BigUint> {
    let mut out = Vec::new();
    let mut c = c.clone();
    while !c.is_zero() {
        let (x, rest) = unpair(&(&c - 1u32));
        out.push(x);
        c = rest;
    }
    out
}

pub fn seq_code(xs: &[BigUint]) -> BigUint {
    xs.iter().rev().fold(BigUint::zero(), |acc, x| pair(x, &acc) + 1u32)
}

/// Nonempty sequences: `x :: rest -> pair(x, seq_code(rest))`.
pub fn nonempty_seq(c: &BigUint) -> Vec<BigUint> {
    let (x, rest) = unpair(c);
    let mut out = vec![x];
    out.extend(seq(&rest));
    out
}

pub fn nonempty_seq_code(xs: &[BigUint]) -> BigUint {
    assert!(!xs.is_empty());
    pair(&xs[0], &seq_code(&xs[1..]))
}

pub fn to_u64(c: &BigUint) -> Option<u64> {
    c.to_u64()
}
