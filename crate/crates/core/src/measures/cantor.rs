//! Exact integration against Bernoulli measures on Cantor space.
//!
//! Cantor distances are powers of two. Inside a cylinder that holds at most
//! one distinct bump center, a basic function depends only on the index at
//! which a point first leaves that center, and it is constant once the point
//! stays within the smallest plateau radius. The integral is then a finite sum
//! over exit indices plus the mass of the deepest cylinder. Cylinders holding
//! several centers are split until the centers separate, which happens within
//! 64 bits because basic points are `u64` indices.

use std::collections::HashMap;

use crate::basis::BasicFunction;
use crate::exact::{Dyadic, Interval};
use crate::par;
use crate::spaces::BasicPoint;

struct Ctx<'a> {
    p: &'a Dyadic,
    q: Dyadic,
    given: &'a [bool],
    f: &'a BasicFunction,
    centers: Vec<u64>,
    /// For each center, the first exit index from which every bump at that
    /// center sits on its plateau.
    plateau: HashMap<u64, usize>,
    prec: u32,
}

fn bit(c: u64, i: usize) -> bool {
    i < 64 && c >> i & 1 == 1
}

fn prefix_matches(c: u64, bits: u64, len: usize) -> bool {
    (0..len).all(|i| bit(c, i) == bit(bits, i))
}

/// Index `i` with `2^-i <= r < 2^-(i-1)`, i.e. `-floor(log2 r)`, at least 0.
fn plateau_index(r: &Dyadic) -> usize {
    let c = r.ceil_log2().expect("positive radius");
    let floor = if r.mantissa() == &num_bigint::BigInt::from(1) { c } else { c - 1 };
    (-floor).max(0) as usize
}

fn collect_plateaus(f: &BasicFunction, out: &mut HashMap<u64, usize>) {
    match f {
        BasicFunction::One => {}
        BasicFunction::Bump { center, r, .. } => {
            let i = plateau_index(r);
            let e = out.entry(center.idx()).or_insert(0);
            *e = (*e).max(i);
        }
        BasicFunction::Max(fs) | BasicFunction::Min(fs) => fs.iter().for_each(|g| collect_plateaus(g, out)),
        BasicFunction::LinComb(ts) => ts.iter().for_each(|(_, g)| collect_plateaus(g, out)),
    }
}

impl Ctx<'_> {
    fn prob(&self, i: usize, b: bool) -> Dyadic {
        match self.given.get(i) {
            Some(&g) => if g == b { Dyadic::one() } else { Dyadic::zero() },
            None => if b { self.p.clone() } else { self.q.clone() },
        }
    }

    /// Distance from any point of the cylinder `[bits; len]` to a center
    /// outside it.
    fn outside(&self, bits: u64, len: usize, c: u64) -> Dyadic {
        let i = (0..len).find(|&i| bit(c, i) != bit(bits, i)).expect("center lies outside the cylinder");
        Dyadic::pow2(-(i as i64))
    }

    fn value(&self, bits: u64, len: usize, inner: Option<(u64, &Dyadic)>) -> Interval {
        self.f.range_with(
            &mut |pt: &BasicPoint| {
                let c = pt.idx();
                match inner {
                    Some((ic, d)) if ic == c => Interval::point(d.clone()),
                    _ => Interval::point(self.outside(bits, len, c)),
                }
            },
            self.prec,
        )
    }

    fn cylinder(&self, bits: u64, len: usize, mass: Dyadic) -> Interval {
        if mass.is_zero() {
            return Interval::zero();
        }
        let inside: Vec<u64> = self.centers.iter().copied().filter(|&c| prefix_matches(c, bits, len)).collect();
        match inside.len() {
            0 => self.value(bits, len, None).scale(&mass),
            1 => self.single(bits, len, mass, inside[0]),
            _ => {
                let b1 = bits | 1 << len;
                let (m0, m1) = (&mass * &self.prob(len, false), &mass * &self.prob(len, true));
                let (a, b) = par::join(|| self.cylinder(bits, len + 1, m0), || self.cylinder(b1, len + 1, m1));
                &a + &b
            }
        }
    }

    fn single(&self, bits: u64, len: usize, mass: Dyadic, c: u64) -> Interval {
        let deepest = self.plateau[&c].max(len);
        let mut stay = mass;
        let mut acc = Interval::zero();
        for i in len..deepest {
            let cb = bit(c, i);
            let leave = &stay * &self.prob(i, !cb);
            if !leave.is_zero() {
                acc = &acc + &self.value(bits, len, Some((c, &Dyadic::pow2(-(i as i64))))).scale(&leave);
            }
            stay = &stay * &self.prob(i, cb);
            if stay.is_zero() {
                return acc;
            }
        }
        &acc + &self.value(bits, len, Some((c, &Dyadic::zero()))).scale(&stay)
    }
}

/// `∫ f d Bernoulli(p)` with the first bits fixed to `given`, to within `2^-k`.
pub(crate) fn bernoulli_integral(p: &Dyadic, given: &[bool], f: &BasicFunction, k: u32) -> Interval {
    let mut plateau = HashMap::new();
    collect_plateaus(f, &mut plateau);
    let centers = f.centers().iter().map(BasicPoint::idx).collect();
    let ctx = Ctx { p, q: &Dyadic::one() - p, given, f, centers, plateau, prec: f.rounding_precision(k + 2) };
    ctx.cylinder(0, 0, Dyadic::one()).round_out(k as i64 + 3)
}
