//! Exact integration of basic functions against Lebesgue measure on [0, 1].
//!
//! On the unit interval every basic function is piecewise linear. Each tree
//! is turned into its list of knots with exact rational values; max and min
//! insert the crossing points, and the integral is the trapezoid sum.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::basis::BasicFunction;
use crate::exact::{Dyadic, Interval};
use crate::spaces::unit_value;

type Q = BigRational;

fn q(d: &Dyadic) -> Q {
    let m = d.mantissa().clone();
    let e = d.exponent();
    if e >= 0 {
        Q::from_integer(m << e as usize)
    } else {
        Q::new(m, BigInt::one() << (-e) as usize)
    }
}

/// Knots `(x, y)` with `x` strictly increasing from 0 to 1; linear in between.
#[derive(Clone, Debug)]
struct Pl(Vec<(Q, Q)>);

impl Pl {
    fn constant(c: Q) -> Pl {
        Pl(vec![(Q::zero(), c.clone()), (Q::one(), c)])
    }

    fn xs(&self) -> impl Iterator<Item = &Q> {
        self.0.iter().map(|(x, _)| x)
    }
}

fn merged_xs(a: &Pl, b: &Pl) -> Vec<Q> {
    let mut xs: Vec<Q> = a.xs().chain(b.xs()).cloned().collect();
    xs.sort();
    xs.dedup();
    xs
}

/// Values of `p` at the sorted points `xs`, in one sweep.
fn values_at(p: &Pl, xs: &[Q]) -> Vec<Q> {
    let k = &p.0;
    let mut j = 0;
    xs.iter()
        .map(|x| {
            while j + 1 < k.len() && &k[j + 1].0 <= x {
                j += 1;
            }
            let (x0, y0) = &k[j];
            if x <= x0 || j + 1 == k.len() {
                return y0.clone();
            }
            let (x1, y1) = &k[j + 1];
            if y0 == y1 {
                return y0.clone();
            }
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        })
        .collect()
}

fn combine(a: &Pl, b: &Pl, take_max: bool) -> Pl {
    let xs = merged_xs(a, b);
    let (va, vb) = (values_at(a, &xs), values_at(b, &xs));
    let mut out: Vec<(Q, Q)> = Vec::with_capacity(xs.len() * 2);
    for i in 0..xs.len() {
        let (ua, ub) = (&va[i], &vb[i]);
        if i > 0 {
            let (pa, pb) = (&va[i - 1], &vb[i - 1]);
            let d0 = pa - pb;
            let d1 = ua - ub;
            if (d0.is_positive() && d1.is_negative()) || (d0.is_negative() && d1.is_positive()) {
                let xp = &xs[i - 1];
                let t = &d0 / (&d0 - &d1);
                let xc = xp + (&xs[i] - xp) * &t;
                let yc = pa + (ua - pa) * &t;
                out.push((xc, yc));
            }
        }
        let pick = if (ua > ub) == take_max { ua } else { ub };
        out.push((xs[i].clone(), pick.clone()));
    }
    Pl(out)
}

fn lin(terms: &[(Q, Pl)]) -> Pl {
    let mut xs: Vec<Q> = terms.iter().flat_map(|(_, p)| p.xs().cloned()).collect();
    xs.push(Q::zero());
    xs.push(Q::one());
    xs.sort();
    xs.dedup();
    let mut ys = vec![Q::zero(); xs.len()];
    for (c, p) in terms {
        if c.is_zero() {
            continue;
        }
        for (y, v) in ys.iter_mut().zip(values_at(p, &xs)) {
            if !v.is_zero() {
                *y += c * v;
            }
        }
    }
    Pl(xs.into_iter().zip(ys).collect())
}

fn bump(c: &Q, r: &Q, s: &Q) -> Pl {
    let zero = Q::zero();
    let one = Q::one();
    let mut xs = vec![zero.clone(), one.clone()];
    for x in [c - s, c - r, c.clone(), c + r, c + s] {
        if x > zero && x < one {
            xs.push(x);
        }
    }
    xs.sort();
    xs.dedup();
    let g = s - r;
    Pl(xs
        .into_iter()
        .map(|x| {
            let d = (&x - c).abs();
            let v = if &d <= r {
                one.clone()
            } else if &d >= s {
                zero.clone()
            } else {
                (s - &d) / &g
            };
            (x, v)
        })
        .collect())
}

fn to_pl(f: &BasicFunction) -> Pl {
    match f {
        BasicFunction::One => Pl::constant(Q::one()),
        BasicFunction::Bump { center, r, s } => bump(&q(&unit_value(center.idx())), &q(r), &q(s)),
        BasicFunction::Max(fs) | BasicFunction::Min(fs) => {
            let take_max = matches!(f, BasicFunction::Max(_));
            let mut it = fs.iter().map(to_pl);
            let first = it.next().expect("nonempty max/min");
            it.fold(first, |acc, p| combine(&acc, &p, take_max))
        }
        BasicFunction::LinComb(ts) => {
            if ts.is_empty() {
                return Pl::constant(Q::zero());
            }
            let terms: Vec<(Q, Pl)> = ts.iter().map(|(c, g)| (q(c), to_pl(g))).collect();
            lin(&terms)
        }
    }
}

fn rational_interval(v: &Q, p: i64) -> Interval {
    let scaled = v * Q::from_integer(BigInt::one() << p as usize);
    Interval::new(Dyadic::new(scaled.floor().to_integer(), -p), Dyadic::new(scaled.ceil().to_integer(), -p))
}

/// Exact integral over [0, 1], rounded outward to the `2^-(k+2)` grid.
pub(crate) fn lebesgue_integral(f: &BasicFunction, k: u32) -> Interval {
    let p = to_pl(f);
    let two = Q::from_integer(BigInt::from(2));
    let total = p.0.windows(2).fold(Q::zero(), |acc, w| {
        let ((x0, y0), (x1, y1)) = (&w[0], &w[1]);
        acc + (x1 - x0) * (y0 + y1) / &two
    });
    rational_interval(&total, k as i64 + 2)
}
