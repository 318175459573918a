//! Nested-interval search for a level whose preimage is null.
//!
//! Given a continuous quantity `q` on the space (a distance to a center, or
//! the values of an lsc test) and a window `[lo, hi]`, each stage splits the
//! current interval into `2^j` equal pieces and keeps every other one, so the
//! `m` candidates stay disjoint even after fattening each by a quarter of its
//! width. Their masses sum to at most `‖μ‖`, so one of them weighs less than
//! `ε_s = 2^-s` once `m > ‖μ‖ / ε_s`. The leftmost piece whose certified
//! upper bound is at most `ε_s` becomes the next interval.

use serde::Serialize;

use crate::exact::{ceil_log2_usize, Dyadic};
use crate::par;

/// One accepted stage of a search.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SearchStage {
    pub s: u32,
    pub lo: Dyadic,
    pub hi: Dyadic,
    /// `ε_s`, the mass budget of this stage.
    pub eps: Dyadic,
    /// Certified upper bound on the mass of `q ∈ [lo - fat, hi]`, at most `eps`.
    pub bound: Dyadic,
    /// Fattening used for the bound.
    pub fat: Dyadic,
    /// Auxiliary effort reported by the bound (stage index for lsc tests).
    pub effort: usize,
}

/// A certified upper bound on the mass of a fattened piece.
///
/// `bound(a, b, fat, tol)` must return an upper bound on `μ{q ∈ [a, b]}` that
/// exceeds the integral of a window function of `q` by at most `tol`. The
/// window is 1 on `[a - fat, b]` and vanishes outside `(a - 2 fat, b + fat)`.
pub trait PieceBound: Sync {
    type Error: Send;
    fn bound(&self, a: &Dyadic, b: &Dyadic, fat: &Dyadic, tol: &Dyadic) -> Result<(Dyadic, usize), Self::Error>;
}

/// Number of disjoint candidates at stage `s`: `max(3, ceil(‖μ‖ / ε_s) + 1)`.
pub fn pieces_for(norm_hi: &Dyadic, s: u32) -> usize {
    let ratio = norm_hi.shl(s as i64).ceil_at(0);
    let r = ratio.to_i64().expect("mass ratio fits in i64").max(0) as usize;
    (r + 1).max(3)
}

/// How a stage is searched.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchPlan {
    /// Rounds of halving the tolerance before giving up.
    pub max_effort: u32,
    /// First try three pieces of an eighth of the interval each with a loose
    /// tolerance, and fall back to the full subdivision only when none of
    /// them is light. This keeps the intervals, and with them the precision
    /// every later stage needs, from shrinking by `2^{s+2}` per stage.
    pub coarse_first: bool,
}

/// Leftmost piece among `a_i = lo + 2iw`, `i < m`, whose bound is at most
/// `eps`. Pieces are bounded in batches of the worker count.
fn scan<B: PieceBound>(
    lo: &Dyadic,
    w: &Dyadic,
    m: usize,
    fat: &Dyadic,
    tol: &Dyadic,
    eps: &Dyadic,
    bound: &B,
) -> Result<Option<(Dyadic, Dyadic, Dyadic, usize)>, B::Error> {
    let batch = par::threads().max(1);
    for start in (0..m).step_by(batch) {
        let idx: Vec<usize> = (start..(start + batch).min(m)).collect();
        let results = par::map_slice(&idx, |&i| {
            let a = lo + &w.shl(1).mul_small(i);
            let b = &a + w;
            bound.bound(&a, &b, fat, tol).map(|r| (a, b, r))
        });
        for r in results {
            let (a, b, (u, used)) = r?;
            if &u <= eps {
                return Ok(Some((a, b, u, used)));
            }
        }
    }
    Ok(None)
}

/// Split `[lo, hi]` into `2^j >= 2m - 1` equal parts; the even ones are the
/// `m` candidates. Returns the part width and the fattening.
fn subdivide(lo: &Dyadic, hi: &Dyadic, m: usize) -> (Dyadic, Dyadic) {
    let j = ceil_log2_usize(2 * m - 1);
    let w = (hi - lo).shl(-(j as i64));
    // a power of two no larger than w/4, so ramps over it have dyadic slopes
    let fat = Dyadic::pow2(w.ceil_log2().expect("nonempty interval") - 3);
    (w, fat)
}

/// Refine `[lo, hi]` to stage `s`. `Ok(None)` means no piece qualified within
/// `plan.max_effort` rounds of tightening.
pub fn refine_stage<B: PieceBound>(
    lo: &Dyadic,
    hi: &Dyadic,
    s: u32,
    norm_hi: &Dyadic,
    bound: &B,
    plan: SearchPlan,
) -> Result<Option<SearchStage>, B::Error> {
    let eps = Dyadic::pow2(-(s as i64));
    if plan.coarse_first {
        let (w, fat) = subdivide(lo, hi, 3);
        let tol = eps.shl(-2);
        if let Some((a, b, u, used)) = scan(lo, &w, 3, &fat, &tol, &eps, bound)? {
            return Ok(Some(SearchStage { s, lo: a, hi: b, eps, bound: u, fat, effort: used }));
        }
    }
    let m = pieces_for(norm_hi, s);
    let (w, fat) = subdivide(lo, hi, m);
    let share = Dyadic::div_ceil(norm_hi, &Dyadic::from(m as i64), s as i64 + 2 * ceil_log2_usize(2 * m - 1) as i64 + 8);
    let slack = &eps - &share;
    debug_assert!(slack.is_positive());
    for effort in 0..plan.max_effort {
        let tol = slack.shl(-1 - 2 * effort as i64);
        if let Some((a, b, u, used)) = scan(lo, &w, m, &fat, &tol, &eps, bound)? {
            return Ok(Some(SearchStage { s, lo: a, hi: b, eps, bound: u, fat, effort: used }));
        }
    }
    Ok(None)
}

trait MulSmall {
    fn mul_small(&self, i: usize) -> Dyadic;
}

impl MulSmall for Dyadic {
    fn mul_small(&self, i: usize) -> Dyadic {
        self * &Dyadic::from(i as i64)
    }
}
