//! Continuous maps and probability kernels.
//!
//! A [`MapT`] carries three views of the same function: an enclosure map on
//! regions (used when pushing cells forward), a modulus of continuity (used to
//! check those enclosures), and a transformer on Cauchy names. A [`Kernel`]
//! maps basic points to probability measures and carries a modulus bounding
//! how far fibers over points at distance `rho` can move in the transport
//! distance.

use std::fmt;
use std::sync::Arc;

use crate::exact::Dyadic;
use crate::spaces::{product_space, BasicPoint, CauchyName, Region, Space, MAX_SEQ_DEPTH};

use super::{MeasureError, MeasureOracle};

type ImageFn = Arc<dyn Fn(&Region) -> Region + Send + Sync>;
type ModulusFn = Arc<dyn Fn(&Dyadic) -> Dyadic + Send + Sync>;
type ApplyFn = Arc<dyn Fn(&CauchyName) -> CauchyName + Send + Sync>;
type FiberFn = Arc<dyn Fn(&BasicPoint) -> MeasureOracle + Send + Sync>;

#[derive(Clone)]
pub struct MapT {
    label: String,
    source: Space,
    target: Space,
    image: ImageFn,
    modulus: ModulusFn,
    apply: ApplyFn,
}

impl fmt::Debug for MapT {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MapT({}: {:?} -> {:?})", self.label, self.source, self.target)
    }
}

fn mask(len: usize) -> u64 {
    if len >= 64 { u64::MAX } else { (1u64 << len) - 1 }
}

/// Leading bits shared by all points of a Cantor ball of radius `rho`.
pub(crate) fn fixed_bits(rho: &Dyadic) -> usize {
    if rho.is_zero() {
        return MAX_SEQ_DEPTH;
    }
    if rho >= &Dyadic::one() {
        return 0;
    }
    let c = rho.ceil_log2().unwrap();
    let floor = if rho.mantissa() == &num_bigint::BigInt::from(1) { c } else { c - 1 };
    ((-floor) as usize).min(MAX_SEQ_DEPTH)
}

pub(crate) fn cylinder(bits: u64, len: usize) -> Region {
    Region::Ball { center: BasicPoint::Idx(bits & mask(len)), radius: Dyadic::pow2(-(len as i64)) }
}

/// `(prefix bits, length)` of a Cantor ball; `None` for a single basic point.
fn cantor_ball(region: &Region) -> Option<(u64, usize)> {
    match region {
        Region::Ball { radius, .. } if radius.is_zero() => None,
        Region::Ball { center, radius } => {
            let l = fixed_bits(radius);
            Some((center.idx() & mask(l), l))
        }
        _ => panic!("Cantor region expected, got {region:?}"),
    }
}

/// Bit `i` of the Cantor point named by `x`.
pub fn cantor_bit(x: &CauchyName, i: usize) -> bool {
    if i >= 64 {
        return false;
    }
    match x.exact() {
        Some(p) => p.idx() >> i & 1 == 1,
        None => x.at(i + 1).idx() >> i & 1 == 1,
    }
}

/// `sum_{j < len} b_j 2^-(j+1)` for the bits of `bits`.
fn binary_value(bits: u64, len: usize) -> Dyadic {
    let mut m: u128 = 0;
    for j in 0..len {
        if bits >> j & 1 == 1 {
            m |= 1u128 << (len - 1 - j);
        }
    }
    Dyadic::new(m, -(len as i64))
}

const UNIT_BITS: usize = 60;

impl MapT {
    pub fn new(
        label: impl Into<String>,
        source: Space,
        target: Space,
        image: impl Fn(&Region) -> Region + Send + Sync + 'static,
        modulus: impl Fn(&Dyadic) -> Dyadic + Send + Sync + 'static,
        apply: impl Fn(&CauchyName) -> CauchyName + Send + Sync + 'static,
    ) -> Self {
        MapT {
            label: label.into(),
            source,
            target,
            image: Arc::new(image),
            modulus: Arc::new(modulus),
            apply: Arc::new(apply),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn source(&self) -> &Space {
        &self.source
    }

    pub fn target(&self) -> &Space {
        &self.target
    }

    /// Enclosure of the image of `region`, rejected when it is wider than
    /// the declared modulus allows. Points are resolved to `MAX_SEQ_DEPTH`
    /// bits, so radii below `2^-MAX_SEQ_DEPTH` always pass.
    pub fn image(&self, region: &Region) -> Result<Region, MeasureError> {
        let out = (self.image)(region);
        let rho = region.radius();
        let allowed = Dyadic::max(&(self.modulus)(&rho), &Dyadic::pow2(-(MAX_SEQ_DEPTH as i64)));
        if out.radius() > allowed {
            return Err(MeasureError::Modulus(format!(
                "{} sends a region of radius {rho} to radius {}, modulus allows {allowed}",
                self.label,
                out.radius()
            )));
        }
        Ok(out)
    }

    pub fn modulus(&self, rho: &Dyadic) -> Dyadic {
        (self.modulus)(rho)
    }

    pub fn apply(&self, x: &CauchyName) -> CauchyName {
        (self.apply)(x)
    }

    pub fn identity(space: &Space) -> Self {
        MapT::new("identity", space.clone(), space.clone(), Region::clone, Dyadic::clone, CauchyName::clone)
    }

    /// Projection of a product onto factor `i`.
    pub fn projection(space: &Space, i: usize) -> Self {
        let target = space.factors()[i].clone();
        let s = space.clone();
        MapT::new(
            format!("projection({i})"),
            space.clone(),
            target,
            move |r| s.factor_regions(r)[i].clone(),
            Dyadic::clone,
            move |x| x.project(i),
        )
    }

    /// `x -> (x, x)`.
    pub fn diagonal(space: &Space) -> Self {
        MapT::new(
            "diagonal",
            space.clone(),
            product_space(vec![space.clone(), space.clone()]),
            |r| Region::Prod(vec![r.clone(), r.clone()]),
            Dyadic::clone,
            |x| CauchyName::product(vec![x.clone(), x.clone()]),
        )
    }

    /// Cantor space to itself, overwriting the first bit with `bit`.
    pub fn cantor_force_first(bit: bool) -> Self {
        let b = bit as u64;
        MapT::new(
            format!("force_first({})", b),
            Space::Cantor,
            Space::Cantor,
            move |r| match cantor_ball(r) {
                None => Region::point(BasicPoint::Idx(r_center(r) & !1 | b)),
                Some((bits, l)) => cylinder(bits & !1 | b, l.max(1)),
            },
            Dyadic::clone,
            move |x| match x.exact() {
                Some(p) => CauchyName::idx(p.idx() & !1 | b),
                None => {
                    let x = x.clone();
                    CauchyName::cantor(move |i| if i == 0 { bit } else { cantor_bit(&x, i) })
                }
            },
        )
    }

    /// The left shift `b0 b1 b2 ... -> b1 b2 ...`.
    pub fn cantor_shift() -> Self {
        MapT::new(
            "shift",
            Space::Cantor,
            Space::Cantor,
            |r| match cantor_ball(r) {
                None => Region::point(BasicPoint::Idx(r_center(r) >> 1)),
                Some((bits, l)) => cylinder(bits >> 1, l.saturating_sub(1)),
            },
            |rho| Dyadic::min(&rho.shl(1), &Dyadic::one()),
            |x| match x.exact() {
                Some(p) => CauchyName::idx(p.idx() >> 1),
                None => {
                    let x = x.clone();
                    CauchyName::cantor(move |i| cantor_bit(&x, i + 1))
                }
            },
        )
    }

    /// Complement every bit; an isometry.
    pub fn cantor_flip() -> Self {
        MapT::new(
            "flip",
            Space::Cantor,
            Space::Cantor,
            |r| {
                let (bits, l) = cantor_ball(r).unwrap_or((r_center(r), MAX_SEQ_DEPTH));
                cylinder(!bits, l)
            },
            Dyadic::clone,
            |x| {
                let x = x.clone();
                CauchyName::cantor(move |i| !cantor_bit(&x, i))
            },
        )
    }

    /// Binary expansion `x -> sum_i x_i 2^-(i+1)` into the unit interval.
    pub fn cantor_to_unit() -> Self {
        MapT::new(
            "to_unit",
            Space::Cantor,
            Space::UnitInterval,
            |r| {
                let (bits, l) = match cantor_ball(r) {
                    None if r_center(r) < 1 << UNIT_BITS => {
                        let v = binary_value(r_center(r), UNIT_BITS);
                        return Region::Segment { lo: v.clone(), hi: v };
                    }
                    None => (r_center(r), UNIT_BITS),
                    Some((bits, l)) => (bits, l.min(UNIT_BITS)),
                };
                let lo = binary_value(bits, l);
                let hi = &lo + &Dyadic::pow2(-(l as i64));
                Region::Segment { lo, hi }
            },
            Dyadic::clone,
            |x| match x.exact() {
                Some(p) if p.idx() < 1 << UNIT_BITS => CauchyName::unit_dyadic(&binary_value(p.idx(), UNIT_BITS)),
                _ => {
                    let x = x.clone();
                    CauchyName::from_fn(move |i| {
                        let l = (i + 1).min(UNIT_BITS);
                        let bits = (0..l).fold(0u64, |acc, j| if cantor_bit(&x, j) { acc | 1 << j } else { acc });
                        BasicPoint::Idx(crate::spaces::unit_index(&binary_value(bits, l)))
                    })
                }
            },
        )
    }
}

fn r_center(r: &Region) -> u64 {
    match r {
        Region::Ball { center, .. } => center.idx(),
        _ => panic!("Cantor region expected"),
    }
}

/// A map from points of `source` to probability measures on `target`.
#[derive(Clone)]
pub struct Kernel {
    label: String,
    source: Space,
    target: Space,
    fiber: FiberFn,
    modulus: ModulusFn,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Kernel({}: {:?} -> M1({:?}))", self.label, self.source, self.target)
    }
}

impl Kernel {
    /// `modulus(rho)` must bound the transport distance between fibers over
    /// any two points at distance at most `rho`.
    pub fn new(
        label: impl Into<String>,
        source: Space,
        target: Space,
        fiber: impl Fn(&BasicPoint) -> MeasureOracle + Send + Sync + 'static,
        modulus: impl Fn(&Dyadic) -> Dyadic + Send + Sync + 'static,
    ) -> Self {
        Kernel { label: label.into(), source, target, fiber: Arc::new(fiber), modulus: Arc::new(modulus) }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn source(&self) -> &Space {
        &self.source
    }

    pub fn target(&self) -> &Space {
        &self.target
    }

    pub fn fiber(&self, x: &BasicPoint) -> MeasureOracle {
        (self.fiber)(x)
    }

    /// Fiber over a named point, read from the name at depth `m`; off by at
    /// most `modulus(2^-m)`.
    pub fn fiber_at(&self, x: &CauchyName, m: usize) -> MeasureOracle {
        match x.exact() {
            Some(p) => self.fiber(p),
            None => self.fiber(&x.at(m)),
        }
    }

    pub fn modulus(&self, rho: &Dyadic) -> Dyadic {
        (self.modulus)(rho)
    }

    /// `x -> nu` for every `x`.
    pub fn constant(source: &Space, nu: MeasureOracle) -> Result<Self, MeasureError> {
        let norm = nu.norm(20)?;
        if !norm.contains(&Dyadic::one()) {
            return Err(MeasureError::Invalid(format!("kernel fibers must be probability measures, norm is {norm:?}")));
        }
        let target = nu.space().clone();
        Ok(Kernel::new("constant", source.clone(), target, move |_| nu.clone(), |_| Dyadic::zero()))
    }

    /// `x -> delta_x`.
    pub fn diagonal(space: &Space) -> Self {
        let s = space.clone();
        Kernel::new(
            "diagonal",
            space.clone(),
            space.clone(),
            move |x| MeasureOracle::dirac(&s, CauchyName::basic(x.clone())),
            Dyadic::clone,
        )
    }

    /// Bernoulli(`p0`) over points starting with 0, Bernoulli(`p1`) otherwise.
    pub fn cantor_first_bit(p0: Dyadic, p1: Dyadic) -> Result<Self, MeasureError> {
        let b0 = MeasureOracle::bernoulli(p0)?;
        let b1 = MeasureOracle::bernoulli(p1)?;
        Ok(Kernel::new(
            "first_bit",
            Space::Cantor,
            Space::Cantor,
            move |x| if x.idx() & 1 == 1 { b1.clone() } else { b0.clone() },
            |rho| if rho < &Dyadic::one() { Dyadic::zero() } else { Dyadic::one() },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{validate_name_prefix, NameVerdict};

    #[test]
    fn fixed_bits_of_radii() {
        assert_eq!(fixed_bits(&Dyadic::one()), 0);
        assert_eq!(fixed_bits(&Dyadic::frac(1, 2)), 2);
        assert_eq!(fixed_bits(&Dyadic::frac(3, 3)), 2);
        assert_eq!(fixed_bits(&Dyadic::zero()), MAX_SEQ_DEPTH);
    }

    #[test]
    fn images_of_cylinders() {
        // [10] shifted is [0]; flipped is [01]; forced to 0 is [00]
        let c = cylinder(0b01, 2);
        assert_eq!(MapT::cantor_shift().image(&c).unwrap(), cylinder(0, 1));
        assert_eq!(MapT::cantor_flip().image(&c).unwrap(), cylinder(0b10, 2));
        assert_eq!(MapT::cantor_force_first(false).image(&c).unwrap(), cylinder(0, 2));
        assert_eq!(
            MapT::cantor_to_unit().image(&c).unwrap(),
            Region::Segment { lo: Dyadic::frac(1, 1), hi: Dyadic::frac(3, 2) }
        );
    }

    #[test]
    fn modulus_violation_is_reported() {
        let bad = MapT::new("bad", Space::Cantor, Space::Cantor, |_| cylinder(0, 0), Dyadic::clone, CauchyName::clone);
        assert!(matches!(bad.image(&cylinder(0, 3)), Err(MeasureError::Modulus(_))));
    }

    #[test]
    fn mapped_names_stay_cauchy() {
        let x = CauchyName::cantor(|i| i % 3 == 0);
        for m in [MapT::cantor_flip(), MapT::cantor_shift(), MapT::cantor_force_first(true)] {
            assert_eq!(validate_name_prefix(&Space::Cantor, &m.apply(&x), 20), NameVerdict::Consistent, "{m:?}");
        }
        let u = MapT::cantor_to_unit().apply(&x);
        assert_eq!(validate_name_prefix(&Space::UnitInterval, &u, 20), NameVerdict::Consistent);
    }
}
