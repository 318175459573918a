//! Finite Borel measures represented by their integrals of basic functions.
//!
//! A [`MeasureOracle`] answers `integrate(f, k)` with an interval of width at
//! most `2^-k` around `∫ f dμ`. Atomic measures evaluate at their atoms and
//! Lebesgue measure on [0, 1] integrates piecewise-linear trees exactly.
//! Everything else (Bernoulli measures, images under maps, products, kernel
//! joins) goes through one adaptive cell engine: the measure supplies a finite
//! partition into cells with exact masses and enclosing regions, the integrand
//! is ranged over each region, and the cells carrying the most width are split
//! until the weighted sum is tight enough.

mod cantor;
pub mod maps;
mod pl;

use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use thiserror::Error;

use crate::basis::{ball_lower_approx, eval_basic, BasicFunction, BasisEnumeration, BasisError};
use crate::coding;
use crate::exact::{ceil_log2_usize, try_sum_with_tail_bound, Dyadic, ExactError, Interval};
use crate::par;
use crate::spaces::{product_space, BasicPoint, CauchyName, Region, Space, SpaceError, MAX_SEQ_DEPTH};

pub use maps::{cantor_bit, Kernel, MapT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeasureError {
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid measure: {0}")]
    Invalid(String),
    #[error("representation error: {0}")]
    Modulus(String),
    #[error("could not reach precision 2^-{k}: {why}")]
    Precision { k: u32, why: String },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),
}

pub type TableFn = Arc<dyn Fn(&BasicFunction, u32) -> Result<Interval, MeasureError> + Send + Sync>;

enum Node {
    Zero,
    Atomic(Vec<(Dyadic, CauchyName)>),
    /// Bernoulli(p) on the bits after a fixed prefix `given`.
    Bernoulli { p: Dyadic, given: Vec<bool> },
    Lebesgue,
    Pushforward { base: MeasureOracle, map: MapT },
    Product(MeasureOracle, MeasureOracle),
    KernelJoin { base: MeasureOracle, kernel: Kernel },
    Mixture(Vec<(Dyadic, MeasureOracle)>),
    Table { norm_hint: Dyadic, table: TableFn },
}

#[derive(Clone)]
pub struct MeasureOracle {
    space: Space,
    node: Arc<Node>,
}

impl fmt::Debug for MeasureOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} on {:?}", self.describe(), self.space)
    }
}

#[derive(Clone, Debug)]
struct Cell {
    region: Region,
    mass: Dyadic,
    key: Key,
}

#[derive(Clone, Debug)]
enum Key {
    Atom { j: usize, m: usize },
    Cyl { bits: u64, len: usize },
    Seg,
    Pair(Box<Cell>, Box<Cell>),
    Part(usize, Box<Cell>),
    Push(Box<Cell>),
}

struct Leaf {
    cell: Cell,
    contrib: Interval,
    width: Dyadic,
    done: bool,
}

const CELL_CAP: usize = 1 << 22;
const MAX_NAME_DEPTH: usize = 1024;

type RangeFn<'a> = dyn Fn(&Region, u32) -> Result<Interval, MeasureError> + Sync + 'a;

fn check_weight(w: &Dyadic) -> Result<(), MeasureError> {
    if w.is_negative() {
        return Err(MeasureError::Invalid(format!("negative weight {w}")));
    }
    Ok(())
}

fn check_probability(p: &Dyadic) -> Result<(), MeasureError> {
    if p.is_negative() || p > &Dyadic::one() {
        return Err(MeasureError::Invalid(format!("Bernoulli parameter {p} outside [0, 1]")));
    }
    Ok(())
}

/// Extra precision needed when a sum of terms is weighted by total mass `w`.
fn mass_bits(w: &Dyadic) -> u32 {
    w.ceil_log2().unwrap_or(0).max(0) as u32
}

impl MeasureOracle {
    fn from_node(space: Space, node: Node) -> Self {
        MeasureOracle { space, node: Arc::new(node) }
    }

    pub fn zero(space: &Space) -> Self {
        Self::from_node(space.clone(), Node::Zero)
    }

    pub fn dirac(space: &Space, x: CauchyName) -> Self {
        Self::from_node(space.clone(), Node::Atomic(vec![(Dyadic::one(), x)]))
    }

    /// `sum_j w_j delta_{x_j}`.
    pub fn atomic(space: &Space, atoms: Vec<(Dyadic, CauchyName)>) -> Result<Self, MeasureError> {
        atoms.iter().try_for_each(|(w, _)| check_weight(w))?;
        Ok(Self::from_node(space.clone(), Node::Atomic(atoms)))
    }

    pub fn bernoulli(p: Dyadic) -> Result<Self, MeasureError> {
        Self::bernoulli_given(p, Vec::new())
    }

    /// The first bits are fixed to `given`, the rest are Bernoulli(`p`).
    pub fn bernoulli_given(p: Dyadic, given: Vec<bool>) -> Result<Self, MeasureError> {
        check_probability(&p)?;
        if given.len() > MAX_SEQ_DEPTH {
            return Err(MeasureError::Unsupported(format!("prefix longer than {MAX_SEQ_DEPTH} bits")));
        }
        Ok(Self::from_node(Space::Cantor, Node::Bernoulli { p, given }))
    }

    pub fn lebesgue_unit() -> Self {
        Self::from_node(Space::UnitInterval, Node::Lebesgue)
    }

    pub fn pushforward(mu: &MeasureOracle, map: &MapT) -> Result<Self, MeasureError> {
        if &mu.space != map.source() {
            return Err(MeasureError::SpaceMismatch(format!("{map:?} applied to a measure on {:?}", mu.space)));
        }
        let target = map.target().clone();
        Ok(match &*mu.node {
            Node::Zero => Self::zero(&target),
            Node::Atomic(atoms) => {
                let moved = atoms.iter().map(|(w, x)| (w.clone(), map.apply(x))).collect();
                Self::from_node(target, Node::Atomic(moved))
            }
            _ => Self::from_node(target, Node::Pushforward { base: mu.clone(), map: map.clone() }),
        })
    }

    pub fn product(mu: &MeasureOracle, nu: &MeasureOracle) -> Self {
        let space = product_space(vec![mu.space.clone(), nu.space.clone()]);
        Self::from_node(space, Node::Product(mu.clone(), nu.clone()))
    }

    pub fn kernel_join(mu: &MeasureOracle, kernel: &Kernel) -> Result<Self, MeasureError> {
        if &mu.space != kernel.source() {
            return Err(MeasureError::SpaceMismatch(format!("{kernel:?} joined to a measure on {:?}", mu.space)));
        }
        let space = product_space(vec![mu.space.clone(), kernel.target().clone()]);
        Ok(Self::from_node(space, Node::KernelJoin { base: mu.clone(), kernel: kernel.clone() }))
    }

    /// `sum_i w_i mu_i`; zero weights are dropped.
    pub fn mixture(weights: Vec<Dyadic>, parts: Vec<MeasureOracle>) -> Result<Self, MeasureError> {
        if weights.len() != parts.len() || parts.is_empty() {
            return Err(MeasureError::Invalid(format!("{} weights for {} parts", weights.len(), parts.len())));
        }
        let space = parts[0].space.clone();
        if let Some(p) = parts.iter().find(|p| p.space != space) {
            return Err(MeasureError::SpaceMismatch(format!("mixture of {:?} and {:?}", space, p.space)));
        }
        weights.iter().try_for_each(check_weight)?;
        let kept: Vec<_> = weights.into_iter().zip(parts).filter(|(w, _)| !w.is_zero()).collect();
        if kept.is_empty() {
            return Ok(Self::zero(&space));
        }
        Ok(Self::from_node(space, Node::Mixture(kept)))
    }

    /// A measure known only through an integration table. `norm_hint` must
    /// bound the total mass from above.
    pub fn from_table(
        space: &Space,
        norm_hint: Dyadic,
        table: impl Fn(&BasicFunction, u32) -> Result<Interval, MeasureError> + Send + Sync + 'static,
    ) -> Self {
        Self::from_node(space.clone(), Node::Table { norm_hint, table: Arc::new(table) })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    /// True when both handles share one representation.
    pub fn same_as(&self, o: &MeasureOracle) -> bool {
        Arc::ptr_eq(&self.node, &o.node) && self.space == o.space
    }

    pub fn describe(&self) -> String {
        match &*self.node {
            Node::Zero => "zero".into(),
            Node::Atomic(atoms) => {
                let parts: Vec<String> = atoms
                    .iter()
                    .map(|(w, x)| match (x.exact(), &self.space) {
                        (Some(p), Space::UnitInterval | Space::RealLine) => format!("{w}·δ({})", self.space.line_value(p)),
                        (Some(p), _) => format!("{w}·δ(#{p})"),
                        (None, _) => format!("{w}·δ(name)"),
                    })
                    .collect();
                format!("atomic[{}]", parts.join(", "))
            }
            Node::Bernoulli { p, given } if given.is_empty() => format!("bernoulli({p})"),
            Node::Bernoulli { p, given } => {
                let g: String = given.iter().map(|&b| if b { '1' } else { '0' }).collect();
                format!("bernoulli({p} | {g})")
            }
            Node::Lebesgue => "lebesgue".into(),
            Node::Pushforward { base, map } => format!("push({}, {})", base.describe(), map.label()),
            Node::Product(a, b) => format!("({} ⊗ {})", a.describe(), b.describe()),
            Node::KernelJoin { base, kernel } => format!("({} * {})", base.describe(), kernel.label()),
            Node::Mixture(parts) => {
                let ps: Vec<String> = parts.iter().map(|(w, m)| format!("{w}·{}", m.describe())).collect();
                format!("mix[{}]", ps.join(" + "))
            }
            Node::Table { .. } => "table".into(),
        }
    }

    /// Structural upper bound on the total mass.
    pub fn norm_bound(&self) -> Dyadic {
        match &*self.node {
            Node::Zero => Dyadic::zero(),
            Node::Atomic(atoms) => atoms.iter().map(|(w, _)| w.clone()).sum(),
            Node::Bernoulli { .. } | Node::Lebesgue => Dyadic::one(),
            Node::Pushforward { base, .. } | Node::KernelJoin { base, .. } => base.norm_bound(),
            Node::Product(a, b) => &a.norm_bound() * &b.norm_bound(),
            Node::Mixture(parts) => parts.iter().map(|(w, m)| w * &m.norm_bound()).sum(),
            Node::Table { norm_hint, .. } => norm_hint.clone(),
        }
    }

    pub fn norm(&self, k: u32) -> Result<Interval, MeasureError> {
        self.integrate(&BasicFunction::One, k)
    }

    /// `∫ f dμ` to within `2^-k`.
    pub fn integrate(&self, f: &BasicFunction, k: u32) -> Result<Interval, MeasureError> {
        f.check(&self.space)?;
        self.integrate_checked(f, k)
    }

    /// Integral of the `i`-th basic function of the space's enumeration.
    pub fn integrate_index(&self, i: &BigUint, k: u32) -> Result<Interval, MeasureError> {
        let f = BasisEnumeration::new(&self.space).decode(i)?;
        self.integrate(&f, k)
    }

    fn integrate_checked(&self, f: &BasicFunction, k: u32) -> Result<Interval, MeasureError> {
        match &*self.node {
            Node::Zero => Ok(Interval::zero()),
            Node::Atomic(atoms) => {
                let p = k + mass_bits(&self.norm_bound()) + 1;
                let vals = par::map_slice(atoms, |(w, x)| eval_basic(f, &self.space, x, p).scale(w));
                Ok(vals.into_iter().sum())
            }
            Node::Lebesgue => Ok(pl::lebesgue_integral(f, k)),
            Node::Bernoulli { p, given } => Ok(cantor::bernoulli_integral(p, given, f, k)),
            Node::Mixture(parts) => {
                let total: Dyadic = parts.iter().map(|(w, _)| w.clone()).sum();
                let p = k + mass_bits(&total) + ceil_log2_usize(parts.len()) + 1;
                let vals = par::map_slice(parts, |(w, m)| m.integrate_checked(f, p).map(|v| v.scale(w)));
                Ok(vals.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().sum())
            }
            Node::Table { table, .. } => table(f, k),
            Node::KernelJoin { base, kernel } => kernel_integral(&self.space, base, kernel, f, k, None),
            _ => {
                let space = &self.space;
                self.integrate_cells(&|r, q| Ok(f.range(space, r, f.rounding_precision(q))), k, None)
            }
        }
    }

    fn roots(&self) -> Result<Vec<Cell>, MeasureError> {
        Ok(match &*self.node {
            Node::Zero => Vec::new(),
            Node::Atomic(atoms) => atoms
                .iter()
                .enumerate()
                .map(|(j, (w, x))| Cell { region: x.region(0), mass: w.clone(), key: Key::Atom { j, m: 0 } })
                .collect(),
            Node::Bernoulli { given, .. } => {
                let bits = given.iter().enumerate().fold(0u64, |acc, (i, &b)| if b { acc | 1 << i } else { acc });
                let len = given.len();
                vec![Cell { region: maps::cylinder(bits, len), mass: Dyadic::one(), key: Key::Cyl { bits, len } }]
            }
            Node::Lebesgue => vec![Cell {
                region: Region::Segment { lo: Dyadic::zero(), hi: Dyadic::one() },
                mass: Dyadic::one(),
                key: Key::Seg,
            }],
            Node::Pushforward { base, map } => {
                base.roots()?.into_iter().map(|c| push_cell(map, c)).collect::<Result<_, _>>()?
            }
            Node::Product(a, b) => {
                let (ra, rb) = (a.roots()?, b.roots()?);
                let mut out = Vec::with_capacity(ra.len() * rb.len());
                for x in &ra {
                    for y in &rb {
                        out.push(pair_cell(x.clone(), y.clone()));
                    }
                }
                out
            }
            Node::Mixture(parts) => {
                let mut out = Vec::new();
                for (i, (w, m)) in parts.iter().enumerate() {
                    out.extend(m.roots()?.into_iter().map(|c| part_cell(i, w, c)));
                }
                out
            }
            Node::KernelJoin { .. } | Node::Table { .. } => {
                return Err(MeasureError::Unsupported(format!("{} has no cell partition", self.describe())));
            }
        })
    }

    /// Children of a cell, or `None` when it cannot be refined further.
    fn split(&self, cell: &Cell) -> Result<Option<Vec<Cell>>, MeasureError> {
        Ok(match (&*self.node, &cell.key) {
            (Node::Atomic(atoms), Key::Atom { j, m }) => {
                let x = &atoms[*j].1;
                if x.exact().is_some() || *m >= MAX_NAME_DEPTH {
                    return Ok(None);
                }
                let m = m + 4;
                Some(vec![Cell { region: x.region(m), mass: cell.mass.clone(), key: Key::Atom { j: *j, m } }])
            }
            (Node::Bernoulli { p, .. }, Key::Cyl { bits, len }) => {
                if *len >= MAX_SEQ_DEPTH {
                    return Ok(None);
                }
                let q = &Dyadic::one() - p;
                let (bits, len) = (*bits, *len);
                Some(vec![
                    Cell { region: maps::cylinder(bits, len + 1), mass: &cell.mass * &q, key: Key::Cyl { bits, len: len + 1 } },
                    Cell {
                        region: maps::cylinder(bits | 1 << len, len + 1),
                        mass: &cell.mass * p,
                        key: Key::Cyl { bits: bits | 1 << len, len: len + 1 },
                    },
                ])
            }
            (Node::Lebesgue, Key::Seg) => {
                let Region::Segment { lo, hi } = &cell.region else { unreachable!() };
                let mid = (lo + hi).shl(-1);
                if mid.exponent() < -60 {
                    return Ok(None);
                }
                let half = cell.mass.shl(-1);
                Some(vec![
                    Cell { region: Region::Segment { lo: lo.clone(), hi: mid.clone() }, mass: half.clone(), key: Key::Seg },
                    Cell { region: Region::Segment { lo: mid, hi: hi.clone() }, mass: half, key: Key::Seg },
                ])
            }
            (Node::Pushforward { base, map }, Key::Push(inner)) => match base.split(inner)? {
                None => None,
                Some(cs) => Some(cs.into_iter().map(|c| push_cell(map, c)).collect::<Result<_, _>>()?),
            },
            (Node::Product(a, b), Key::Pair(x, y)) => {
                let first_left = x.region.radius() >= y.region.radius();
                let try_left = |m: &MeasureOracle| -> Result<Option<Vec<Cell>>, MeasureError> {
                    Ok(m.split(x)?.map(|cs| cs.into_iter().map(|c| pair_cell(c, (**y).clone())).collect()))
                };
                let try_right = |m: &MeasureOracle| -> Result<Option<Vec<Cell>>, MeasureError> {
                    Ok(m.split(y)?.map(|cs| cs.into_iter().map(|c| pair_cell((**x).clone(), c)).collect()))
                };
                if first_left {
                    match try_left(a)? {
                        Some(cs) => Some(cs),
                        None => try_right(b)?,
                    }
                } else {
                    match try_right(b)? {
                        Some(cs) => Some(cs),
                        None => try_left(a)?,
                    }
                }
            }
            (Node::Mixture(parts), Key::Part(i, inner)) => {
                let (w, m) = &parts[*i];
                m.split(inner)?.map(|cs| cs.into_iter().map(|c| part_cell(*i, w, c)).collect())
            }
            _ => unreachable!("cell key does not belong to {}", self.describe()),
        })
    }

    /// `∫ g` over the cell partition, where `g(region, q)` encloses the
    /// integrand over `region` with rounding below `2^-q`.
    ///
    /// With `floor`, cells of radius at most `floor` are not split and the
    /// result may be wider than `2^-k`.
    fn integrate_cells(&self, g: &RangeFn<'_>, k: u32, floor: Option<&Dyadic>) -> Result<Interval, MeasureError> {
        let roots = self.roots()?;
        if roots.is_empty() {
            return Ok(Interval::zero());
        }
        let q = k + 3 + mass_bits(&self.norm_bound());
        let target = Dyadic::pow2(-(k as i64) - 1);
        let eval = |cell: &Cell| -> Result<Leaf, MeasureError> {
            if cell.mass.is_zero() {
                return Ok(Leaf { cell: cell.clone(), contrib: Interval::zero(), width: Dyadic::zero(), done: true });
            }
            let contrib = g(&cell.region, q)?.scale(&cell.mass);
            let width = contrib.width();
            let done = width.is_zero() || floor.is_some_and(|f| &cell.region.radius() <= f);
            Ok(Leaf { cell: cell.clone(), contrib, width, done })
        };
        let mut leaves: Vec<Leaf> = par::map_slice(&roots, eval).into_iter().collect::<Result<_, _>>()?;
        let mut visited = leaves.len();
        loop {
            let total: Dyadic = leaves.iter().map(|l| l.width.clone()).sum();
            if total <= target {
                break;
            }
            let open: Vec<usize> = (0..leaves.len()).filter(|&i| !leaves[i].done).collect();
            if open.is_empty() {
                break;
            }
            // split every open leaf carrying at least half the average open width
            let open_total: Dyadic = open.iter().map(|&i| leaves[i].width.clone()).sum();
            let n2 = Dyadic::from_i64(2 * open.len() as i64);
            let chosen: Vec<usize> = open.into_iter().filter(|&i| &leaves[i].width * &n2 >= open_total).collect();
            let splits = par::map_slice(&chosen, |&i| self.split(&leaves[i].cell));
            let mut fresh: Vec<Cell> = Vec::new();
            let mut replaced = vec![false; leaves.len()];
            for (&i, s) in chosen.iter().zip(splits) {
                match s? {
                    None => leaves[i].done = true,
                    Some(children) => {
                        replaced[i] = true;
                        fresh.extend(children);
                    }
                }
            }
            visited += fresh.len();
            if visited > CELL_CAP {
                return Err(MeasureError::Precision { k, why: format!("cell budget exhausted for {}", self.describe()) });
            }
            let new_leaves = par::map_slice(&fresh, eval).into_iter().collect::<Result<Vec<_>, _>>()?;
            let mut idx = 0;
            leaves.retain(|_| {
                idx += 1;
                !replaced[idx - 1]
            });
            leaves.extend(new_leaves);
        }
        let out = leaves.iter().map(|l| l.contrib.clone()).sum::<Interval>().round_out(k as i64 + 3);
        if floor.is_none() && !out.within(k) {
            return Err(MeasureError::Precision { k, why: format!("{} leaves width {}", self.describe(), out.width()) });
        }
        Ok(out)
    }

    /// Exact mass of the cylinder `[prefix]` when the measure lives on Cantor
    /// space and its cylinder masses are known in closed form.
    pub fn cylinder_mass(&self, prefix: &[bool]) -> Option<Dyadic> {
        if self.space != Space::Cantor {
            return None;
        }
        match &*self.node {
            Node::Zero => Some(Dyadic::zero()),
            Node::Bernoulli { p, given } => {
                let q = &Dyadic::one() - p;
                let mut m = Dyadic::one();
                for (i, &b) in prefix.iter().enumerate() {
                    match given.get(i) {
                        Some(&g) if g != b => return Some(Dyadic::zero()),
                        Some(_) => {}
                        None => m = &m * if b { p } else { &q },
                    }
                }
                Some(m)
            }
            Node::Atomic(atoms) => {
                let mut total = Dyadic::zero();
                for (w, x) in atoms {
                    let n = x.exact()?.idx();
                    let hit = prefix.iter().enumerate().all(|(i, &b)| (i < 64 && n >> i & 1 == 1) == b);
                    if hit {
                        total = &total + w;
                    }
                }
                Some(total)
            }
            Node::Mixture(parts) => {
                parts.iter().try_fold(Dyadic::zero(), |acc, (w, m)| Some(&acc + &(w * &m.cylinder_mass(prefix)?)))
            }
            _ => None,
        }
    }

    /// Upper bound on `Σ_{n >= from} μ[0^n]`, the tail of the zero-run
    /// series, for Cantor measures with closed-form cylinder masses. `None`
    /// when the series diverges or no bound is known.
    pub fn zero_run_tail(&self, from: usize) -> Option<Dyadic> {
        if self.space != Space::Cantor {
            return None;
        }
        let count = |last: usize| Dyadic::from((last + 1).saturating_sub(from) as i64);
        match &*self.node {
            Node::Zero => Some(Dyadic::zero()),
            Node::Bernoulli { p, given } => {
                if let Some(j) = given.iter().position(|&b| b) {
                    return Some(count(j));
                }
                if p.is_zero() {
                    return None;
                }
                let l = given.len();
                let q = &Dyadic::one() - p;
                let e = from.saturating_sub(l).max(1);
                let qe = (0..e).fold(Dyadic::one(), |acc, _| &acc * &q);
                Some(&count(l) + &Dyadic::div_ceil(&qe, p, from as i64 + 64))
            }
            Node::Atomic(atoms) => atoms.iter().try_fold(Dyadic::zero(), |acc, (w, x)| {
                let n = x.exact()?.idx();
                if n == 0 {
                    return None;
                }
                Some(&acc + &(w * &count(n.trailing_zeros() as usize)))
            }),
            Node::Mixture(parts) => {
                parts.iter().try_fold(Dyadic::zero(), |acc, (w, m)| Some(&acc + &(w * &m.zero_run_tail(from)?)))
            }
            _ => None,
        }
    }
}

fn push_cell(map: &MapT, c: Cell) -> Result<Cell, MeasureError> {
    Ok(Cell { region: map.image(&c.region)?, mass: c.mass.clone(), key: Key::Push(Box::new(c)) })
}

fn pair_cell(x: Cell, y: Cell) -> Cell {
    Cell {
        region: Region::Prod(vec![x.region.clone(), y.region.clone()]),
        mass: &x.mass * &y.mass,
        key: Key::Pair(Box::new(x), Box::new(y)),
    }
}

fn part_cell(i: usize, w: &Dyadic, c: Cell) -> Cell {
    Cell { region: c.region.clone(), mass: w * &c.mass, key: Key::Part(i, Box::new(c)) }
}

/// `∫_X ∫_Y f(x, y) κ(dy | x) μ(dx)`.
///
/// Over a cell `C` of `μ` the inner integral is taken against the fiber at a
/// representative point, with `f` ranged over `C × D` for the fiber's cells
/// `D`, and widened by `Lip(f) · modulus(diam C)` for the fiber's movement
/// inside `C`.
fn kernel_integral(
    joint: &Space,
    base: &MeasureOracle,
    kernel: &Kernel,
    f: &BasicFunction,
    k: u32,
    floor: Option<&Dyadic>,
) -> Result<Interval, MeasureError> {
    let lip = f.lipschitz();
    let ultra = base.space.is_ultrametric();
    let outer = |rc: &Region, q: u32| -> Result<Interval, MeasureError> {
        let fiber = kernel.fiber(&base.space.representative(rc));
        let rho = rc.radius();
        let inner_floor = rho.shl(-4);
        let inner = |rd: &Region, q2: u32| {
            Ok(f.range(joint, &Region::Prod(vec![rc.clone(), rd.clone()]), f.rounding_precision(q2)))
        };
        let v = fiber.integrate_cells(&inner, q, Some(&inner_floor))?;
        let diam = if ultra { rho } else { rho.shl(1) };
        Ok(v.widen(&(&lip * &kernel.modulus(&diam))))
    };
    base.integrate_cells(&outer, k, floor)
}

/// The atomic measure coded by `n`: `seq(n)` lists entries `unpair(e) =
/// (w, c)` giving weight `pos_dyadic(w)` at the basic point decoded from `c`
/// (reduced modulo the point count for finite spaces, point 0 when the code
/// does not decode).
pub fn atomic_from_code(base: &Space, n: u64) -> MeasureOracle {
    let atoms = coding::seq(&BigUint::from(n))
        .iter()
        .map(|e| {
            let (wc, pc) = coding::unpair(e);
            let pc = match base.basic_count() {
                Some(c) if c > 0 => pc % BigUint::from(c),
                _ => pc,
            };
            let p = base.decode_point(&pc).unwrap_or_else(|_| base.decode_point(&BigUint::from(0u32)).expect("point 0"));
            (coding::pos_dyadic(&wc), CauchyName::basic(p))
        })
        .collect();
    MeasureOracle::from_node(base.clone(), Node::Atomic(atoms))
}

/// `d(μ, ν) = sum_i 2^-(i+1) (1 - exp(-|∫f_i dμ - ∫f_i dν|))` over the basis
/// enumeration, to within `2^-k`. Codes that do not decode to a basic
/// function of the space contribute zero.
pub fn measure_metric(mu: &MeasureOracle, nu: &MeasureOracle, k: u32) -> Result<Interval, MeasureError> {
    if mu.space != nu.space {
        return Err(MeasureError::SpaceMismatch(format!("{:?} vs {:?}", mu.space, nu.space)));
    }
    let en = BasisEnumeration::new(&mu.space);
    try_sum_with_tail_bound(
        |i, p| {
            let f = match en.nth(i as u64) {
                Ok(f) if f.check(&mu.space).is_ok() => f,
                _ => return Ok(Interval::zero()),
            };
            let a = mu.integrate_checked(&f, p + 2)?;
            let b = nu.integrate_checked(&f, p + 2)?;
            let t = &Interval::one() - &(&a - &b).abs().exp_neg(p + 2);
            Ok(t.clamp(&Dyadic::zero(), &Dyadic::one()).scale(&Dyadic::pow2(-(i as i64) - 1)))
        },
        |n| Dyadic::pow2(-(n as i64)),
        k,
        k as usize + 8,
    )
    .map(|d| d.clamp(&Dyadic::zero(), &Dyadic::one()))
}

/// An effectively open set: the union of the enumerated open balls. `None`
/// entries are skipped, which lets finite lists and sparse enumerations share
/// one type.
#[derive(Clone)]
pub struct OpenSet {
    balls: Arc<dyn Fn(usize) -> Option<(BasicPoint, Dyadic)> + Send + Sync>,
}

impl fmt::Debug for OpenSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head: Vec<_> = (0..4).filter_map(|i| self.ball(i)).collect();
        write!(f, "OpenSet{head:?}..")
    }
}

impl OpenSet {
    pub fn from_fn(f: impl Fn(usize) -> Option<(BasicPoint, Dyadic)> + Send + Sync + 'static) -> Self {
        OpenSet { balls: Arc::new(f) }
    }

    pub fn empty() -> Self {
        OpenSet::from_fn(|_| None)
    }

    pub fn from_balls(balls: Vec<(BasicPoint, Dyadic)>) -> Self {
        OpenSet::from_fn(move |i| balls.get(i).cloned())
    }

    pub fn ball(&self, i: usize) -> Option<(BasicPoint, Dyadic)> {
        (self.balls)(i)
    }

    /// Max of the stage-`n` lower approximations of the first `n` balls;
    /// `None` while all of them vanish.
    pub fn stage_function(&self, n: usize) -> Option<BasicFunction> {
        let parts: Vec<BasicFunction> = (0..n)
            .filter_map(|i| self.ball(i))
            .map(|(c, r)| ball_lower_approx(c, &r, n as u32))
            .filter(|f| f != &BasicFunction::zero())
            .collect();
        BasicFunction::max(parts).ok()
    }
}

fn open_stage_lower(mu: &MeasureOracle, u: &OpenSet, m: usize) -> Result<Dyadic, MeasureError> {
    match u.stage_function(m) {
        None => Ok(Dyadic::zero()),
        Some(f) => Ok(Dyadic::max(&mu.integrate(&f, m as u32 + 6)?.lo, &Dyadic::zero())),
    }
}

/// Lower bound on `μ(U)` after `n` stages; nondecreasing in `n` with
/// supremum `μ(U)`.
pub fn measure_open_lower(mu: &MeasureOracle, u: &OpenSet, n: usize) -> Result<Dyadic, MeasureError> {
    let stages = par::map_range(n + 1, |m| open_stage_lower(mu, u, m));
    stages.into_iter().try_fold(Dyadic::zero(), |best, s| Ok(Dyadic::max(&best, &s?)))
}

/// Upper bound on `μ(X \ U)` after `n` stages; nonincreasing in `n` with
/// infimum `μ(X \ U)`.
pub fn measure_closed_upper(mu: &MeasureOracle, u: &OpenSet, n: usize) -> Result<Dyadic, MeasureError> {
    let stages = par::map_range(n + 1, |m| -> Result<Dyadic, MeasureError> {
        Ok(&mu.norm(m as u32 + 6)?.hi - &open_stage_lower(mu, u, m)?)
    });
    let mut best: Option<Dyadic> = None;
    for s in stages {
        let s = s?;
        best = Some(match best {
            Some(b) => Dyadic::min(&b, &s),
            None => s,
        });
    }
    Ok(best.expect("at least one stage"))
}
