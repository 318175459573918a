use serde::Deserialize;
use unimeas::exact::{Dyadic, RealStream};
use unimeas::measures::{MapT, MeasureOracle};
use unimeas::spaces::{BasicPoint, CauchyName, Space};

/// A point of a space. Lines accept dyadics and rationals, Cantor space a bit
/// prefix followed by a constant tail, every space a raw basic-point index.
#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PointDesc {
    Index(u64),
    Dyadic(Dyadic),
    Rational(i64, i64),
    Cantor {
        prefix: String,
        #[serde(default)]
        tail: u8,
    },
    Tuple(Vec<PointDesc>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomDesc {
    pub weight: Dyadic,
    pub point: PointDesc,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureDesc {
    Lebesgue,
    Bernoulli {
        p: Dyadic,
        #[serde(default)]
        given: String,
    },
    Dirac {
        space: Space,
        point: PointDesc,
    },
    Atomic {
        space: Space,
        atoms: Vec<AtomDesc>,
    },
    Mixture {
        weights: Vec<Dyadic>,
        parts: Vec<MeasureDesc>,
    },
    Product {
        factors: Vec<MeasureDesc>,
    },
    Pushforward {
        base: Box<MeasureDesc>,
        map: String,
    },
    Zero {
        space: Space,
    },
}

fn bits(s: &str) -> Result<Vec<bool>, String> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(format!("bad bit {c:?} in {s:?}")),
        })
        .collect()
}

fn cantor_index(prefix: &[bool]) -> Result<u64, String> {
    if prefix.len() > 62 {
        return Err("Cantor prefixes are limited to 62 bits".into());
    }
    Ok(prefix.iter().enumerate().map(|(i, &b)| (b as u64) << i).sum())
}

fn is_line(space: &Space) -> bool {
    matches!(space, Space::UnitInterval | Space::RealLine)
}

impl PointDesc {
    pub fn basic(&self, space: &Space) -> Result<BasicPoint, String> {
        let p = match (self, space) {
            (PointDesc::Index(n), _) => BasicPoint::Idx(*n),
            (PointDesc::Dyadic(d), s) if is_line(s) => {
                if matches!(s, Space::UnitInterval) && (d.is_negative() || d > &Dyadic::one()) {
                    return Err(format!("{d} is outside [0, 1]"));
                }
                s.line_point(d)
            }
            (PointDesc::Cantor { prefix, tail: 0 }, Space::Cantor) => BasicPoint::Idx(cantor_index(&bits(prefix)?)?),
            (PointDesc::Tuple(ps), Space::Product { factors }) if ps.len() == factors.len() => {
                BasicPoint::Tuple(ps.iter().zip(factors).map(|(p, f)| p.basic(f)).collect::<Result<_, _>>()?)
            }
            _ => return Err(format!("{self:?} is not a basic point of {space:?}")),
        };
        space.check_point(&p).map_err(|e| e.to_string())?;
        Ok(p)
    }

    pub fn name(&self, space: &Space) -> Result<CauchyName, String> {
        match (self, space) {
            (PointDesc::Rational(a, b), s) if is_line(s) => {
                if *b <= 0 {
                    return Err(format!("rational {a}/{b} needs a positive denominator"));
                }
                let x = RealStream::rational(*a, *b);
                if matches!(s, Space::UnitInterval) {
                    if *a < 0 || a > b {
                        return Err(format!("{a}/{b} is outside [0, 1]"));
                    }
                    Ok(CauchyName::unit_real(x))
                } else {
                    Ok(CauchyName::real(x))
                }
            }
            (PointDesc::Cantor { prefix, tail }, Space::Cantor) if *tail <= 1 => Ok(CauchyName::cantor_eventually(bits(prefix)?, *tail == 1)),
            (PointDesc::Tuple(ps), Space::Product { factors }) if ps.len() == factors.len() => {
                Ok(CauchyName::product(ps.iter().zip(factors).map(|(p, f)| p.name(f)).collect::<Result<_, _>>()?))
            }
            _ => Ok(CauchyName::basic(self.basic(space)?)),
        }
    }
}

fn map_named(name: &str, space: &Space) -> Result<MapT, String> {
    Ok(match name {
        "identity" => MapT::identity(space),
        "diagonal" => MapT::diagonal(space),
        "cantor_shift" => MapT::cantor_shift(),
        "cantor_flip" => MapT::cantor_flip(),
        "cantor_to_unit" => MapT::cantor_to_unit(),
        "force_zero" => MapT::cantor_force_first(false),
        "force_one" => MapT::cantor_force_first(true),
        _ => {
            if let Some(i) = name.strip_prefix("projection_") {
                let i: usize = i.parse().map_err(|_| format!("bad projection {name}"))?;
                if !matches!(space, Space::Product { factors } if i < factors.len()) {
                    return Err(format!("{name} does not apply to {space:?}"));
                }
                return Ok(MapT::projection(space, i));
            }
            return Err(format!("unknown map {name}"));
        }
    })
}

impl MeasureDesc {
    pub fn build(&self) -> Result<MeasureOracle, String> {
        let err = |e: unimeas::measures::MeasureError| e.to_string();
        match self {
            MeasureDesc::Lebesgue => Ok(MeasureOracle::lebesgue_unit()),
            MeasureDesc::Bernoulli { p, given } => MeasureOracle::bernoulli_given(p.clone(), bits(given)?).map_err(err),
            MeasureDesc::Dirac { space, point } => Ok(MeasureOracle::dirac(space, point.name(space)?)),
            MeasureDesc::Atomic { space, atoms } => {
                let atoms = atoms.iter().map(|a| Ok((a.weight.clone(), a.point.name(space)?))).collect::<Result<_, String>>()?;
                MeasureOracle::atomic(space, atoms).map_err(err)
            }
            MeasureDesc::Mixture { weights, parts } => {
                let parts = parts.iter().map(MeasureDesc::build).collect::<Result<_, _>>()?;
                MeasureOracle::mixture(weights.clone(), parts).map_err(err)
            }
            MeasureDesc::Product { factors } => {
                let mut ms = factors.iter().map(MeasureDesc::build);
                let first = ms.next().ok_or("a product needs at least one factor")??;
                ms.try_fold(first, |acc, m| Ok(MeasureOracle::product(&acc, &m?)))
            }
            MeasureDesc::Pushforward { base, map } => {
                let base = base.build()?;
                MeasureOracle::pushforward(&base, &map_named(map, base.space())?).map_err(err)
            }
            MeasureDesc::Zero { space } => Ok(MeasureOracle::zero(space)),
        }
    }
}

/// Output form of a basic point: its dyadic value on a line, its bits on
/// Cantor space, its index elsewhere.
pub fn point_json(space: &Space, p: &BasicPoint) -> serde_json::Value {
    match (space, p) {
        (s, BasicPoint::Idx(_)) if is_line(s) => serde_json::to_value(s.line_value(p)).expect("dyadics serialize"),
        (Space::Cantor, BasicPoint::Idx(n)) => {
            let len = 64 - n.leading_zeros() as usize;
            serde_json::Value::String((0..len).map(|i| if n >> i & 1 == 1 { '1' } else { '0' }).collect())
        }
        (Space::Product { factors }, BasicPoint::Tuple(ps)) => factors.iter().zip(ps).map(|(f, p)| point_json(f, p)).collect(),
        (_, BasicPoint::Idx(n)) => serde_json::Value::from(*n),
        (_, BasicPoint::Tuple(ps)) => ps.iter().map(|p| point_json(&Space::Baire, p)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn measure(json: &str) -> Result<MeasureOracle, String> {
        serde_json::from_str::<MeasureDesc>(json).map_err(|e| e.to_string())?.build()
    }

    #[test]
    fn lebesgue_and_mixtures_parse() {
        assert_eq!(measure(r#"{"kind": "lebesgue"}"#).unwrap().space(), &Space::UnitInterval);
        let m = measure(
            r#"{"kind": "mixture", "weights": ["1/2", "1/2"],
                "parts": [{"kind": "lebesgue"}, {"kind": "dirac", "space": {"kind": "unit"}, "point": {"dyadic": "1/2"}}]}"#,
        )
        .unwrap();
        assert_eq!(m.norm_bound(), Dyadic::one());
    }

    #[test]
    fn bad_descriptors_are_rejected() {
        assert!(measure(r#"{"kind": "bernoulli", "p": "3/2"}"#).is_err());
        assert!(measure(r#"{"kind": "bernoulli", "p": "1/2", "given": "01x"}"#).is_err());
        assert!(measure(r#"{"kind": "lebesque"}"#).is_err());
        assert!(measure(r#"{"kind": "dirac", "space": {"kind": "unit"}, "point": {"dyadic": "3"}}"#).is_err());
        assert!(measure(r#"{"kind": "product", "factors": []}"#).is_err());
    }

    #[test]
    fn cantor_points() {
        let p = PointDesc::Cantor { prefix: "011".into(), tail: 0 };
        assert_eq!(p.basic(&Space::Cantor).unwrap(), BasicPoint::Idx(6));
        assert_eq!(point_json(&Space::Cantor, &BasicPoint::Idx(6)), serde_json::json!("011"));
        assert!(PointDesc::Cantor { prefix: "1".into(), tail: 1 }.basic(&Space::Cantor).is_err());
    }

    #[test]
    fn line_points_print_as_dyadics() {
        let p = PointDesc::Dyadic(Dyadic::frac(3, 2)).basic(&Space::UnitInterval).unwrap();
        assert_eq!(point_json(&Space::UnitInterval, &p), serde_json::json!({"mantissa": 3, "exponent": -2}));
    }
}
