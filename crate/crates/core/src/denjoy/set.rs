use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Result};

/// A finite union of disjoint closed intervals of the real line, optionally
/// together with the point at infinity. Rays are half-infinite intervals;
/// degenerate intervals are isolated points.
#[derive(Clone, Debug, PartialEq)]
pub struct RealBoundarySet {
    intervals: Vec<(f64, f64)>,
    contains_infinity: bool,
}

impl RealBoundarySet {
    /// Sorts the intervals and checks that they are closed, nonempty and
    /// separated by gaps of positive length.
    pub fn new(mut intervals: Vec<(f64, f64)>, contains_infinity: bool) -> Result<Self> {
        for &(a, b) in &intervals {
            if a.is_nan() || b.is_nan() || a > b || a == f64::INFINITY || b == f64::NEG_INFINITY {
                return Err(invalid(format!("bad interval [{a}, {b}]")));
            }
        }
        intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
        for w in intervals.windows(2) {
            if w[0].1 >= w[1].0 {
                return Err(invalid(format!(
                    "intervals [{}, {}] and [{}, {}] are not separated by a gap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        let unbounded = intervals.iter().any(|&(a, b)| a.is_infinite() || b.is_infinite());
        if unbounded && !contains_infinity {
            return Err(invalid("an unbounded interval requires the point at infinity"));
        }
        Ok(Self {
            intervals,
            contains_infinity,
        })
    }

    pub fn full_line() -> Self {
        Self {
            intervals: vec![(f64::NEG_INFINITY, f64::INFINITY)],
            contains_infinity: true,
        }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn contains_infinity(&self) -> bool {
        self.contains_infinity
    }

    pub fn contains(&self, x: f64) -> bool {
        let k = self.intervals.partition_point(|&(_, b)| b < x);
        k < self.intervals.len() && self.intervals[k].0 <= x
    }

    /// Finite interval endpoints in increasing order, without repetition.
    pub fn finite_endpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .intervals
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .filter(|x| x.is_finite())
            .collect();
        v.dedup();
        v
    }

    /// Complementary open intervals of E in the extended line, in increasing
    /// order. An endpoint may be infinite; the point at infinity itself belongs
    /// to E, so a gap never wraps through it.
    pub fn gaps(&self) -> Result<Vec<(f64, f64)>> {
        if !self.contains_infinity {
            return Err(invalid("a Denjoy boundary set must contain infinity"));
        }
        let mut out = Vec::new();
        let mut prev = f64::NEG_INFINITY;
        for &(a, b) in &self.intervals {
            if a > prev {
                out.push((prev, a));
            }
            prev = b;
        }
        if prev < f64::INFINITY {
            out.push((prev, f64::INFINITY));
        }
        Ok(out)
    }

    /// Index of the longest gap, the smallest index among ties. Unbounded gaps
    /// count as infinitely long.
    pub fn longest_gap(&self) -> Result<Option<usize>> {
        let gaps = self.gaps()?;
        let mut best: Option<(usize, f64)> = None;
        for (i, &(a, b)) in gaps.iter().enumerate() {
            let len = b - a;
            if best.is_none_or(|(_, l)| len > l) {
                best = Some((i, len));
            }
        }
        Ok(best.map(|(i, _)| i))
    }

    /// Image under `x -> s x + shift` with `s > 0`.
    pub fn affine(&self, s: f64, shift: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(invalid("scale must be positive"));
        }
        Self::new(
            self.intervals
                .iter()
                .map(|&(a, b)| (s * a + shift, s * b + shift))
                .collect(),
            self.contains_infinity,
        )
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Bound {
    Number(f64),
    Sentinel(String),
}

impl Bound {
    fn from_f64(x: f64) -> Self {
        if x == f64::INFINITY {
            Bound::Sentinel("inf".into())
        } else if x == f64::NEG_INFINITY {
            Bound::Sentinel("-inf".into())
        } else {
            Bound::Number(x)
        }
    }

    fn to_f64(&self) -> std::result::Result<f64, String> {
        match self {
            Bound::Number(x) => Ok(*x),
            Bound::Sentinel(s) if s == "inf" => Ok(f64::INFINITY),
            Bound::Sentinel(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            Bound::Sentinel(s) => Err(format!("unknown bound `{s}`")),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Wire {
    intervals: Vec<(Bound, Bound)>,
    infinity: bool,
}

impl Serialize for RealBoundarySet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        Wire {
            intervals: self
                .intervals
                .iter()
                .map(|&(a, b)| (Bound::from_f64(a), Bound::from_f64(b)))
                .collect(),
            infinity: self.contains_infinity,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RealBoundarySet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = Wire::deserialize(d)?;
        let mut iv = Vec::with_capacity(wire.intervals.len());
        for (a, b) in &wire.intervals {
            iv.push((
                a.to_f64().map_err(D::Error::custom)?,
                b.to_f64().map_err(D::Error::custom)?,
            ));
        }
        RealBoundarySet::new(iv, wire.infinity).map_err(D::Error::custom)
    }
}

/// `(-∞, -3] ∪ [-1-ℓ, -1] ∪ [1, 1+ℓ] ∪ [3, ∞) ∪ {∞}`, symmetric about 0; its
/// homogeneity constant decreases as `ℓ` shrinks. `ℓ` must lie in (0, 2).
pub fn two_gap_pair(ell: f64) -> Result<RealBoundarySet> {
    if !(ell > 0.0 && ell < 2.0) {
        return Err(invalid("ℓ must lie in (0, 2)"));
    }
    RealBoundarySet::new(
        vec![
            (f64::NEG_INFINITY, -3.0),
            (-1.0 - ell, -1.0),
            (1.0, 1.0 + ell),
            (3.0, f64::INFINITY),
        ],
        true,
    )
}

/// `(-∞, -1/3] ∪ C_d ∪ [4/3, ∞) ∪ {∞}` where `C_d` is the union of the `2^d`
/// intervals of length `3^{-d}` left after `d` steps of the middle-thirds
/// construction on [0, 1].
pub fn triadic_cantor(depth: u32) -> RealBoundarySet {
    let mut pieces = vec![(0.0, 1.0)];
    for _ in 0..depth {
        pieces = pieces
            .into_iter()
            .flat_map(|(a, b): (f64, f64)| {
                let third = (b - a) / 3.0;
                [(a, a + third), (b - third, b)]
            })
            .collect();
    }
    with_rays(pieces, -1.0 / 3.0, 4.0 / 3.0)
}

/// Like [`triadic_cantor`] but step `k` removes only the middle `3^{-k}`
/// fraction of each interval, so the set keeps positive density at every scale.
pub fn fat_cantor(depth: u32) -> RealBoundarySet {
    let mut pieces = vec![(0.0, 1.0)];
    for k in 1..=depth {
        let frac = 3f64.powi(-(k as i32));
        pieces = pieces
            .into_iter()
            .flat_map(|(a, b): (f64, f64)| {
                let keep = (b - a) * (1.0 - frac) / 2.0;
                [(a, a + keep), (b - keep, b)]
            })
            .collect();
    }
    with_rays(pieces, -1.0 / 3.0, 4.0 / 3.0)
}

fn with_rays(mut pieces: Vec<(f64, f64)>, left: f64, right: f64) -> RealBoundarySet {
    pieces.insert(0, (f64::NEG_INFINITY, left));
    pieces.push((right, f64::INFINITY));
    RealBoundarySet::new(pieces, true).expect("construction yields disjoint intervals")
}
