use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::RealBoundarySet;
use crate::arc::Arc;
use crate::error::{invalid, Result};
use crate::hyperbolic::{Carrier, Geodesic, Model, Point, C64};

/// Open arc of the unit circle running counterclockwise from `start` to `end`
/// (angles in radians, `start < end`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapArc {
    pub start: f64,
    pub end: f64,
}

impl GapArc {
    pub fn contains_angle(&self, theta: f64) -> bool {
        let rel = (theta - self.start).rem_euclid(TAU);
        rel > 0.0 && rel < self.end - self.start
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// Circle-model data of a Denjoy domain.
///
/// `F` is a closed subset of the unit circle symmetric under conjugation and
/// containing ±1; the domain 𝓕 is the region of the disk cut off by the
/// geodesics spanning the gaps of `F`. Gap `j < n` lies in the upper half
/// circle and gap `j + n` is its conjugate.
#[derive(Clone, Debug)]
pub struct FundamentalDomain {
    f_arcs: Vec<(f64, f64)>,
    gaps: Vec<GapArc>,
    geodesics: Vec<Geodesic>,
    infinite_vertices: Vec<C64>,
    base_gap: Option<(f64, f64)>,
}

/// Angle in [0, π] of a point of `ℝ̄ \ (a, b)` in the upper half circle. The
/// map sends `b` to 0, ∞ to π/2 (for a bounded base gap) and `a` to π.
fn upper_angle(x: f64, (a, b): (f64, f64)) -> f64 {
    let psi = if b == f64::INFINITY {
        if x.is_infinite() {
            0.0
        } else {
            1.0 / (a - x)
        }
    } else if a == f64::NEG_INFINITY {
        if x.is_infinite() {
            f64::INFINITY
        } else {
            x - b
        }
    } else if x.is_infinite() {
        1.0
    } else if x == a {
        f64::INFINITY
    } else {
        (x - b) / (x - a)
    };
    2.0 * psi.atan()
}

/// Builds the circle model of `e`. `base_gap` indexes [`RealBoundarySet::gaps`]
/// and defaults to the longest gap.
pub fn circle_model(e: &RealBoundarySet, base_gap: Option<usize>) -> Result<FundamentalDomain> {
    let gaps = e.gaps()?;
    if gaps.is_empty() {
        return Ok(FundamentalDomain {
            f_arcs: vec![(-PI, PI)],
            gaps: Vec::new(),
            geodesics: Vec::new(),
            infinite_vertices: Vec::new(),
            base_gap: None,
        });
    }
    let base_index = match base_gap {
        Some(i) if i < gaps.len() => i,
        Some(i) => return Err(invalid(format!("base gap {i} out of range ({} gaps)", gaps.len()))),
        None => e.longest_gap()?.expect("gaps are nonempty"),
    };
    let base = gaps[base_index];
    let angle = |x: f64| upper_angle(x, base);

    // components of E in cyclic order starting just after b
    let mut comps: Vec<(f64, f64)> = e
        .intervals()
        .iter()
        .map(|&(lo, hi)| (angle(lo), angle(hi)))
        .map(|(p, q)| (p.min(q), p.max(q)))
        .collect();
    let touches_inf = e.intervals().iter().any(|&(a, b)| a.is_infinite() || b.is_infinite());
    if !touches_inf {
        let t = angle(f64::INFINITY);
        comps.push((t, t));
    }
    // the two rays are one component through ∞
    comps.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for c in comps {
        match merged.last_mut() {
            Some(last) if c.0 <= last.1 => last.1 = last.1.max(c.1),
            _ => merged.push(c),
        }
    }

    let mut upper_gaps: Vec<GapArc> = gaps
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != base_index)
        .map(|(_, &(g1, g2))| {
            let (p, q) = (angle(g1), angle(g2));
            GapArc {
                start: p.min(q),
                end: p.max(q),
            }
        })
        .collect();
    upper_gaps.sort_by(|x, y| x.start.total_cmp(&y.start));

    let mut f_arcs = Vec::new();
    for &(lo, hi) in &merged {
        let at_one = lo == 0.0;
        let at_minus_one = hi == PI;
        match (at_one, at_minus_one) {
            (true, true) => f_arcs.push((-PI, PI)),
            (true, false) => f_arcs.push((-hi, hi)),
            (false, true) => f_arcs.push((lo, TAU - lo)),
            (false, false) => {
                f_arcs.push((lo, hi));
                f_arcs.push((-hi, -lo));
            }
        }
    }
    f_arcs.sort_by(|x, y| x.0.total_cmp(&y.0));

    let n = upper_gaps.len();
    let mut all_gaps = upper_gaps.clone();
    all_gaps.extend(upper_gaps.iter().map(|g| GapArc {
        start: -g.end,
        end: -g.start,
    }));
    let mut geodesics = Vec::with_capacity(2 * n);
    for g in &all_gaps {
        geodesics.push(Geodesic::between(
            Point::Finite(C64::from_polar(1.0, g.start)),
            Point::Finite(C64::from_polar(1.0, g.end)),
            Model::Disk,
        )?);
    }
    let mut infinite_vertices: Vec<C64> = all_gaps
        .iter()
        .flat_map(|g| [C64::from_polar(1.0, g.start), C64::from_polar(1.0, g.end)])
        .collect();
    infinite_vertices.sort_by(|a, b| a.arg().total_cmp(&b.arg()));
    infinite_vertices.dedup_by(|a, b| (*a - *b).norm() < 1e-14);

    Ok(FundamentalDomain {
        f_arcs,
        gaps: all_gaps,
        geodesics,
        infinite_vertices,
        base_gap: Some(base),
    })
}

impl FundamentalDomain {
    /// Closed arcs of F as angle pairs `(start, end)` with `start <= end`.
    pub fn f_arcs(&self) -> &[(f64, f64)] {
        &self.f_arcs
    }

    pub fn gaps(&self) -> &[GapArc] {
        &self.gaps
    }

    pub fn geodesics(&self) -> &[Geodesic] {
        &self.geodesics
    }

    /// Number of conjugate gap pairs.
    pub fn pair_count(&self) -> usize {
        self.gaps.len() / 2
    }

    /// Index of the gap conjugate to gap `j`.
    pub fn conjugate_gap(&self, j: usize) -> usize {
        let n = self.pair_count();
        if j < n {
            j + n
        } else {
            j - n
        }
    }

    /// Vertices of 𝓕 inside the disk. The gap geodesics are pairwise disjoint
    /// in the open disk, so there are none.
    pub fn vertices(&self) -> &[C64] {
        &[]
    }

    /// Ideal vertices: endpoints of gap arcs, all of which lie in F.
    pub fn infinite_vertices(&self) -> &[C64] {
        &self.infinite_vertices
    }

    /// The real gap of E sent to the diameter, if any.
    pub fn base_gap(&self) -> Option<(f64, f64)> {
        self.base_gap
    }

    /// Angle in [0, π] of a point of `ℝ̄` outside the base gap.
    pub fn boundary_angle(&self, x: f64) -> Option<f64> {
        self.base_gap.map(|b| upper_angle(x, b))
    }

    /// Membership in the closed domain, with a tolerance on each geodesic.
    pub fn contains(&self, z: C64, tol: f64) -> bool {
        if z.norm() > 1.0 + tol {
            return false;
        }
        self.geodesics.iter().all(|g| match g.carrier() {
            Carrier::Circle { center, radius } => (z - center).norm() >= radius - tol,
            Carrier::Line { .. } => unreachable!("gap geodesics never pass through 0"),
        })
    }

    /// Index of the gap whose geodesic separates `z` from 𝓕, the deepest one if
    /// several do.
    pub fn violated_gap(&self, z: C64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in self.geodesics.iter().enumerate() {
            if let Carrier::Circle { center, radius } = g.carrier() {
                let depth = radius - (z - center).norm();
                if depth > 0.0 && best.is_none_or(|(_, d)| depth > d) {
                    best = Some((j, depth));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    /// Distance from the origin to the boundary of 𝓕 along the ray of angle
    /// `theta`.
    pub fn radial_extent(&self, theta: f64) -> f64 {
        for (g, geo) in self.gaps.iter().zip(&self.geodesics) {
            if g.contains_angle(theta) {
                if let Carrier::Circle { center, .. } = geo.carrier() {
                    let b = (center.conj() * C64::from_polar(1.0, theta)).re;
                    return 1.0 / (b + (b * b - 1.0).max(0.0).sqrt());
                }
            }
        }
        1.0
    }

    /// Geodesic edges of 𝓕 (its boundary relative to the disk).
    pub fn edges(&self) -> Vec<Arc> {
        self.geodesics.iter().map(Arc::from_geodesic).collect()
    }

    /// Total Euclidean length of the geodesic edges.
    pub fn edge_length(&self) -> f64 {
        self.edges().iter().map(Arc::length).sum()
    }

    /// The closed Jordan curve bounding 𝓕, counterclockwise: arcs of F
    /// alternating with geodesic edges.
    pub fn boundary_curve(&self) -> Vec<Arc> {
        let mut pieces: Vec<(f64, Arc)> = Vec::new();
        for &(s, e) in &self.f_arcs {
            if e - s >= TAU - 1e-15 {
                pieces.push((s, Arc::unit_circle(s, PI)));
                pieces.push((s + PI, Arc::unit_circle(s + PI, PI)));
            } else if e > s {
                pieces.push((s, Arc::unit_circle(s, e - s)));
            }
        }
        for (g, geo) in self.gaps.iter().zip(&self.geodesics) {
            pieces.push((g.start, Arc::from_geodesic(geo)));
        }
        pieces.sort_by(|x, y| x.0.rem_euclid(TAU).total_cmp(&y.0.rem_euclid(TAU)));
        pieces.into_iter().map(|(_, a)| a).collect()
    }

    /// Deterministic sample of points in the closed domain on a polar grid.
    pub fn sample_interior(&self, radial: usize, angular: usize) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0)];
        for k in 0..angular {
            let theta = -PI + TAU * (k as f64 + 0.5) / angular as f64;
            let rmax = self.radial_extent(theta);
            for j in 1..=radial {
                let r = rmax * j as f64 / (radial + 1) as f64;
                out.push(C64::from_polar(r, theta));
            }
        }
        out
    }
}

/// Chord-arc constant of 𝓕: see [`chord_arc_constant_of_curve`].
pub fn chord_arc_constant(fd: &FundamentalDomain, resolution: usize, seed: u64) -> Result<ChordArc> {
    chord_arc_constant_of_curve(&fd.boundary_curve(), resolution, seed)
}

/// Result of a chord-arc estimate with its maximizing pair.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChordArc {
    pub value: f64,
    pub witness: (C64, C64),
    pub resolution: usize,
    pub seed: u64,
}

/// Sup over sampled pairs on a closed curve of the shorter subarc length over
/// the chord. Arc lengths are exact; samples are the piece endpoints plus
/// `resolution` points spread by arclength (all pairs), plus `8 * resolution`
/// random pairs drawn from `seed`.
pub fn chord_arc_constant_of_curve(curve: &[Arc], resolution: usize, seed: u64) -> Result<ChordArc> {
    let total: f64 = curve.iter().map(Arc::length).sum();
    if curve.is_empty() || !(total > 0.0) {
        return Err(invalid("boundary curve is degenerate"));
    }
    if resolution < 2 {
        return Err(invalid("resolution must be at least 2"));
    }
    let mut offsets = Vec::with_capacity(curve.len());
    let mut acc = 0.0;
    for a in curve {
        offsets.push(acc);
        acc += a.length();
    }
    let locate = |s: f64| -> C64 {
        let s = s.rem_euclid(total);
        let i = offsets.partition_point(|&o| o <= s).saturating_sub(1);
        let len = curve[i].length();
        curve[i].point_at(if len > 0.0 {
            ((s - offsets[i]) / len).min(1.0)
        } else {
            0.0
        })
    };

    let mut params: Vec<f64> = offsets.clone();
    params.extend((0..resolution).map(|k| total * k as f64 / resolution as f64));
    params.sort_by(f64::total_cmp);
    params.dedup();
    let pts: Vec<(f64, C64)> = params.iter().map(|&s| (s, locate(s))).collect();

    let ratio = |s1: f64, z1: C64, s2: f64, z2: C64| -> Option<f64> {
        let chord = (z1 - z2).norm();
        if chord < 1e-13 {
            return None;
        }
        let d = (s1 - s2).abs().rem_euclid(total);
        Some(d.min(total - d) / chord)
    };
    let mut best = ChordArc {
        value: 0.0,
        witness: (pts[0].1, pts[0].1),
        resolution,
        seed,
    };
    for (i, &(s1, z1)) in pts.iter().enumerate() {
        for &(s2, z2) in &pts[i + 1..] {
            if let Some(r) = ratio(s1, z1, s2, z2) {
                if r > best.value {
                    best.value = r;
                    best.witness = (z1, z2);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..8 * resolution {
        let (s1, s2) = (rng.gen::<f64>() * total, rng.gen::<f64>() * total);
        let (z1, z2) = (locate(s1), locate(s2));
        if let Some(r) = ratio(s1, z1, s2, z2) {
            if r > best.value {
                best.value = r;
                best.witness = (z1, z2);
            }
        }
    }
    Ok(best)
}
