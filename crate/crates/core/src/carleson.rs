//! Carleson norms of discrete and density measures on the disk, orbit
//! pushforwards and the Beltrami density test.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::arc::Arc;
use crate::denjoy::FundamentalDomain;
use crate::error::{invalid, LabError, Result};
use crate::fuchsian::{generators_from_domain, geometric_tail, reduce_to_domain, Budget, OrbitSummary, Truncated};
use crate::hyperbolic::{MoebiusMap, C64};
use crate::quadrature::{DiskMesh, MeshSpec, Region, RingPrefix};

/// Test balls: `boundary_net` equispaced centers on the boundary and radii
/// `2^{1 - k/2}` for `k = 1..=radii`, followed by a local refinement around
/// the best ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub boundary_net: usize,
    pub radii: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            boundary_net: 128,
            radii: 12,
        }
    }
}

impl Sampling {
    pub fn validate(&self) -> Result<()> {
        if self.boundary_net < 4 || self.radii == 0 {
            return Err(invalid("sampling needs at least 4 net points and one radius"));
        }
        Ok(())
    }

    pub fn radii_list(&self) -> Vec<f64> {
        (1..=self.radii).map(|k| 2f64.powf(1.0 - k as f64 / 2.0)).collect()
    }
}

/// `sup m(𝔻 ∩ D(z, r)) / r` over the sampled balls.
#[derive(Clone, Debug, Serialize)]
pub struct CarlesonNorm {
    pub value: f64,
    pub center: C64,
    pub radius: f64,
    /// Mass not represented in the estimate (orbit tail or rim tail).
    pub tail: f64,
    pub sampling: Sampling,
}

impl CarlesonNorm {
    fn zero(sampling: Sampling) -> Self {
        Self {
            value: 0.0,
            center: C64::new(1.0, 0.0),
            radius: 2f64.sqrt(),
            tail: 0.0,
            sampling,
        }
    }
}

/// A constant-density piece of arclength on a circular arc or segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArcPiece {
    pub arc: Arc,
    pub density: f64,
}

impl ArcPiece {
    pub fn mass(&self) -> f64 {
        self.density * self.arc.length()
    }
}

/// Point masses plus arclength pieces in the closed disk.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiscreteMeasure {
    pub atoms: Vec<(C64, f64)>,
    pub pieces: Vec<ArcPiece>,
}

const SUPPORT_TOL: f64 = 1e-9;

impl DiscreteMeasure {
    pub fn new(atoms: Vec<(C64, f64)>, pieces: Vec<ArcPiece>) -> Result<Self> {
        for &(z, w) in &atoms {
            if !(w >= 0.0 && w.is_finite()) || !(z.norm() <= 1.0 + SUPPORT_TOL) {
                return Err(invalid(format!(
                    "atom {z} with mass {w} is not a finite mass in the closed disk"
                )));
            }
        }
        for p in &pieces {
            if !(p.density >= 0.0 && p.density.is_finite()) {
                return Err(invalid("arc densities must be finite and nonnegative"));
            }
            if p.arc.sample(4).iter().any(|z| !(z.norm() <= 1.0 + SUPPORT_TOL)) {
                return Err(invalid("arc piece leaves the closed disk"));
            }
        }
        Ok(Self { atoms, pieces })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Unit-density arclength on the given arcs.
    pub fn arclength(arcs: &[Arc]) -> Result<Self> {
        Self::new(
            Vec::new(),
            arcs.iter().map(|&arc| ArcPiece { arc, density: 1.0 }).collect(),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty() && self.pieces.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum::<f64>() + self.pieces.iter().map(ArcPiece::mass).sum::<f64>()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(invalid("scale must be finite and nonnegative"));
        }
        Ok(Self {
            atoms: self.atoms.iter().map(|&(z, w)| (z, c * w)).collect(),
            pieces: self
                .pieces
                .iter()
                .map(|p| ArcPiece {
                    arc: p.arc,
                    density: c * p.density,
                })
                .collect(),
        })
    }

    /// Mass of the closed disk `|w - z| ≤ r` by direct summation.
    pub fn ball_mass(&self, z: C64, r: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| (a.0 - z).norm() <= r).map(|a| a.1).sum();
        atoms
            + self
                .pieces
                .iter()
                .map(|p| p.density * p.arc.length_in_disk(z, r))
                .sum::<f64>()
    }

    /// Atoms as CSV with columns `re,im,mass`.
    pub fn atoms_csv(&self) -> String {
        let mut out = String::from("re,im,mass\n");
        for (z, w) in &self.atoms {
            let _ = writeln!(out, "{},{},{}", z.re, z.im, w);
        }
        out
    }

    /// One JSON record per arc piece.
    pub fn pieces_json(&self) -> Value {
        Value::Array(
            self.pieces
                .iter()
                .map(|p| match p.arc {
                    Arc::Circular {
                        center,
                        radius,
                        start,
                        sweep,
                    } => json!({
                        "kind": "circular",
                        "center": [center.re, center.im],
                        "radius": radius,
                        "start": start,
                        "sweep": sweep,
                        "density": p.density,
                        "mass": p.mass(),
                    }),
                    Arc::Segment { from, to } => json!({
                        "kind": "segment",
                        "from": [from.re, from.im],
                        "to": [to.re, to.im],
                        "density": p.density,
                        "mass": p.mass(),
                    }),
                })
                .collect(),
        )
    }
}

/// Something whose mass in closed balls can be queried.
trait BallMass: Sync {
    fn ball_mass(&self, z: C64, r: f64) -> Result<f64>;
}

const MAX_LEVEL: usize = 8;

/// Multilevel grid over [-1, 1]²: an item sits in the deepest level whose
/// cell side is at least its bounding diameter, so it lies within half a cell
/// of its own cell. Cells wholly inside or outside a query ball are settled
/// without visiting their items.
struct MeasureIndex<'a> {
    m: &'a DiscreteMeasure,
    levels: Vec<Level>,
}

struct Level {
    n: usize,
    h: f64,
    start: Vec<u32>,
    items: Vec<u32>,
    mass: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Item {
    center: C64,
    radius: f64,
    mass: f64,
}

impl<'a> MeasureIndex<'a> {
    fn new(m: &'a DiscreteMeasure) -> Self {
        let mut items: Vec<Item> = m
            .atoms
            .iter()
            .map(|&(z, w)| Item {
                center: z,
                radius: 0.0,
                mass: w,
            })
            .collect();
        items.extend(m.pieces.iter().map(|p| {
            let (center, radius) = bounding_disk(&p.arc);
            Item {
                center,
                radius,
                mass: p.mass(),
            }
        }));
        let mut per_level: Vec<Vec<(usize, u32)>> = vec![Vec::new(); MAX_LEVEL + 1];
        for (i, it) in items.iter().enumerate() {
            let mut l = 0;
            while l < MAX_LEVEL && 2.0 / (1u64 << (l + 1)) as f64 >= 2.0 * it.radius {
                l += 1;
            }
            let n = 1usize << l;
            let h = 2.0 / n as f64;
            let cell = cell_of(it.center.re, h, n) * n + cell_of(it.center.im, h, n);
            per_level[l].push((cell, i as u32));
        }
        let levels = per_level
            .into_iter()
            .enumerate()
            .map(|(l, mut list)| {
                let n = 1usize << l;
                list.sort_unstable();
                let mut start = vec![0u32; n * n + 1];
                let mut mass = vec![0.0; n * n];
                for &(c, i) in &list {
                    start[c + 1] += 1;
                    mass[c] += items[i as usize].mass;
                }
                for c in 0..n * n {
                    start[c + 1] += start[c];
                }
                Level {
                    n,
                    h: 2.0 / n as f64,
                    start,
                    items: list.into_iter().map(|(_, i)| i).collect(),
                    mass,
                }
            })
            .collect();
        Self { m, levels }
    }

    fn item_mass(&self, i: usize, z: C64, r: f64) -> f64 {
        let na = self.m.atoms.len();
        if i < na {
            let (p, w) = self.m.atoms[i];
            if (p - z).norm() <= r {
                w
            } else {
                0.0
            }
        } else {
            let p = &self.m.pieces[i - na];
            p.density * p.arc.length_in_disk(z, r)
        }
    }
}

fn cell_of(x: f64, h: f64, n: usize) -> usize {
    (((x + 1.0) / h).floor().max(0.0) as usize).min(n - 1)
}

/// A disk containing the arc: the chord's diametral disk when the arc is at
/// most a half circle, otherwise the carrier disk.
fn bounding_disk(arc: &Arc) -> (C64, f64) {
    let (p, q) = (arc.start_point(), arc.end_point());
    let chord = ((p + q) * 0.5, (p - q).norm() * 0.5 * (1.0 + 1e-12) + 1e-15);
    match *arc {
        Arc::Circular {
            center, radius, sweep, ..
        } if sweep.abs() > std::f64::consts::PI => (center, radius),
        _ => chord,
    }
}

impl BallMass for MeasureIndex<'_> {
    fn ball_mass(&self, z: C64, r: f64) -> Result<f64> {
        let mut total = 0.0;
        for lv in &self.levels {
            if lv.items.is_empty() {
                continue;
            }
            let pad = 0.5 * lv.h;
            let lo_x = cell_of(z.re - r - pad, lv.h, lv.n);
            let hi_x = cell_of(z.re + r + pad, lv.h, lv.n);
            let lo_y = cell_of(z.im - r - pad, lv.h, lv.n);
            let hi_y = cell_of(z.im + r + pad, lv.h, lv.n);
            for ix in lo_x..=hi_x {
                let x0 = -1.0 + ix as f64 * lv.h - pad;
                let x1 = x0 + lv.h + 2.0 * pad;
                for iy in lo_y..=hi_y {
                    let c = ix * lv.n + iy;
                    let (s, e) = (lv.start[c] as usize, lv.start[c + 1] as usize);
                    if s == e {
                        continue;
                    }
                    let y0 = -1.0 + iy as f64 * lv.h - pad;
                    let y1 = y0 + lv.h + 2.0 * pad;
                    let far = (z.re - x0)
                        .abs()
                        .max((z.re - x1).abs())
                        .hypot((z.im - y0).abs().max((z.im - y1).abs()));
                    if far <= r {
                        total += lv.mass[c];
                        continue;
                    }
                    let near = (z.re.clamp(x0, x1) - z.re).hypot(z.im.clamp(y0, y1) - z.im);
                    if near > r {
                        continue;
                    }
                    for &i in &lv.items[s..e] {
                        total += self.item_mass(i as usize, z, r);
                    }
                }
            }
        }
        Ok(total)
    }
}

/// Centers of test balls: the unit circle or a closed curve of arcs,
/// parametrized by normalized arclength.
pub(crate) enum Net<'a> {
    Circle,
    Curve { arcs: &'a [Arc], cum: Vec<f64> },
}

impl<'a> Net<'a> {
    fn curve(arcs: &'a [Arc]) -> Self {
        let mut cum = vec![0.0];
        for a in arcs {
            cum.push(cum.last().expect("nonempty") + a.length());
        }
        Net::Curve { arcs, cum }
    }

    fn point(&self, t: f64) -> C64 {
        let t = t.rem_euclid(1.0);
        match self {
            Net::Circle => C64::from_polar(1.0, std::f64::consts::TAU * t),
            Net::Curve { arcs, cum } => {
                let total = *cum.last().expect("nonempty");
                let s = t * total;
                let k = cum.partition_point(|&c| c <= s).saturating_sub(1).min(arcs.len() - 1);
                let len = cum[k + 1] - cum[k];
                let u = if len > 0.0 { (s - cum[k]) / len } else { 0.0 };
                arcs[k].point_at(u.clamp(0.0, 1.0))
            }
        }
    }

    /// Net size: at least `base`, and at least four points on the shortest
    /// piece of a curve, up to `8 · base`.
    fn size(&self, base: usize) -> usize {
        match self {
            Net::Circle => base,
            Net::Curve { arcs, cum } => {
                let total = *cum.last().expect("nonempty");
                let shortest = arcs
                    .iter()
                    .map(Arc::length)
                    .filter(|l| *l > 0.0)
                    .fold(f64::INFINITY, f64::min);
                let want = (4.0 * total / shortest).ceil();
                if want.is_finite() {
                    (want as usize).clamp(base, 8 * base)
                } else {
                    base
                }
            }
        }
    }
}

/// Coarse balls refined by [`sup_search`].
const REFINE_STARTS: usize = 16;

/// Coarse grid over (net point, radius), then three rounds of local grid
/// refinement around the best coarse local maxima at distinct centers.
/// Ties keep the first candidate in (center, radius) order.
fn sup_search(m: &impl BallMass, net: &Net, sampling: Sampling) -> Result<(f64, C64, f64)> {
    sampling.validate()?;
    let n = net.size(sampling.boundary_net);
    let radii = sampling.radii_list();
    let candidates: Vec<(f64, f64)> = (0..n)
        .flat_map(|i| radii.iter().map(move |&r| (i as f64 / n as f64, r)))
        .collect();
    let eval = |cands: &[(f64, f64)]| -> Result<Vec<f64>> {
        cands
            .par_iter()
            .map(|&(t, r)| Ok(m.ball_mass(net.point(t), r)? / r))
            .collect()
    };
    let pick = |cands: &[(f64, f64)], vals: &[f64], best: (f64, (f64, f64))| {
        cands
            .iter()
            .zip(vals)
            .fold(best, |b, (c, &v)| if v > b.0 { (v, *c) } else { b })
    };
    let vals = eval(&candidates)?;
    let k = radii.len();
    let is_peak = |i: usize| {
        let (c, j) = (i / k, i % k);
        [n - 1, 0, 1].iter().all(|&dc| {
            let c2 = (c + dc) % n;
            (j.saturating_sub(1)..=(j + 1).min(k - 1)).all(|j2| vals[c2 * k + j2] <= vals[i])
        })
    };
    let mut peaks: Vec<usize> = (0..candidates.len()).filter(|&i| is_peak(i)).collect();
    peaks.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    let mut starts: Vec<(f64, (f64, f64))> = Vec::new();
    for i in peaks {
        if starts.len() == REFINE_STARTS {
            break;
        }
        if starts.iter().all(|s| s.1 .0 != candidates[i].0) {
            starts.push((vals[i], candidates[i]));
        }
    }
    if starts.is_empty() {
        starts.push(pick(&candidates, &vals, (f64::NEG_INFINITY, candidates[0])));
    }
    let mut overall = (f64::NEG_INFINITY, candidates[0]);
    for start in starts {
        let mut best = start;
        let mut dt = 1.0 / n as f64;
        let mut dl = 0.5 * std::f64::consts::LN_2;
        for _ in 0..3 {
            let (t0, r0) = best.1;
            let local: Vec<(f64, f64)> = (-4..=4)
                .flat_map(|i| {
                    (-4..=4).map(move |j| {
                        let r = (r0 * (dl * j as f64 / 4.0).exp()).min(2.0 - 1e-12);
                        (t0 + dt * i as f64 / 4.0, r)
                    })
                })
                .collect();
            let vals = eval(&local)?;
            best = pick(&local, &vals, best);
            dt /= 4.0;
            dl /= 4.0;
        }
        if best.0 > overall.0 {
            overall = best;
        }
    }
    let best = overall;
    Ok((best.0.max(0.0), net.point(best.1 .0), best.1 .1))
}

/// Carleson norm `sup m(D(z, r)) / r` of a discrete measure over balls
/// centered on the unit circle. The ratio is not square-rooted.
pub fn carleson_norm(m: &DiscreteMeasure, sampling: Sampling) -> Result<CarlesonNorm> {
    discrete_norm(m, &Net::Circle, sampling)
}

/// As [`carleson_norm`] with ball centers on the closed curve `boundary`.
pub fn carleson_norm_on_curve(m: &DiscreteMeasure, boundary: &[Arc], sampling: Sampling) -> Result<CarlesonNorm> {
    if boundary.is_empty() {
        return Err(invalid("empty boundary curve"));
    }
    discrete_norm(m, &Net::curve(boundary), sampling)
}

fn discrete_norm(m: &DiscreteMeasure, net: &Net, sampling: Sampling) -> Result<CarlesonNorm> {
    if m.total_mass() == 0.0 {
        sampling.validate()?;
        return Ok(CarlesonNorm::zero(sampling));
    }
    let index = MeasureIndex::new(m);
    let (value, center, radius) = sup_search(&index, net, sampling)?;
    Ok(CarlesonNorm {
        value,
        center,
        radius,
        tail: 0.0,
        sampling,
    })
}

/// Where a density measure lives.
#[derive(Clone, Debug)]
pub enum Support {
    Disk,
    Domain(FundamentalDomain),
}

/// An absolutely continuous measure `density(z) dx dy`.
pub struct DensityMeasure {
    density: Box<dyn Fn(C64) -> f64 + Send + Sync>,
    pub support: Support,
}

impl DensityMeasure {
    pub fn new(density: impl Fn(C64) -> f64 + Send + Sync + 'static, support: Support) -> Self {
        Self {
            density: Box::new(density),
            support,
        }
    }

    pub fn density(&self, z: C64) -> f64 {
        match &self.support {
            Support::Domain(fd) if !fd.contains(z, 0.0) => 0.0,
            _ => (self.density)(z),
        }
    }
}

/// Density values frozen on a mesh.
pub(crate) struct MeshDensity<'a> {
    pub mesh: &'a DiskMesh,
    pub values: Vec<f64>,
    /// When set, the measure lives on `pull^{-1}` of the mesh: a ball `B` is
    /// measured as the mesh points of `pull(B)`.
    pub pull: Option<MoebiusMap>,
    prefix: RingPrefix,
}

impl<'a> MeshDensity<'a> {
    pub fn new(mesh: &'a DiskMesh, values: Vec<f64>, pull: Option<MoebiusMap>) -> Self {
        let prefix = mesh.prefix(&values);
        Self {
            mesh,
            values,
            pull,
            prefix,
        }
    }
}

/// The region `t(D(z, r))`: a disk, or the outside of one when the ball holds
/// the pole of `t`. `None` when the pole is (numerically) on the boundary.
fn image_region(t: &MoebiusMap, z: C64, r: f64) -> Option<Region> {
    let [_, _, c, d] = t.entries();
    let a = t.apply_c(z + r);
    let b = t.apply_c(z + C64::new(0.0, r));
    let e = t.apply_c(z - r);
    let (ab, ae) = (b - a, e - a);
    let den = 2.0 * (ab.re * ae.im - ab.im * ae.re);
    if !den.is_finite() || den.abs() < 1e-300 {
        return None;
    }
    let (n1, n2) = (ab.norm_sqr(), ae.norm_sqr());
    let centre = a + C64::new(ae.im * n1 - ab.im * n2, ab.re * n2 - ae.re * n1) / den;
    let rho = (a - centre).norm();
    if !(centre.is_finite() && rho.is_finite() && rho < 1e12) {
        return None;
    }
    Some(if (c * z + d).norm() < r * c.norm() {
        Region::Outside(centre, rho)
    } else {
        Region::Disk(centre, rho)
    })
}

/// Ring-to-ring ratio of the density scale above which the rim mass is
/// treated as non-summable; a log-divergent density gives ratio 1.
const DIVERGENCE_RATIO: f64 = 0.97;

/// Rings over which the ratio is also averaged (geometric mean): measures
/// carried by tiles near a limit set decay unevenly from ring to ring, so
/// divergence needs the mean and the last two ratios all above the threshold.
const RATIO_SPAN: usize = 4;

/// A region witnesses divergence only when the rings used by the ratio test
/// are this many times thinner than its radius; shallower regions near a limit
/// set are still filling with tiles and only get the capped tail.
const RESOLVED_DEPTH: f64 = 16.0;

impl MeshDensity<'_> {
    /// Ball mass including the geometric rim tail; fails when the ring masses
    /// stop decaying toward the circle.
    ///
    /// Ratios are taken of `mass_k / (area_k 2^k)`, ring mass over the area the
    /// region cuts from ring `k` scaled by the ring width, so a region whose
    /// chords still lengthen toward the rim does not read as growth.
    fn mass_with_tail(&self, z: C64, r: f64) -> Result<(f64, f64)> {
        let (region, (s, areas)) = match &self.pull {
            None => (r, self.prefix.ring_sums_and_areas(Region::Disk(z, r))),
            Some(t) => match image_region(t, z, r) {
                Some(region @ Region::Disk(_, rho)) => (rho, self.prefix.ring_sums_and_areas(region)),
                Some(region) => (2.0, self.prefix.ring_sums_and_areas(region)),
                None => {
                    let back = t.inverse();
                    let inside = |w: C64| (back.apply_c(w) - z).norm_sqr() <= r * r;
                    let origin = C64::new(0.0, 0.0);
                    let ones = vec![1.0; self.values.len()];
                    (
                        2.0,
                        (
                            self.mesh.ring_sums_in(&self.values, origin, 2.0, inside),
                            self.mesh.ring_sums_in(&ones, origin, 2.0, inside),
                        ),
                    )
                }
            },
        };
        let total: f64 = s.iter().sum();
        let k = s.len();
        let scale: Vec<f64> = (0..k)
            .map(|i| {
                if areas[i] > 0.0 {
                    s[i] / (areas[i] * 2f64.powi(i as i32))
                } else {
                    0.0
                }
            })
            .collect();
        let span = (1..=RATIO_SPAN.min(k - 1))
            .take_while(|&m| scale[k - 1 - m] > 0.0)
            .last()
            .unwrap_or(0);
        if total == 0.0 || scale[k - 1] <= 0.0 || span < 2 {
            return Ok((total, 0.0));
        }
        let mean = (scale[k - 1] / scale[k - 1 - span]).powf(1.0 / span as f64);
        let last = scale[k - 1] / scale[k - 2];
        let before = scale[k - 2] / scale[k - 3];
        let resolved = (0..k)
            .filter(|&i| 0.5f64.powi(i as i32 + 1) <= region / RESOLVED_DEPTH)
            .count()
            > span;
        if resolved && mean.min(last).min(before) >= DIVERGENCE_RATIO && s[k - 1] > 1e-3 * total {
            return Err(LabError::Divergent { z, r });
        }
        let q = mean.min(last).min(DIVERGENCE_RATIO);
        let tail = s[k - 1] * q / (1.0 - q);
        Ok((total + tail, tail))
    }
}

impl BallMass for MeshDensity<'_> {
    fn ball_mass(&self, z: C64, r: f64) -> Result<f64> {
        Ok(self.mass_with_tail(z, r)?.0)
    }
}

pub(crate) fn density_norm(d: &MeshDensity, net: &Net, sampling: Sampling) -> Result<CarlesonNorm> {
    if d.values.iter().all(|v| *v == 0.0) {
        sampling.validate()?;
        return Ok(CarlesonNorm::zero(sampling));
    }
    let (value, center, radius) = sup_search(d, net, sampling)?;
    let tail = d.mass_with_tail(center, radius)?.1;
    Ok(CarlesonNorm {
        value,
        center,
        radius,
        tail,
        sampling,
    })
}

/// Norm on the unit disk of frozen mesh values.
pub(crate) fn mesh_norm(mesh: &DiskMesh, values: Vec<f64>, sampling: Sampling) -> Result<CarlesonNorm> {
    density_norm(&MeshDensity::new(mesh, values, None), &Net::Circle, sampling)
}

/// Norm on the unit disk of the measure `ν` with `ν(B) = Σ_{w_i ∈ t(B)} weight_i · values[i]`,
/// i.e. mesh values already carrying the Jacobian of `t^{-1}`.
pub(crate) fn mesh_norm_pulled(
    mesh: &DiskMesh,
    values: Vec<f64>,
    t: MoebiusMap,
    sampling: Sampling,
) -> Result<CarlesonNorm> {
    density_norm(&MeshDensity::new(mesh, values, Some(t)), &Net::Circle, sampling)
}

/// Norm with ball centers on `boundary` of frozen mesh values.
pub(crate) fn mesh_norm_on_curve(
    mesh: &DiskMesh,
    values: Vec<f64>,
    boundary: &[Arc],
    sampling: Sampling,
) -> Result<CarlesonNorm> {
    density_norm(&MeshDensity::new(mesh, values, None), &Net::curve(boundary), sampling)
}

/// Carleson norm of a density measure, integrated on a rim-graded polar mesh;
/// balls are centered on the unit circle, or on ∂𝓕 for domain support.
pub fn carleson_norm_density(m: &DensityMeasure, mesh: MeshSpec, sampling: Sampling) -> Result<CarlesonNorm> {
    let mesh = DiskMesh::new(mesh)?;
    let values: Vec<f64> = mesh.points().par_iter().map(|p| m.density(p.z)).collect();
    if values.iter().any(|v| !(*v >= 0.0)) {
        return Err(invalid("density must be nonnegative where evaluated"));
    }
    match &m.support {
        Support::Disk => mesh_norm(&mesh, values, sampling),
        Support::Domain(fd) => mesh_norm_on_curve(&mesh, values, &fd.boundary_curve(), sampling),
    }
}

fn check_support(fd: &FundamentalDomain, nu: &DiscreteMeasure) -> Result<()> {
    let inside = |z: C64| fd.contains(z, SUPPORT_TOL);
    if nu.atoms.iter().any(|a| !inside(a.0))
        || nu
            .pieces
            .iter()
            .any(|p| p.arc.sample(4).into_iter().any(|z| !inside(z)))
    {
        return Err(invalid("measure is not supported in the closed fundamental domain"));
    }
    Ok(())
}

/// `ν̃ = Σ_γ γ_*(|γ'| ν)` over the enumerated elements: atoms `(z, w)` go to
/// `(γ z, w |γ'(z)|)`, and unit-speed arclength on `A` with density `ρ` goes
/// to density `ρ` on `γ(A)`, since `|γ'| ds` is the arclength of the image.
pub fn orbit_pushforward(
    fd: &FundamentalDomain,
    nu: &DiscreteMeasure,
    orbit: &OrbitSummary,
) -> Result<DiscreteMeasure> {
    check_support(fd, nu)?;
    let mut atoms = Vec::with_capacity(nu.atoms.len() * orbit.len());
    let mut pieces = Vec::with_capacity(nu.pieces.len() * orbit.len());
    for e in &orbit.elements {
        for &(z, w) in &nu.atoms {
            atoms.push((e.map.apply_c(z), w * e.map.derivative_modulus(z)?));
        }
        for p in &nu.pieces {
            pieces.push(ArcPiece {
                arc: p.arc.image(&e.map),
                density: p.density,
            });
        }
    }
    Ok(DiscreteMeasure { atoms, pieces })
}

/// Mass of `γ_*(|γ'| ν)` for each enumerated element, in orbit order.
pub fn transported_masses(fd: &FundamentalDomain, nu: &DiscreteMeasure, orbit: &OrbitSummary) -> Result<Vec<f64>> {
    check_support(fd, nu)?;
    orbit
        .elements
        .par_iter()
        .map(|e| {
            let atoms: f64 = nu
                .atoms
                .iter()
                .map(|&(z, w)| Ok(w * e.map.derivative_modulus(z)?))
                .sum::<Result<f64>>()?;
            Ok(atoms
                + nu.pieces
                    .iter()
                    .map(|p| p.density * p.arc.image(&e.map).length())
                    .sum::<f64>())
        })
        .collect()
}

/// Property (H) probe for one measure on 𝓕.
#[derive(Clone, Debug, Serialize)]
pub struct HProbe {
    /// Balls centered on ∂𝓕 against `ν`.
    pub norm_on_f: CarlesonNorm,
    /// Balls centered on the unit circle against the truncated `ν̃`.
    pub norm_tilde: CarlesonNorm,
    pub tilde_mass: Truncated,
    pub budget: Budget,
    pub elements: usize,
}

pub fn property_h_probe(
    fd: &FundamentalDomain,
    orbit: &OrbitSummary,
    nu: &DiscreteMeasure,
    sampling: Sampling,
) -> Result<HProbe> {
    let masses = transported_masses(fd, nu, orbit)?;
    let mut shells = vec![0.0; orbit.shell_count()];
    for (e, m) in orbit.elements.iter().zip(&masses) {
        shells[orbit.shell_of(e)] += m;
    }
    let tilde_mass = Truncated {
        value: masses.iter().sum(),
        tail: geometric_tail(&shells),
    };
    let norm_on_f = carleson_norm_on_curve(nu, &fd.boundary_curve(), sampling)?;
    let tilde = orbit_pushforward(fd, nu, orbit)?;
    let mut norm_tilde = carleson_norm(&tilde, sampling)?;
    norm_tilde.tail = tilde_mass.tail;
    Ok(HProbe {
        norm_on_f,
        norm_tilde,
        tilde_mass,
        budget: orbit.budget.clone(),
        elements: orbit.len(),
    })
}

/// Relative change `|b - a| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_change(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (b - a).abs() / s
    }
}

/// Verdict shared by the (H) and SFLT probes: finite and changing by less
/// than `tol` between the two largest budgets.
pub fn finite_and_stable(previous: f64, top: f64, tol: f64) -> bool {
    previous.is_finite() && top.is_finite() && relative_change(previous, top) < tol
}

/// `|μ|` of a G-compatible Beltrami coefficient, given on 𝓕; the value at
/// `g(z)` has the same modulus as at `z`.
pub struct BeltramiDensity {
    modulus: Box<dyn Fn(C64) -> f64 + Send + Sync>,
    pub label: String,
}

impl BeltramiDensity {
    pub fn new(label: impl Into<String>, modulus: impl Fn(C64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            modulus: Box::new(modulus),
            label: label.into(),
        }
    }

    pub fn zero() -> Self {
        Self::new("zero", |_| 0.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant {c}"), move |_| c.abs())
    }

    /// `c (1 - |z|²)^{1/2}`, vanishing on F so that `λ_μ` stays finite there.
    pub fn rim_vanishing(c: f64) -> Self {
        Self::new(format!("{c}·(1-|z|²)^(1/2)"), move |z: C64| {
            c.abs() * (1.0 - z.norm_sqr()).max(0.0).sqrt()
        })
    }

    pub fn modulus(&self, z: C64) -> f64 {
        (self.modulus)(z)
    }

    /// Largest sampled modulus on 𝓕; fails unless it is below 1.
    pub fn sup_on(&self, fd: &FundamentalDomain) -> Result<f64> {
        let sup = fd
            .sample_interior(24, 96)
            .into_iter()
            .map(|z| self.modulus(z))
            .fold(0.0, f64::max);
        if !(sup < 1.0) {
            return Err(invalid(format!(
                "Beltrami coefficient `{}` has sampled sup {sup} ≥ 1",
                self.label
            )));
        }
        Ok(sup)
    }
}

/// Result of [`beltrami_carleson_check`].
#[derive(Clone, Debug, Serialize)]
pub struct BeltramiReport {
    pub label: String,
    pub norm_on_f: CarlesonNorm,
    pub norm_on_disk: CarlesonNorm,
    /// Share of the disk quadrature mass at points that could not be reduced
    /// into 𝓕, bounded with the sampled sup of `|μ|`.
    pub uncovered_fraction: f64,
    pub max_steps: usize,
    pub mesh: MeshSpec,
}

/// Largest fraction of quadrature mass allowed outside the reducible region.
pub const MAX_UNCOVERED: f64 = 0.1;

/// Reduction cap for a budget: four times its word length, or four times the
/// longest enumerated word under an origin-gap budget.
pub fn reduction_cap(orbit: &OrbitSummary) -> usize {
    let l = orbit
        .budget
        .max_word_length
        .unwrap_or_else(|| orbit.elements.iter().map(|e| e.word.len()).max().unwrap_or(0));
    4 * l
}

/// Carleson norms of `|μ|² (1 - |z|²)^{-1} dx dy` on 𝓕 (balls on ∂𝓕) and of
/// its G-compatible extension to the disk (balls on the unit circle).
pub fn beltrami_carleson_check(
    mu: &BeltramiDensity,
    fd: &FundamentalDomain,
    orbit: &OrbitSummary,
    mesh: MeshSpec,
    sampling: Sampling,
) -> Result<BeltramiReport> {
    let sup = mu.sup_on(fd)?;
    let grid = DiskMesh::new(mesh)?;
    let gens = generators_from_domain(fd);
    let max_steps = reduction_cap(orbit);
    let evaluated: Vec<(f64, f64, f64)> = grid
        .points()
        .par_iter()
        .map(|p| {
            let weight = 1.0 / (1.0 - p.z.norm_sqr());
            let on_f = if fd.contains(p.z, 0.0) {
                mu.modulus(p.z).powi(2) * weight
            } else {
                0.0
            };
            match reduce_to_domain(fd, &gens, p.z, max_steps) {
                Ok(red) => (on_f, mu.modulus(red.point).powi(2) * weight, 0.0),
                Err(_) => (on_f, 0.0, sup * sup * weight),
            }
        })
        .collect();
    let covered: f64 = grid.points().iter().zip(&evaluated).map(|(p, v)| p.weight * v.1).sum();
    let missing: f64 = grid.points().iter().zip(&evaluated).map(|(p, v)| p.weight * v.2).sum();
    let uncovered_fraction = if missing == 0.0 {
        0.0
    } else {
        missing / (covered + missing)
    };
    if uncovered_fraction > MAX_UNCOVERED {
        return Err(LabError::InsufficientBudget {
            fraction: uncovered_fraction,
        });
    }
    let norm_on_f = mesh_norm_on_curve(
        &grid,
        evaluated.iter().map(|v| v.0).collect(),
        &fd.boundary_curve(),
        sampling,
    )?;
    let norm_on_disk = mesh_norm(&grid, evaluated.iter().map(|v| v.1).collect(), sampling)?;
    Ok(BeltramiReport {
        label: mu.label.clone(),
        norm_on_f,
        norm_on_disk,
        uncovered_fraction,
        max_steps,
        mesh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denjoy::{circle_model, triadic_cantor, two_gap_pair};
    use crate::fuchsian::{boundary_orbit_length_sum, enumerate_group};
    use crate::hyperbolic::MoebiusMap;
    use crate::quadrature::integrate_adaptive;
    use proptest::prelude::*;

    fn homogeneous() -> FundamentalDomain {
        circle_model(&two_gap_pair(1.0).unwrap(), None).unwrap()
    }

    fn orbit(fd: &FundamentalDomain, l: usize) -> OrbitSummary {
        enumerate_group(&generators_from_domain(fd), &Budget::word_length(l)).unwrap()
    }

    fn diameter() -> DiscreteMeasure {
        DiscreteMeasure::arclength(&[Arc::Segment {
            from: C64::new(-1.0, 0.0),
            to: C64::new(1.0, 0.0),
        }])
        .unwrap()
    }

    /// Length of (-1, 1) inside D(z, r), from the chord of the circle cut by
    /// the real line.
    fn chord_mass(z: C64, r: f64) -> f64 {
        let h = z.im.abs();
        if h >= r {
            return 0.0;
        }
        let half = (r * r - h * h).sqrt();
        ((z.re + half).min(1.0) - (z.re - half).max(-1.0)).max(0.0)
    }

    #[test]
    fn single_atom_at_origin() {
        let m = DiscreteMeasure::new(vec![(C64::new(0.0, 0.0), 1.0)], vec![]).unwrap();
        let n = carleson_norm(&m, Sampling::default()).unwrap();
        assert!((n.value - 1.0).abs() < 1e-12);
        assert!((n.radius - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diameter_matches_grid_oracle() {
        let n = carleson_norm(&diameter(), Sampling::default()).unwrap();
        let mut oracle: f64 = 0.0;
        for i in 0..2000 {
            let z = C64::from_polar(1.0, std::f64::consts::TAU * i as f64 / 2000.0);
            for j in 1..2000 {
                let r = 2.0 * j as f64 / 2000.0;
                oracle = oracle.max(chord_mass(z, r) / r);
            }
        }
        assert!((n.value - 2f64.sqrt()).abs() < 1e-9, "{}", n.value);
        assert!((n.value - oracle).abs() / oracle < 1e-2);
        assert!((n.center.im.abs() - 1.0).abs() < 1e-6);
        assert!((n.radius - 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn zero_measure() {
        assert_eq!(
            carleson_norm(&DiscreteMeasure::zero(), Sampling::default())
                .unwrap()
                .value,
            0.0
        );
    }

    #[test]
    fn rejects_support_outside_disk() {
        assert!(DiscreteMeasure::new(vec![(C64::new(1.5, 0.0), 1.0)], vec![]).is_err());
        assert!(DiscreteMeasure::new(vec![(C64::new(0.0, 0.0), -1.0)], vec![]).is_err());
    }

    #[test]
    fn index_agrees_with_direct_sum() {
        let fd = homogeneous();
        let orb = orbit(&fd, 3);
        let nu = DiscreteMeasure::new(
            vec![(C64::new(0.1, 0.2), 0.5)],
            fd.edges().iter().map(|&arc| ArcPiece { arc, density: 2.0 }).collect(),
        )
        .unwrap();
        let tilde = orbit_pushforward(&fd, &nu, &orb).unwrap();
        let index = MeasureIndex::new(&tilde);
        for k in 0..40 {
            let z = C64::from_polar(1.0, 0.37 * k as f64);
            let r = 0.03 + 0.05 * k as f64;
            let a = index.ball_mass(z, r).unwrap();
            let b = tilde.ball_mass(z, r);
            assert!((a - b).abs() <= 1e-12 * (1.0 + b), "{a} vs {b}");
        }
    }

    #[test]
    fn pushforward_of_atom() {
        let fd = homogeneous();
        let mut orb = orbit(&fd, 0);
        orb.elements[0].map = MoebiusMap::disk_automorphism(C64::new(0.5, 0.0)).unwrap();
        let nu = DiscreteMeasure::new(vec![(C64::new(0.0, 0.0), 1.0)], vec![]).unwrap();
        let t = orbit_pushforward(&fd, &nu, &orb).unwrap();
        assert!((t.atoms[0].0 - C64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((t.atoms[0].1 - 0.75).abs() < 1e-15);
    }

    #[test]
    fn identity_orbit_leaves_measure_unchanged() {
        let fd = homogeneous();
        let nu = DiscreteMeasure::arclength(&fd.edges()).unwrap();
        let t = orbit_pushforward(&fd, &nu, &orbit(&fd, 0)).unwrap();
        assert!((t.total_mass() - nu.total_mass()).abs() < 1e-14);
        for (a, b) in t.pieces.iter().zip(&nu.pieces) {
            for (p, q) in a.arc.sample(5).iter().zip(b.arc.sample(5)) {
                assert!((p - q).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_support_outside_domain() {
        let fd = homogeneous();
        let outside = generators_from_domain(&fd)[0].map.apply_c(C64::new(0.0, 0.0));
        let nu = DiscreteMeasure::new(vec![(outside, 1.0)], vec![]).unwrap();
        assert!(orbit_pushforward(&fd, &nu, &orbit(&fd, 1)).is_err());
    }

    #[test]
    fn image_mass_matches_integrated_derivative() {
        let fd = homogeneous();
        let orb = orbit(&fd, 3);
        let nu = DiscreteMeasure::arclength(&fd.edges()).unwrap();
        for e in orb.elements.iter().step_by(7) {
            for p in &nu.pieces {
                let exact = p.arc.image(&e.map).length();
                let len = p.arc.length();
                let (num, _) = integrate_adaptive(0.0, 1.0, 1e-10, 1 << 12, |s| {
                    len * e.map.derivative_modulus(p.arc.point_at(s)).unwrap()
                })
                .unwrap();
                assert!((exact - num).abs() <= 1e-6 * num, "{exact} vs {num}");
            }
        }
    }

    #[test]
    fn tilde_mass_equals_orbit_length_sum() {
        let fd = homogeneous();
        let orb = orbit(&fd, 4);
        let nu = DiscreteMeasure::arclength(&fd.edges()).unwrap();
        let tilde = orbit_pushforward(&fd, &nu, &orb).unwrap();
        let sum = boundary_orbit_length_sum(&fd, &orb).value;
        assert!((tilde.total_mass() - sum).abs() <= 1e-10 * sum);
        let per: f64 = transported_masses(&fd, &nu, &orb).unwrap().iter().sum();
        assert!((tilde.total_mass() - per).abs() <= 1e-10 * sum);
    }

    #[test]
    fn h_probe_on_homogeneous_domain_is_stable() {
        let fd = homogeneous();
        let nu = DiscreteMeasure::arclength(&fd.edges()).unwrap();
        let s = Sampling {
            boundary_net: 64,
            radii: 10,
        };
        let a = property_h_probe(&fd, &orbit(&fd, 2), &nu, s).unwrap();
        let b = property_h_probe(&fd, &orbit(&fd, 3), &nu, s).unwrap();
        assert!(b.norm_tilde.value >= a.norm_tilde.value);
        assert!(finite_and_stable(a.norm_tilde.value, b.norm_tilde.value, 0.05));
        let zero = property_h_probe(&fd, &orbit(&fd, 2), &DiscreteMeasure::zero(), s).unwrap();
        assert_eq!((zero.norm_on_f.value, zero.norm_tilde.value), (0.0, 0.0));
    }

    #[test]
    fn h_probe_grows_with_cantor_depth() {
        let s = Sampling {
            boundary_net: 64,
            radii: 10,
        };
        let mut prev = 0.0;
        for d in 1..=3 {
            let fd = circle_model(&triadic_cantor(d), None).unwrap();
            let nu = DiscreteMeasure::arclength(&fd.edges()).unwrap();
            let v = property_h_probe(&fd, &orbit(&fd, 2), &nu, s).unwrap().norm_tilde.value;
            assert!(v > prev, "depth {d}: {v} <= {prev}");
            prev = v;
        }
    }

    fn small_mesh() -> MeshSpec {
        MeshSpec {
            rings: 8,
            base_angular: 32,
            radial: 2,
            order: 3,
        }
    }

    #[test]
    fn beltrami_zero_and_scaling() {
        let fd = homogeneous();
        let orb = orbit(&fd, 4);
        let s = Sampling {
            boundary_net: 32,
            radii: 8,
        };
        let z = beltrami_carleson_check(&BeltramiDensity::zero(), &fd, &orb, small_mesh(), s).unwrap();
        assert_eq!((z.norm_on_f.value, z.norm_on_disk.value), (0.0, 0.0));
        let a = beltrami_carleson_check(&BeltramiDensity::rim_vanishing(0.2), &fd, &orb, small_mesh(), s).unwrap();
        let b = beltrami_carleson_check(&BeltramiDensity::rim_vanishing(0.4), &fd, &orb, small_mesh(), s).unwrap();
        assert!(a.norm_on_disk.value.is_finite() && a.norm_on_disk.value > 0.0);
        assert!((b.norm_on_disk.value / a.norm_on_disk.value - 4.0).abs() < 1e-9);
        assert!((b.norm_on_f.value / a.norm_on_f.value - 4.0).abs() < 1e-9);
        assert!(a.norm_on_f.value <= a.norm_on_disk.value);
        assert!(a.uncovered_fraction <= MAX_UNCOVERED);
    }

    #[test]
    fn constant_beltrami_diverges_at_the_rim() {
        let fd = homogeneous();
        let err = beltrami_carleson_check(
            &BeltramiDensity::constant(0.3),
            &fd,
            &orbit(&fd, 4),
            small_mesh(),
            Sampling {
                boundary_net: 32,
                radii: 8,
            },
        )
        .unwrap_err();
        assert!(matches!(err, LabError::Divergent { .. }), "{err}");
    }

    #[test]
    fn rejects_large_beltrami() {
        let fd = homogeneous();
        assert!(beltrami_carleson_check(
            &BeltramiDensity::constant(1.0),
            &fd,
            &orbit(&fd, 1),
            small_mesh(),
            Sampling::default()
        )
        .is_err());
    }

    #[test]
    fn shallow_budget_is_flagged() {
        let fd = circle_model(&triadic_cantor(3), None).unwrap();
        let err = beltrami_carleson_check(
            &BeltramiDensity::rim_vanishing(0.5),
            &fd,
            &orbit(&fd, 0),
            small_mesh(),
            Sampling {
                boundary_net: 16,
                radii: 4,
            },
        )
        .unwrap_err();
        assert!(matches!(err, LabError::InsufficientBudget { .. }), "{err}");
    }

    #[test]
    fn density_norm_of_area_measure() {
        // normalized area near a boundary point: |D(z, r) ∩ 𝔻| / r peaks at
        // an interior radius and is bounded by π r / 2 for small r
        let m = DensityMeasure::new(|_| 1.0, Support::Disk);
        let n = carleson_norm_density(&m, small_mesh(), Sampling::default()).unwrap();
        assert!(n.value > 1.0 && n.value < 2.0, "{}", n.value);
    }

    #[test]
    fn csv_and_json_exports() {
        let m = DiscreteMeasure::new(
            vec![(C64::new(0.5, 0.0), 2.0)],
            vec![ArcPiece {
                arc: Arc::Segment {
                    from: C64::new(0.0, 0.0),
                    to: C64::new(0.0, 0.5),
                },
                density: 3.0,
            }],
        )
        .unwrap();
        assert_eq!(m.atoms_csv(), "re,im,mass\n0.5,0,2\n");
        let j = m.pieces_json();
        assert_eq!(j[0]["kind"], "segment");
        assert_eq!(j[0]["mass"], 1.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn norm_is_homogeneous_for_atoms(
            atoms in prop::collection::vec((0.0..0.99f64, 0.0..6.3f64, 0.01..3.0f64), 1..6),
            c in 0.01..100.0f64,
        ) {
            let m = DiscreteMeasure::new(atoms.iter().map(|&(r, t, w)| (C64::from_polar(r, t), w)).collect(), vec![]).unwrap();
            let s = Sampling { boundary_net: 32, radii: 8 };
            let a = carleson_norm(&m, s).unwrap().value;
            let b = carleson_norm(&m.scaled(c).unwrap(), s).unwrap().value;
            prop_assert!((b - c * a).abs() <= 1e-12 * c * a);
        }

        #[test]
        fn pushforward_mass_is_order_independent(seed in 0u64..1000) {
            let fd = homogeneous();
            let mut orb = orbit(&fd, 3);
            let nu = DiscreteMeasure::arclength(&fd.edges()).unwrap();
            let forward: f64 = transported_masses(&fd, &nu, &orb).unwrap().iter().sum();
            let n = orb.elements.len();
            orb.elements.rotate_left((seed as usize) % n);
            orb.elements.reverse();
            let shuffled = orbit_pushforward(&fd, &nu, &orb).unwrap().total_mass();
            prop_assert!((forward - shuffled).abs() <= 1e-10 * forward);
        }
    }
}
