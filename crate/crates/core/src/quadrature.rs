//! Gauss–Legendre rules and a polar mesh of the disk graded toward the rim.

use std::f64::consts::{PI, TAU};
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [0, 1].
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(n.max(1)).expect("nonzero");
    let mut out: Vec<(f64, f64)> = GaussLegendre::new(n)
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// `∫_a^b f` by composite Gauss–Legendre with `panels` equal panels of `n` nodes.
pub fn integrate(a: f64, b: f64, panels: usize, n: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let rule = gauss_legendre_unit(n);
    let h = (b - a) / panels.max(1) as f64;
    let mut total = 0.0;
    for p in 0..panels.max(1) {
        let x0 = a + p as f64 * h;
        total += rule.iter().map(|&(x, w)| w * f(x0 + h * x)).sum::<f64>() * h;
    }
    total
}

/// Adaptive Gauss–Legendre: halves panels until two consecutive levels agree to
/// `rel`. Returns the value and the number of panels used.
pub fn integrate_adaptive(
    a: f64,
    b: f64,
    rel: f64,
    max_panels: usize,
    mut f: impl FnMut(f64) -> f64,
) -> Option<(f64, usize)> {
    let mut panels = 1;
    let mut prev = integrate(a, b, panels, 8, &mut f);
    while panels < max_panels {
        panels *= 2;
        let next = integrate(a, b, panels, 8, &mut f);
        if (next - prev).abs() <= rel * next.abs().max(f64::MIN_POSITIVE) {
            return Some((next, panels));
        }
        prev = next;
    }
    None
}

/// Resolution of a [`DiskMesh`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    /// Ring `k ≥ 1` covers `1 - 2^{-k} ≤ |z| ≤ 1 - 2^{-k-1}`; ring 0 is `|z| ≤ 1/2`.
    pub rings: usize,
    /// Angular cells in ring 0; ring `k` has `base_angular · 2^k`.
    pub base_angular: usize,
    /// Radial cells per ring.
    pub radial: usize,
    /// Gauss–Legendre order per cell and direction.
    pub order: usize,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self {
            rings: 10,
            base_angular: 32,
            radial: 2,
            order: 3,
        }
    }
}

impl MeshSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rings < 2 || self.rings > 20 || self.base_angular < 4 || self.radial == 0 || self.order == 0 {
            return Err(invalid(
                "mesh needs 2..=20 rings, at least 4 angular cells and positive order",
            ));
        }
        Ok(())
    }

    /// One more ring and twice the angular resolution.
    pub fn refined(&self) -> Self {
        Self {
            rings: self.rings + 1,
            base_angular: self.base_angular * 2,
            radial: self.radial,
            order: self.order,
        }
    }

    /// Innermost radius not covered by the mesh.
    pub fn rim_gap(&self) -> f64 {
        0.5f64.powi(self.rings as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshPoint {
    pub z: C64,
    pub weight: f64,
    /// Polar angle in [0, 2π).
    pub angle: f64,
}

/// Tensor Gauss–Legendre points on polar cells whose size is proportional to
/// the distance to the unit circle. Points of each ring are sorted by angle,
/// so ball queries only scan an angular window per ring.
#[derive(Clone, Debug)]
pub struct DiskMesh {
    spec: MeshSpec,
    points: Vec<MeshPoint>,
    offsets: Vec<usize>,
    bounds: Vec<(f64, f64)>,
    /// Index of the circle `|w| = ρ` each point lies on, within its ring.
    level: Vec<u32>,
    /// Radii of those circles per ring.
    level_rho: Vec<Vec<f64>>,
}

impl DiskMesh {
    pub fn new(spec: MeshSpec) -> Result<Self> {
        spec.validate()?;
        let rule = gauss_legendre_unit(spec.order);
        let mut points = Vec::new();
        let mut offsets = vec![0];
        let mut bounds = Vec::new();
        let mut level = Vec::new();
        let mut level_rho = Vec::new();
        for k in 0..spec.rings {
            let (r0, r1) = if k == 0 {
                (0.0, 0.5)
            } else {
                (1.0 - 0.5f64.powi(k as i32), 1.0 - 0.5f64.powi(k as i32 + 1))
            };
            bounds.push((r0, r1));
            let cells = spec.base_angular << k;
            let dt = TAU / cells as f64;
            let h = (r1 - r0) / spec.radial as f64;
            level_rho.push(
                (0..spec.radial)
                    .flat_map(|j| rule.iter().map(move |&(v, _)| r0 + (j as f64 + v) * h))
                    .collect::<Vec<_>>(),
            );
            let mut ring = Vec::new();
            for c in 0..cells {
                for &(u, wu) in &rule {
                    let t = (c as f64 + u) * dt;
                    for j in 0..spec.radial {
                        for (vi, &(v, wv)) in rule.iter().enumerate() {
                            let rho = r0 + (j as f64 + v) * h;
                            let p = MeshPoint {
                                z: C64::from_polar(rho, t),
                                weight: wu * dt * wv * h * rho,
                                angle: t,
                            };
                            ring.push((p, (j * rule.len() + vi) as u32));
                        }
                    }
                }
            }
            ring.sort_by(|a, b| a.0.angle.total_cmp(&b.0.angle));
            points.extend(ring.iter().map(|x| x.0));
            level.extend(ring.iter().map(|x| x.1));
            offsets.push(points.len());
        }
        Ok(Self {
            spec,
            points,
            offsets,
            bounds,
            level,
            level_rho,
        })
    }

    pub fn spec(&self) -> MeshSpec {
        self.spec
    }

    pub fn points(&self) -> &[MeshPoint] {
        &self.points
    }

    pub fn ring_count(&self) -> usize {
        self.spec.rings
    }

    pub fn ring_range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    /// Per-ring sums of `weight · values[i]` over mesh points in the closed
    /// disk `|w - z| ≤ r`.
    pub fn ring_sums(&self, values: &[f64], z: C64, r: f64) -> Vec<f64> {
        self.ring_sums_in(values, z, r, |w| (w - z).norm_sqr() <= r * r)
    }

    /// Per-ring sums over the mesh points of `D(z, r)` satisfying `inside`.
    pub fn ring_sums_in(&self, values: &[f64], z: C64, r: f64, inside: impl Fn(C64) -> bool) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.rings];
        let dz = z.norm();
        let phi = z.arg().rem_euclid(TAU);
        for (k, &(r0, r1)) in self.bounds.iter().enumerate() {
            if dz + r < r0 || dz - r > r1 {
                continue;
            }
            let range = self.ring_range(k);
            let ring = &self.points[range.clone()];
            let half = angular_half_width(dz, r, r0, r1);
            let mut add = |i: usize| {
                let p = &ring[i];
                if inside(p.z) {
                    out[k] += p.weight * values[range.start + i];
                }
            };
            if half >= PI {
                (0..ring.len()).for_each(&mut add);
                continue;
            }
            for (lo, hi) in wrap_window(phi - half, phi + half) {
                let a = ring.partition_point(|p| p.angle < lo);
                let b = ring.partition_point(|p| p.angle <= hi);
                (a..b).for_each(&mut add);
            }
        }
        out
    }
}

/// Region of the plane measured by [`RingPrefix::ring_sums`].
#[derive(Clone, Copy, Debug)]
pub enum Region {
    /// Closed disk `|w - c| ≤ r`.
    Disk(C64, f64),
    /// Complement of the open disk `|w - c| < r`.
    Outside(C64, f64),
}

/// Angle-sorted prefix sums of `weight · value` on every circle of a mesh, so
/// the mass of a disk is a pair of lookups per circle.
#[derive(Clone, Debug)]
pub struct RingPrefix {
    circles: Vec<Vec<Circle>>,
}

#[derive(Clone, Debug)]
struct Circle {
    rho: f64,
    angles: Vec<f64>,
    /// Running sums, one longer than `angles`.
    sums: Vec<f64>,
    /// Quadrature area carried by the circle.
    area: f64,
}

impl DiskMesh {
    pub fn prefix(&self, values: &[f64]) -> RingPrefix {
        let circles = (0..self.spec.rings)
            .map(|k| {
                let mut out: Vec<_> = self.level_rho[k]
                    .iter()
                    .map(|&rho| Circle {
                        rho,
                        angles: Vec::new(),
                        sums: vec![0.0],
                        area: 0.0,
                    })
                    .collect();
                for i in self.ring_range(k) {
                    let c = &mut out[self.level[i] as usize];
                    let p = &self.points[i];
                    c.angles.push(p.angle);
                    c.sums.push(c.sums[c.sums.len() - 1] + p.weight * values[i]);
                    c.area += p.weight;
                }
                out
            })
            .collect();
        RingPrefix { circles }
    }
}

impl RingPrefix {
    /// Per-ring sums over the mesh points in `region`.
    pub fn ring_sums(&self, region: Region) -> Vec<f64> {
        self.ring_sums_and_areas(region).0
    }

    /// Per-ring sums together with the per-ring area of `region`, the latter
    /// from the share of each circle inside it.
    pub fn ring_sums_and_areas(&self, region: Region) -> (Vec<f64>, Vec<f64>) {
        let (c, r, outside) = match region {
            Region::Disk(c, r) => (c, r, false),
            Region::Outside(c, r) => (c, r, true),
        };
        let d = c.norm();
        let psi = c.arg();
        let mut sums = vec![0.0; self.circles.len()];
        let mut areas = vec![0.0; self.circles.len()];
        for (k, ring) in self.circles.iter().enumerate() {
            for Circle {
                rho,
                angles,
                sums: prefix,
                area,
            } in ring
            {
                let total = prefix[prefix.len() - 1];
                let (mut inner, mut share) = match disk_arc(*rho, d, r) {
                    None => (0.0, 0.0),
                    Some(half) if half >= PI => (total, 1.0),
                    Some(half) => {
                        let m = wrap_window(psi - half, psi + half)
                            .into_iter()
                            .map(|(lo, hi)| {
                                let a = angles.partition_point(|t| *t < lo);
                                let b = angles.partition_point(|t| *t <= hi);
                                prefix[b] - prefix[a]
                            })
                            .sum();
                        (m, half / PI)
                    }
                };
                if outside {
                    inner = total - inner;
                    share = 1.0 - share;
                }
                sums[k] += inner;
                areas[k] += share * area;
            }
        }
        (sums, areas)
    }
}

/// Half-width of the arc of `|w| = ρ` inside the closed disk of radius `r`
/// centred at distance `d` from the origin; `None` when they miss.
fn disk_arc(rho: f64, d: f64, r: f64) -> Option<f64> {
    if rho + d <= r {
        return Some(PI);
    }
    if d == 0.0 || rho == 0.0 {
        return None;
    }
    let k = (rho * rho + d * d - r * r) / (2.0 * rho * d);
    if k > 1.0 {
        None
    } else if k <= -1.0 {
        Some(PI)
    } else {
        Some(k.acos())
    }
}

/// Largest angle, seen from the origin, between `z` (at distance `dz`) and a
/// point of the annulus `r0 ≤ |w| ≤ r1` within distance `r` of `z`.
fn angular_half_width(dz: f64, r: f64, r0: f64, r1: f64) -> f64 {
    if dz <= r || r0 == 0.0 {
        return PI;
    }
    let cos_at = |rho: f64| (rho * rho + dz * dz - r * r) / (2.0 * rho * dz);
    let mut c = cos_at(r0.max(1e-300)).min(cos_at(r1));
    let star = (dz * dz - r * r).sqrt();
    if star > r0 && star < r1 {
        c = c.min(cos_at(star));
    }
    if c <= -1.0 {
        PI
    } else {
        c.min(1.0).acos() + 1e-12
    }
}

fn wrap_window(lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let start = lo.rem_euclid(TAU);
    let end = start + (hi - lo);
    if end < TAU {
        vec![(start, end)]
    } else {
        vec![(start, TAU), (0.0, end - TAU)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Area of D(0, big) ∩ D(d, r) for intersecting circles.
    fn lens_area(d: f64, big: f64, r: f64) -> f64 {
        let a = ((d * d + r * r - big * big) / (2.0 * d * r)).clamp(-1.0, 1.0).acos();
        let b = ((d * d + big * big - r * r) / (2.0 * d * big)).clamp(-1.0, 1.0).acos();
        let k = (-d + r + big) * (d + r - big) * (d - r + big) * (d + r + big);
        r * r * a + big * big * b - 0.5 * k.max(0.0).sqrt()
    }

    #[test]
    fn rules_integrate_polynomials() {
        let v = integrate(0.0, 2.0, 1, 4, |x| x.powi(7));
        assert!((v - 32.0).abs() < 1e-12);
        let (v, _) = integrate_adaptive(0.0, 3.0, 1e-13, 64, |x| (5.0 * x).sin().exp()).unwrap();
        let fine = integrate(0.0, 3.0, 256, 8, |x| (5.0 * x).sin().exp());
        assert!((v - fine).abs() < 1e-11);
    }

    #[test]
    fn mesh_total_area() {
        let mesh = DiskMesh::new(MeshSpec::default()).unwrap();
        let ones = vec![1.0; mesh.points().len()];
        let total: f64 = mesh.ring_sums(&ones, C64::new(0.0, 0.0), 2.0).iter().sum();
        let covered = PI * (1.0 - mesh.spec().rim_gap()).powi(2);
        assert!((total - covered).abs() < 1e-12);
    }

    #[test]
    fn ball_areas_match_lens_formula() {
        let mesh = DiskMesh::new(MeshSpec {
            rings: 12,
            base_angular: 32,
            radial: 2,
            order: 3,
        })
        .unwrap();
        let ones = vec![1.0; mesh.points().len()];
        for (k, r) in [1.5, 1.0, 0.5, 0.25, 0.1, 1.0 / 32.0].into_iter().enumerate() {
            let theta = 0.3 + k as f64;
            let z = C64::from_polar(1.0, theta);
            let got: f64 = mesh.ring_sums(&ones, z, r).iter().sum();
            let exact = lens_area(1.0, 1.0 - mesh.spec().rim_gap(), r);
            assert!((got - exact).abs() / exact < 1e-2, "r={r}: {got} vs {exact}");
        }
    }

    #[test]
    fn windows_wrap_around_zero() {
        let mesh = DiskMesh::new(MeshSpec::default()).unwrap();
        let ones = vec![1.0; mesh.points().len()];
        let a: f64 = mesh.ring_sums(&ones, C64::new(1.0, 0.0), 0.3).iter().sum();
        let b: f64 = mesh.ring_sums(&ones, C64::new(-1.0, 0.0), 0.3).iter().sum();
        assert!((a - b).abs() / a < 1e-2);
    }

    #[test]
    fn prefix_sums_agree_with_point_scans() {
        let mesh = DiskMesh::new(MeshSpec {
            rings: 6,
            base_angular: 8,
            radial: 2,
            order: 3,
        })
        .unwrap();
        let values: Vec<f64> = mesh.points().iter().map(|p| 1.0 + p.z.re + 0.5 * p.angle).collect();
        let prefix = mesh.prefix(&values);
        let total: f64 = mesh.ring_sums(&values, C64::new(0.0, 0.0), 2.0).iter().sum();
        let cases = [
            (C64::new(0.9, 0.2), 0.3),
            (C64::new(-0.99, 0.05), 0.7),
            (C64::new(0.0, 0.1), 0.45),
            (C64::new(2.0, -1.0), 1.9),
        ];
        for (c, r) in cases {
            let scan = mesh.ring_sums(&values, c, r);
            let fast = prefix.ring_sums(Region::Disk(c, r));
            for (a, b) in scan.iter().zip(&fast) {
                assert!((a - b).abs() < 1e-12, "{c} {r}: {a} vs {b}");
            }
            let out: f64 = prefix.ring_sums(Region::Outside(c, r)).iter().sum();
            assert!((out + fast.iter().sum::<f64>() - total).abs() < 1e-12);
        }
    }
}
