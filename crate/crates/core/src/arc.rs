//! Circular arcs and segments: closed-form length, Moebius images and
//! intersection length with closed disks.

use std::f64::consts::{PI, TAU};

use crate::hyperbolic::{Carrier, Geodesic, MoebiusMap, Point, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Arc {
    /// Points `center + radius e^{i(start + s sweep)}`, `s` in [0, 1]; the sweep is signed.
    Circular {
        center: C64,
        radius: f64,
        start: f64,
        sweep: f64,
    },
    Segment {
        from: C64,
        to: C64,
    },
}

impl Arc {
    pub fn unit_circle(start: f64, sweep: f64) -> Self {
        Arc::Circular {
            center: C64::new(0.0, 0.0),
            radius: 1.0,
            start,
            sweep,
        }
    }

    /// The part of a disk-model geodesic inside the disk, oriented from its first
    /// endpoint to its second.
    pub fn from_geodesic(g: &Geodesic) -> Self {
        let (p, q) = match g.endpoints() {
            (Point::Finite(p), Point::Finite(q)) => (p, q),
            _ => panic!("disk geodesics have finite endpoints"),
        };
        match g.carrier() {
            Carrier::Line { .. } => Arc::Segment { from: p, to: q },
            Carrier::Circle { center, radius } => {
                let (start, sweep) = crate::hyperbolic::interior_sweep(center, p, q, g.model());
                Arc::Circular {
                    center,
                    radius,
                    start,
                    sweep,
                }
            }
        }
    }

    /// Arc from `p` through `m` to `q`; a segment when the three points are collinear.
    pub fn through(p: C64, m: C64, q: C64) -> Self {
        let (b, c) = (m - p, q - p);
        let cross = b.re * c.im - b.im * c.re;
        let scale = b.norm() * c.norm();
        if cross.abs() <= 1e-13 * scale {
            return Arc::Segment { from: p, to: q };
        }
        let d = 2.0 * cross;
        let ux = (c.im * b.norm_sqr() - b.im * c.norm_sqr()) / d;
        let uy = (b.re * c.norm_sqr() - c.re * b.norm_sqr()) / d;
        let center = p + C64::new(ux, uy);
        let radius = (p - center).norm();
        let start = (p - center).arg();
        let rel = |z: C64| ((z - center).arg() - start).rem_euclid(TAU);
        let (am, aq) = (rel(m), rel(q));
        let sweep = if am <= aq { aq } else { aq - TAU };
        Arc::Circular {
            center,
            radius,
            start,
            sweep,
        }
    }

    pub fn point_at(&self, s: f64) -> C64 {
        match *self {
            Arc::Circular {
                center,
                radius,
                start,
                sweep,
            } => center + C64::from_polar(radius, start + s * sweep),
            Arc::Segment { from, to } => from + (to - from) * s,
        }
    }

    pub fn start_point(&self) -> C64 {
        self.point_at(0.0)
    }

    pub fn end_point(&self) -> C64 {
        self.point_at(1.0)
    }

    pub fn length(&self) -> f64 {
        match *self {
            Arc::Circular { radius, sweep, .. } => radius * sweep.abs(),
            Arc::Segment { from, to } => (to - from).norm(),
        }
    }

    /// `n + 1` points including both endpoints.
    pub fn sample(&self, n: usize) -> Vec<C64> {
        let n = n.max(1);
        (0..=n).map(|k| self.point_at(k as f64 / n as f64)).collect()
    }

    pub fn reversed(&self) -> Self {
        match *self {
            Arc::Circular {
                center,
                radius,
                start,
                sweep,
            } => Arc::Circular {
                center,
                radius,
                start: start + sweep,
                sweep: -sweep,
            },
            Arc::Segment { from, to } => Arc::Segment { from: to, to: from },
        }
    }

    /// Image under a Moebius map with no pole on the arc. Circles go to circles, so
    /// three points determine the image exactly.
    pub fn image(&self, m: &MoebiusMap) -> Arc {
        Arc::through(
            m.apply_c(self.point_at(0.0)),
            m.apply_c(self.point_at(0.5)),
            m.apply_c(self.point_at(1.0)),
        )
    }

    pub fn rotated(&self, theta: f64) -> Arc {
        let r = C64::from_polar(1.0, theta);
        match *self {
            Arc::Circular {
                center,
                radius,
                start,
                sweep,
            } => Arc::Circular {
                center: center * r,
                radius,
                start: start + theta,
                sweep,
            },
            Arc::Segment { from, to } => Arc::Segment {
                from: from * r,
                to: to * r,
            },
        }
    }

    /// Length of the part of the arc inside the closed disk |w - z| <= r.
    pub fn length_in_disk(&self, z: C64, r: f64) -> f64 {
        match *self {
            Arc::Segment { from, to } => {
                let d = to - from;
                let a = d.norm_sqr();
                if a == 0.0 {
                    return 0.0;
                }
                let w = from - z;
                let b = (d.conj() * w).re;
                let c = w.norm_sqr() - r * r;
                let disc = b * b - a * c;
                if disc <= 0.0 {
                    return 0.0;
                }
                let sq = disc.sqrt();
                let t0 = ((-b - sq) / a).max(0.0);
                let t1 = ((-b + sq) / a).min(1.0);
                (t1 - t0).max(0.0) * a.sqrt()
            }
            Arc::Circular {
                center,
                radius,
                start,
                sweep,
            } => {
                let dist = (z - center).norm();
                if dist + radius <= r {
                    return radius * sweep.abs();
                }
                if dist >= radius + r || radius >= dist + r {
                    return 0.0;
                }
                let cos_beta = (radius * radius + dist * dist - r * r) / (2.0 * radius * dist);
                let beta = cos_beta.clamp(-1.0, 1.0).acos();
                let phi = (z - center).arg();
                let (s0, w) = if sweep >= 0.0 {
                    (start, sweep)
                } else {
                    (start + sweep, -sweep)
                };
                radius * angular_overlap(s0, w, phi - beta, 2.0 * beta)
            }
        }
    }

    /// Euclidean distance from `z` to the arc.
    pub fn distance_to(&self, z: C64) -> f64 {
        match *self {
            Arc::Segment { from, to } => {
                let d = to - from;
                let t = ((z - from) * d.conj()).re / d.norm_sqr().max(f64::MIN_POSITIVE);
                (z - (from + d * t.clamp(0.0, 1.0))).norm()
            }
            Arc::Circular {
                center,
                radius,
                start,
                sweep,
            } => {
                let (s0, w) = if sweep >= 0.0 {
                    (start, sweep)
                } else {
                    (start + sweep, -sweep)
                };
                let rel = ((z - center).arg() - s0).rem_euclid(TAU);
                if rel <= w {
                    ((z - center).norm() - radius).abs()
                } else {
                    let a = center + C64::from_polar(radius, s0);
                    let b = center + C64::from_polar(radius, s0 + w);
                    (z - a).norm().min((z - b).norm())
                }
            }
        }
    }
}

/// Total length of the intersection of the angular intervals [s0, s0 + w] and
/// [t0, t0 + v] taken modulo 2 pi (w, v <= 2 pi).
fn angular_overlap(s0: f64, w: f64, t0: f64, v: f64) -> f64 {
    let shift = (t0 - s0).rem_euclid(TAU);
    let mut total = 0.0;
    for k in -1..=1 {
        let a = shift + k as f64 * TAU;
        let lo = a.max(0.0);
        let hi = (a + v).min(w);
        if hi > lo {
            total += hi - lo;
        }
    }
    total.min(w).min(v.min(2.0 * PI))
}

/// Euclidean diameter of a finite union of arcs, from dense sampling refined
/// by local coordinate search on the best pair.
pub fn diameter_of_arcs(arcs: &[Arc], per_arc: usize) -> f64 {
    let samples: Vec<(usize, f64, C64)> = arcs
        .iter()
        .enumerate()
        .flat_map(|(i, a)| {
            (0..=per_arc).map(move |k| {
                let s = k as f64 / per_arc as f64;
                (i, s, a.point_at(s))
            })
        })
        .collect();
    let mut best = (0.0, 0usize, 0usize);
    for (p, &(_, _, z)) in samples.iter().enumerate() {
        for (q, &(_, _, w)) in samples.iter().enumerate().skip(p + 1) {
            let d = (z - w).norm();
            if d > best.0 {
                best = (d, p, q);
            }
        }
    }
    if samples.len() < 2 {
        return 0.0;
    }
    let (_, p, q) = best;
    let (ia, mut sa, _) = samples[p];
    let (ib, mut sb, _) = samples[q];
    let f = |sa: f64, sb: f64| (arcs[ia].point_at(sa) - arcs[ib].point_at(sb)).norm();
    let mut step = 1.0 / per_arc as f64;
    let mut val = f(sa, sb);
    while step > 1e-13 {
        let mut improved = false;
        for (da, db) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let (na, nb) = ((sa + da).clamp(0.0, 1.0), (sb + db).clamp(0.0, 1.0));
            let v = f(na, nb);
            if v > val {
                val = v;
                sa = na;
                sb = nb;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    val
}
