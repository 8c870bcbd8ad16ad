//! Transfinite diameter and logarithmic capacity of finite unions of real
//! intervals, via Fekete-point optimization.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};

/// A compact finite union of disjoint closed real intervals (degenerate
/// intervals are points).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactSet {
    intervals: Vec<(f64, f64)>,
}

impl CompactSet {
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        for &(a, b) in &intervals {
            if !(a.is_finite() && b.is_finite() && a <= b) {
                return Err(invalid(format!("bad compact interval [{a}, {b}]")));
            }
        }
        intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
        if intervals.windows(2).any(|w| w[0].1 >= w[1].0) {
            return Err(invalid("compact intervals overlap"));
        }
        Ok(Self { intervals })
    }

    /// Trusted constructor for already sorted, disjoint, finite intervals.
    pub(crate) fn from_sorted(intervals: Vec<(f64, f64)>) -> Self {
        debug_assert!(intervals.iter().all(|&(a, b)| a <= b && a.is_finite() && b.is_finite()));
        Self { intervals }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(|&(a, b)| b - a).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut iv: Vec<(f64, f64)> = self.intervals.iter().map(|&(a, b)| (s * a, s * b)).collect();
        if s < 0.0 {
            iv = iv.into_iter().rev().map(|(a, b)| (b, a)).collect();
        }
        Self { intervals: iv }
    }

    fn point_at(&self, u: f64) -> f64 {
        let total = self.total_length();
        let mut acc = 0.0;
        for &(a, b) in &self.intervals {
            if u * total <= acc + (b - a) {
                return a + (u * total - acc).max(0.0);
            }
            acc += b - a;
        }
        self.intervals.last().map(|&(_, b)| b).unwrap_or(0.0)
    }
}

/// Fekete configuration and its geometric-mean pairwise distance.
#[derive(Clone, Debug, Serialize)]
pub struct PointConfiguration {
    pub points: Vec<f64>,
    pub energy: f64,
}

/// `(∏_{j<k} |z_j - z_k|)^{2/(n(n-1))}`.
pub fn geometric_mean_distance(points: &[f64]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += (points[i] - points[j]).abs().ln();
        }
    }
    (2.0 * s / (n * (n - 1)) as f64).exp()
}

/// Best configuration found for `d_n(E)` by coordinate-exchange ascent from
/// `restarts` starting configurations (the first equispaced by arclength, the
/// rest random from `seed + restart`).
pub fn transfinite_diameter(e: &CompactSet, n: usize, restarts: usize, seed: u64) -> Result<PointConfiguration> {
    if n < 2 {
        return Err(invalid("n must be at least 2"));
    }
    if e.is_empty() {
        return Err(LabError::EmptySet);
    }
    let atoms = e.intervals.iter().filter(|&&(a, b)| a == b).count();
    if e.total_length() == 0.0 && n > atoms {
        return Ok(PointConfiguration {
            points: Vec::new(),
            energy: 0.0,
        });
    }
    let restarts = restarts.max(1);
    let best = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let init = if r == 0 {
                (0..n).map(|k| e.point_at(k as f64 / (n - 1) as f64)).collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
                let mut v: Vec<f64> = (0..n).map(|_| e.point_at(rng.gen::<f64>())).collect();
                v.sort_by(f64::total_cmp);
                v
            };
            ascend(e, init)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.energy.total_cmp(&b.energy).then(j.cmp(i)))
        .map(|(_, c)| c)
        .expect("at least one restart");
    if !(best.energy > 0.0) && e.total_length() > 0.0 {
        return Err(LabError::Optimizer(format!("no feasible {n}-point configuration")));
    }
    Ok(best)
}

fn log_energy(points: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            s += (points[i] - points[j]).abs().ln();
        }
    }
    s
}

/// Coordinate exchange: each point moves to the maximizer of
/// `Σ_k log|x - z_k|` over E. That function is concave between consecutive
/// other points, so each piece has one critical point, found by bisection on
/// the monotone derivative.
fn ascend(e: &CompactSet, mut pts: Vec<f64>) -> PointConfiguration {
    let n = pts.len();
    let mut energy = log_energy(&pts);
    for _sweep in 0..400 {
        for i in 0..n {
            let others: Vec<f64> = {
                let mut v: Vec<f64> = pts
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &x)| x)
                    .collect();
                v.sort_by(f64::total_cmp);
                v
            };
            let f = |x: f64| -> f64 { others.iter().map(|&z| (x - z).abs().ln()).sum() };
            let df = |x: f64| -> f64 { others.iter().map(|&z| 1.0 / (x - z)).sum() };
            let mut best_x = pts[i];
            let mut best_f = f(best_x);
            for &(a, b) in &e.intervals {
                let mut cuts = vec![a];
                cuts.extend(others.iter().copied().filter(|&z| z > a && z < b));
                cuts.push(b);
                for w in cuts.windows(2) {
                    let (lo, hi) = (w[0], w[1]);
                    let x = if lo == hi { lo } else { concave_argmax(lo, hi, &df) };
                    let v = f(x);
                    if v > best_f {
                        best_f = v;
                        best_x = x;
                    }
                }
            }
            pts[i] = best_x;
        }
        let next = log_energy(&pts);
        let done = next - energy <= 1e-14 * energy.abs().max(1.0);
        energy = next;
        if done {
            break;
        }
    }
    pts.sort_by(f64::total_cmp);
    let m = (n * (n - 1) / 2) as f64;
    PointConfiguration {
        energy: (energy / m).exp(),
        points: pts,
    }
}

fn concave_argmax(lo: f64, hi: f64, df: &impl Fn(f64) -> f64) -> f64 {
    let (mut l, mut h) = (lo, hi);
    // derivative is +∞ just right of a point of the configuration and -∞ just
    // left of one, so only finite endpoints of E can be maximizers at the ends
    if df(l) <= 0.0 && df(l).is_finite() {
        return l;
    }
    if df(h) >= 0.0 && df(h).is_finite() {
        return h;
    }
    for _ in 0..200 {
        let m = 0.5 * (l + h);
        if m <= l || m >= h {
            break;
        }
        if df(m) > 0.0 {
            l = m;
        } else {
            h = m;
        }
    }
    0.5 * (l + h)
}

/// Settings for [`capacity_estimate`].
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CapacityOptions {
    pub n_max: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        Self {
            n_max: 16,
            restarts: 4,
            seed: 0,
        }
    }
}

/// Capacity estimate with the raw Fekete table it was derived from.
#[derive(Clone, Debug, Serialize)]
pub struct CapacityEstimate {
    /// `(n, d_n)` for `n = 2..=n_max`.
    pub table: Vec<(usize, f64)>,
    pub raw: f64,
    pub extrapolated: f64,
    /// Coefficients `(log cap, a, b, c)` of the fit
    /// `log d_n = log cap + a log(n)/n + b/n + c/n²` over `n >= 3`.
    pub fit: [f64; 4],
}

/// Extrapolates `d_n`, `n = 2..=n_max`, to `n -> ∞` by least squares in log
/// space. A set of zero length has capacity 0.
pub fn capacity_estimate(e: &CompactSet, opts: &CapacityOptions) -> Result<CapacityEstimate> {
    if opts.n_max < 6 {
        return Err(invalid("n_max must be at least 6"));
    }
    if e.is_empty() {
        return Err(LabError::EmptySet);
    }
    if e.total_length() == 0.0 {
        return Ok(CapacityEstimate {
            table: Vec::new(),
            raw: 0.0,
            extrapolated: 0.0,
            fit: [f64::NEG_INFINITY, 0.0, 0.0, 0.0],
        });
    }
    let mut table = Vec::with_capacity(opts.n_max - 1);
    for n in 2..=opts.n_max {
        table.push((n, transfinite_diameter(e, n, opts.restarts, opts.seed)?.energy));
    }
    let rows: Vec<&(usize, f64)> = table.iter().filter(|(n, _)| *n >= 3).collect();
    let a = DMatrix::from_fn(rows.len(), 4, |i, j| {
        let n = rows[i].0 as f64;
        match j {
            0 => 1.0,
            1 => n.ln() / n,
            2 => 1.0 / n,
            _ => 1.0 / (n * n),
        }
    });
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|(_, d)| d.ln()));
    let coef = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|m| LabError::Optimizer(format!("capacity fit: {m}")))?;
    Ok(CapacityEstimate {
        raw: table.last().expect("n_max >= 6").1,
        extrapolated: coef[0].exp(),
        fit: [coef[0], coef[1], coef[2], coef[3]],
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> CompactSet {
        CompactSet::new(vec![(0.0, 1.0)]).unwrap()
    }

    #[test]
    fn two_points_give_the_diameter() {
        let c = transfinite_diameter(&unit(), 2, 1, 0).unwrap();
        assert_eq!(c.energy, 1.0);
        assert!(transfinite_diameter(&unit(), 1, 1, 0).is_err());
        assert!(transfinite_diameter(&CompactSet::new(vec![]).unwrap(), 3, 1, 0).is_err());
    }

    /// Exhaustive search with the two outer points pinned to the ends of E
    /// (pushing an extreme point outward increases every distance to it).
    fn grid_best(e: &CompactSet, n: usize, step: f64) -> f64 {
        let (lo, hi) = (e.intervals()[0].0, e.intervals().last().unwrap().1);
        let grid: Vec<f64> = (0..=((hi - lo) / step).round() as usize)
            .map(|k| lo + k as f64 * step)
            .filter(|&x| e.intervals().iter().any(|&(a, b)| x >= a - 1e-12 && x <= b + 1e-12))
            .collect();
        let mut best = f64::NEG_INFINITY;
        match n {
            3 => {
                for &x in &grid {
                    best = best.max(log_energy(&[lo, x, hi]));
                }
            }
            4 => {
                for (i, &x) in grid.iter().enumerate() {
                    for &y in &grid[i + 1..] {
                        best = best.max(log_energy(&[lo, x, y, hi]));
                    }
                }
            }
            _ => unreachable!(),
        }
        (best / (n * (n - 1) / 2) as f64).exp()
    }

    #[test]
    fn three_points_on_unit_interval() {
        let c = transfinite_diameter(&unit(), 3, 2, 0).unwrap();
        assert!((c.energy - 0.25f64.powf(1.0 / 3.0)).abs() < 1e-12);
        assert!((c.energy - grid_best(&unit(), 3, 1e-3)).abs() < 1e-3);
    }

    #[test]
    fn small_n_matches_grid_search() {
        let sets = [
            unit(),
            CompactSet::new(vec![(0.0, 1.0), (1.5, 3.0)]).unwrap(),
            CompactSet::new(vec![(-1.0, -0.2), (0.4, 1.0)]).unwrap(),
        ];
        for e in &sets {
            for n in [3, 4] {
                let got = transfinite_diameter(e, n, 4, 11).unwrap().energy;
                let grid = grid_best(e, n, 1e-3);
                assert!((got - grid).abs() < 1e-3, "n={n} {got} {grid}");
                assert!(got >= grid - 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_interval_decreases_to_one_half() {
        let e = CompactSet::new(vec![(-1.0, 1.0)]).unwrap();
        let est = capacity_estimate(&e, &CapacityOptions::default()).unwrap();
        for w in est.table.windows(2) {
            assert!(w[1].1 <= w[0].1 * (1.0 + 1e-4));
        }
        assert!((est.extrapolated - 0.5).abs() < 0.025, "{}", est.extrapolated);
    }

    #[test]
    fn point_sets_have_zero_capacity() {
        let e = CompactSet::new(vec![(0.0, 0.0), (1.0, 1.0)]).unwrap();
        let est = capacity_estimate(&e, &CapacityOptions::default()).unwrap();
        assert_eq!(est.extrapolated, 0.0);
        assert_eq!(transfinite_diameter(&e, 3, 1, 0).unwrap().energy, 0.0);
    }

    #[test]
    fn shrinking_sets_tend_to_zero() {
        let opts = CapacityOptions {
            n_max: 8,
            restarts: 1,
            seed: 0,
        };
        let caps: Vec<f64> = [1.0, 0.1, 0.01]
            .iter()
            .map(|&w| {
                capacity_estimate(&CompactSet::new(vec![(0.0, w)]).unwrap(), &opts)
                    .unwrap()
                    .extrapolated
            })
            .collect();
        assert!(caps[0] > caps[1] && caps[1] > caps[2] && caps[2] < 0.003);
    }

    fn union() -> impl Strategy<Value = CompactSet> {
        prop::collection::vec((0.05..1.0f64, 0.05..1.0f64), 1..3).prop_map(|parts| {
            let mut x = 0.0;
            let mut iv = Vec::new();
            for (gap, len) in parts {
                iv.push((x, x + len));
                x += len + gap;
            }
            CompactSet::new(iv).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn diameters_are_monotone_in_n(e in union()) {
            let mut prev = f64::INFINITY;
            for n in 2..=8 {
                let d = transfinite_diameter(&e, n, 3, 1).unwrap().energy;
                prop_assert!(d <= prev * (1.0 + 1e-4), "n={} {} > {}", n, d, prev);
                prev = d;
            }
        }

        #[test]
        fn scaling_and_translation(e in union(), s in 0.2..5.0f64, t in -4.0..4.0f64) {
            for n in [3, 5, 7] {
                let d = transfinite_diameter(&e, n, 3, 2).unwrap().energy;
                let ds = transfinite_diameter(&e.scaled(s), n, 3, 2).unwrap().energy;
                let moved = CompactSet::new(e.intervals().iter().map(|&(a, b)| (a + t, b + t)).collect()).unwrap();
                let dt = transfinite_diameter(&moved, n, 3, 2).unwrap().energy;
                prop_assert!((ds - s * d).abs() <= 1e-4 * s * d);
                prop_assert!((dt - d).abs() <= 1e-4 * d);
            }
        }

        #[test]
        fn larger_sets_have_larger_diameters(e in union(), extra in 0.05..1.0f64) {
            let last = e.intervals().last().unwrap().1;
            let mut iv = e.intervals().to_vec();
            iv.push((last + 0.3, last + 0.3 + extra));
            let bigger = CompactSet::new(iv).unwrap();
            for n in [3, 6] {
                let d = transfinite_diameter(&e, n, 3, 4).unwrap().energy;
                let db = transfinite_diameter(&bigger, n, 3, 4).unwrap().energy;
                prop_assert!(d <= db * (1.0 + 1e-4));
            }
        }
    }
}
