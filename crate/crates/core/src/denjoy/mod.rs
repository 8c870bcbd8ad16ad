//! Boundary sets of Denjoy domains, Carleson homogeneity, the circle model
//! and the chord-arc constant of the fundamental domain.

mod circle;
mod set;

pub use circle::{chord_arc_constant, chord_arc_constant_of_curve, circle_model, FundamentalDomain, GapArc};
pub use set::{fat_cantor, triadic_cantor, two_gap_pair, RealBoundarySet};

use crate::capacity::{capacity_estimate, CapacityOptions, CompactSet};
use crate::error::{invalid, LabError, Result};

/// Infimum over `x` in E and `0 < t <= t_max` of `|(x - t, x + t) ∩ E| / (2t)`.
///
/// The ratio is piecewise of the form `(α + βx)/(2t) + γ`, so its infimum sits at
/// a vertex of the cell decomposition cut out by the lines `x ± t = e` (e an
/// endpoint), `t = t_max` and the endpoints themselves, or in the limit `t -> 0`.
/// All such vertices are enumerated. The full line gives 1, an isolated finite
/// point gives 0.
pub fn carleson_homogeneity_constant(e: &RealBoundarySet, t_max: f64) -> Result<f64> {
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(invalid("t_max must be positive and finite"));
    }
    if e.intervals().is_empty() {
        return Err(LabError::EmptySet);
    }
    if e.intervals().iter().all(|&(a, b)| a == b) {
        return Err(invalid("E has no interval of positive length"));
    }
    if e.intervals().iter().any(|&(a, b)| a == b) {
        return Ok(0.0);
    }
    let ends = e.finite_endpoints();
    if ends.is_empty() {
        return Ok(1.0);
    }
    let measure = CumulativeMeasure::new(e);
    let mut xs: Vec<f64> = ends.clone();
    for (i, &a) in ends.iter().enumerate() {
        xs.push(a - t_max);
        xs.push(a + t_max);
        for &b in &ends[i + 1..] {
            xs.push(0.5 * (a + b));
        }
    }
    xs.retain(|&x| e.contains(x));
    xs.sort_by(f64::total_cmp);
    xs.dedup();

    // t -> 0 at an endpoint of a nondegenerate interval
    let mut best: f64 = 0.5;
    for &x in &xs {
        let mut ts: Vec<f64> = ends
            .iter()
            .map(|&b| (x - b).abs())
            .filter(|&t| t > 0.0 && t <= t_max)
            .collect();
        ts.push(t_max);
        for t in ts {
            let ratio = measure.between(x - t, x + t) / (2.0 * t);
            best = best.min(ratio);
        }
    }
    Ok(best)
}

/// Lebesgue measure of E between two finite abscissae via prefix sums.
struct CumulativeMeasure {
    intervals: Vec<(f64, f64)>,
    reference: f64,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl CumulativeMeasure {
    fn new(e: &RealBoundarySet) -> Self {
        let intervals = e.intervals().to_vec();
        let reference = e.finite_endpoints()[0];
        let clip = |y: f64, (a, b): (f64, f64)| y.max(a).min(b);
        let n = intervals.len();
        let mut left = vec![0.0; n + 1];
        for i in 0..n {
            let (_, b) = intervals[i];
            left[i + 1] = left[i] + (b - clip(reference, intervals[i]));
        }
        let mut right = vec![0.0; n + 1];
        for i in (0..n).rev() {
            let (a, _) = intervals[i];
            right[i] = right[i + 1] + (a - clip(reference, intervals[i]));
        }
        Self {
            intervals,
            reference,
            left,
            right,
        }
    }

    /// Signed measure of E between the reference point and `y`.
    fn at(&self, y: f64) -> f64 {
        let k = self.intervals.partition_point(|&(_, b)| b < y);
        if k == self.intervals.len() {
            return self.left[k];
        }
        let (a, b) = self.intervals[k];
        let inner = y.max(a).min(b) - self.reference.max(a).min(b);
        self.left[k] + inner + self.right[k + 1]
    }

    fn between(&self, lo: f64, hi: f64) -> f64 {
        self.at(hi) - self.at(lo)
    }
}

/// Printed closed form `2 + 2ε/(1/r_j + 1/r_k)` for neighboring gaps of lengths
/// `r_j`, `r_k` at distance `ε` in the half-plane model.
///
/// This expression is not invariant under rescaling the configuration, while
/// the trace of a composition of reflections is. The exact value is
/// [`crate::hyperbolic::reflection_pair_trace`].
pub fn trace_of_gap_pair(r_j: f64, r_k: f64, eps: f64) -> Result<f64> {
    if !(r_j > 0.0 && r_k > 0.0 && eps > 0.0) {
        return Err(invalid("r_j, r_k and ε must be positive"));
    }
    Ok(2.0 + 2.0 * eps / (1.0 / r_j + 1.0 / r_k))
}

/// Sampling and estimator settings for [`uniform_perfectness_constant`].
#[derive(Clone, Debug)]
pub struct PerfectnessOptions {
    /// Interior sample points per bounded interval, in addition to endpoints.
    pub resolution: usize,
    /// Number of dyadic radii `t = span/2^k`, `k = 1..=levels`.
    pub levels: usize,
    pub capacity: CapacityOptions,
}

impl Default for PerfectnessOptions {
    fn default() -> Self {
        Self {
            resolution: 2,
            levels: 5,
            capacity: CapacityOptions {
                n_max: 8,
                restarts: 2,
                seed: 7,
            },
        }
    }
}

/// Infimum over sampled `z` in E and dyadic `t` of `cap(E ∩ [z - t, z + t]) / t`,
/// with capacities from the Fekete extrapolation of [`capacity_estimate`].
///
/// Radii are dyadic fractions of the span of the finite endpoints of E.
pub fn uniform_perfectness_constant(e: &RealBoundarySet, opts: &PerfectnessOptions) -> Result<f64> {
    if e.intervals().is_empty() {
        return Err(LabError::EmptySet);
    }
    if opts.levels == 0 {
        return Err(invalid("levels must be positive"));
    }
    let ends = e.finite_endpoints();
    if e.intervals().iter().any(|&(a, b)| a == b) {
        return Ok(0.0);
    }
    let span = match (ends.first(), ends.last()) {
        (Some(&lo), Some(&hi)) if hi > lo => hi - lo,
        _ => 2.0,
    };
    let mut zs = ends.clone();
    for &(a, b) in e.intervals() {
        let (a, b) = (
            a.max(-span + ends.first().copied().unwrap_or(0.0)),
            b.min(span + ends.last().copied().unwrap_or(0.0)),
        );
        for k in 1..=opts.resolution {
            zs.push(a + (b - a) * k as f64 / (opts.resolution + 1) as f64);
        }
    }
    zs.sort_by(f64::total_cmp);
    zs.dedup();
    let mut best = f64::INFINITY;
    for &z in &zs {
        for k in 1..=opts.levels {
            let t = span * 0.5f64.powi(k as i32);
            let piece = e.clip(z - t, z + t);
            let cap = capacity_estimate(&piece, &opts.capacity)?.extrapolated;
            best = best.min(cap / t);
        }
    }
    Ok(best)
}

impl RealBoundarySet {
    /// The compact set `E ∩ [lo, hi]`.
    pub fn clip(&self, lo: f64, hi: f64) -> CompactSet {
        let pieces = self
            .intervals()
            .iter()
            .filter_map(|&(a, b)| {
                let (a, b) = (a.max(lo), b.min(hi));
                (a <= b).then_some((a, b))
            })
            .collect();
        CompactSet::from_sorted(pieces)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rays() -> RealBoundarySet {
        RealBoundarySet::new(vec![(f64::NEG_INFINITY, 0.0), (1.0, f64::INFINITY)], true).unwrap()
    }

    /// Brute-force ratio over a grid in (x, t) plus the critical radii, computing
    /// the measure interval by interval.
    fn grid_oracle(e: &RealBoundarySet, t_max: f64) -> f64 {
        let meas = |lo: f64, hi: f64| -> f64 {
            e.intervals()
                .iter()
                .map(|&(a, b)| (b.min(hi) - a.max(lo)).max(0.0))
                .sum()
        };
        let ends = e.finite_endpoints();
        if ends.is_empty() {
            return 1.0;
        }
        let (lo, hi) = (ends[0] - t_max, ends[ends.len() - 1] + t_max);
        let mut best = 1.0f64;
        let n = 400;
        for i in 0..=n {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            if !e.contains(x) {
                continue;
            }
            for j in 1..=n {
                let t = t_max * j as f64 / n as f64;
                best = best.min(meas(x - t, x + t) / (2.0 * t));
            }
        }
        best
    }

    #[test]
    fn full_line_is_one() {
        let e = RealBoundarySet::full_line();
        assert_eq!(carleson_homogeneity_constant(&e, 10.0).unwrap(), 1.0);
    }

    #[test]
    fn two_rays_give_one_half() {
        assert_eq!(carleson_homogeneity_constant(&rays(), 10.0).unwrap(), 0.5);
    }

    #[test]
    fn isolated_point_gives_zero() {
        let e = RealBoundarySet::new(vec![(f64::NEG_INFINITY, 0.0), (0.5, 0.5), (1.0, f64::INFINITY)], true).unwrap();
        assert_eq!(carleson_homogeneity_constant(&e, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn cantor_truncations_decrease() {
        let vals: Vec<f64> = (1..=6)
            .map(|d| carleson_homogeneity_constant(&triadic_cantor(d), 10.0).unwrap())
            .collect();
        for w in vals.windows(2) {
            assert!(w[1] < w[0], "{vals:?}");
        }
    }

    #[test]
    fn gap_pair_trace_formula() {
        assert_eq!(trace_of_gap_pair(1.0, 1.0, 2.0).unwrap(), 4.0);
        assert!(trace_of_gap_pair(0.0, 1.0, 1.0).is_err());
        assert_eq!(
            trace_of_gap_pair(0.3, 2.0, 0.7).unwrap(),
            trace_of_gap_pair(2.0, 0.3, 0.7).unwrap()
        );
    }

    #[test]
    fn interval_perfectness_is_a_quarter() {
        let e = RealBoundarySet::new(vec![(0.0, 1.0)], true).unwrap();
        let c = uniform_perfectness_constant(&e, &PerfectnessOptions::default()).unwrap();
        assert!((c - 0.25).abs() < 0.25 * 0.05, "{c}");
        let e2 = RealBoundarySet::new(vec![(0.0, 2.0)], true).unwrap();
        let c2 = uniform_perfectness_constant(&e2, &PerfectnessOptions::default()).unwrap();
        assert!((c - c2).abs() <= 1e-12 * c, "{c} {c2}");
    }

    #[test]
    fn perfectness_of_isolated_point_is_zero() {
        let e = RealBoundarySet::new(vec![(0.0, 1.0), (2.0, 2.0)], true).unwrap();
        assert_eq!(
            uniform_perfectness_constant(&e, &PerfectnessOptions::default()).unwrap(),
            0.0
        );
    }

    fn interval_union() -> impl Strategy<Value = RealBoundarySet> {
        (
            prop::collection::vec((0.05..1.0f64, 0.05..1.0f64), 1..5),
            any::<bool>(),
            any::<bool>(),
        )
            .prop_map(|(parts, left, right)| {
                let mut x = 0.0;
                let mut iv = Vec::new();
                for (gap, len) in parts {
                    iv.push((x, x + len));
                    x += len + gap;
                }
                if left {
                    iv[0].0 = f64::NEG_INFINITY;
                }
                if right {
                    let n = iv.len();
                    iv[n - 1].1 = f64::INFINITY;
                }
                RealBoundarySet::new(iv, true).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn exact_infimum_never_exceeds_grid(e in interval_union(), t_max in 0.1..3.0f64) {
            let exact = carleson_homogeneity_constant(&e, t_max).unwrap();
            let grid = grid_oracle(&e, t_max);
            prop_assert!(exact <= grid + 1e-12, "{} > {}", exact, grid);
            prop_assert!(exact > 0.0);
            // the grid is coarse, so it can only overestimate, by a bounded amount
            prop_assert!(grid - exact < 0.1, "{} vs {}", exact, grid);
        }

        #[test]
        fn homogeneity_is_scale_and_translation_invariant(
            e in interval_union(),
            s in 0.25..4.0f64,
            shift in -3.0..3.0f64,
        ) {
            let base = carleson_homogeneity_constant(&e, 100.0).unwrap();
            let moved = RealBoundarySet::new(
                e.intervals().iter().map(|&(a, b)| (s * a + shift, s * b + shift)).collect(),
                true,
            ).unwrap();
            let other = carleson_homogeneity_constant(&moved, 100.0 * s).unwrap();
            prop_assert!((base - other).abs() < 1e-9, "{} vs {}", base, other);
        }
    }
}
