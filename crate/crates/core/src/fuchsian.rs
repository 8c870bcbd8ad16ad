//! The reflection group of a circle-model domain: generators, breadth-first
//! enumeration with canonical-form deduplication, orbit sums and their tails,
//! exponent of convergence, and the truncated Dirichlet test.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arc::Arc;
use crate::denjoy::FundamentalDomain;
use crate::error::{invalid, LabError, Result};
use crate::hyperbolic::{hyperbolic_distance, MoebiusMap, C64};
use crate::tolerance::COMPARE_TOL;

/// A group element with its reduced word. Letter `k > 0` is generator `k`,
/// `-k` its inverse; the word `[l1, ..., lm]` is `g_{l1} ∘ ... ∘ g_{lm}`.
#[derive(Clone, Debug)]
pub struct GroupElement {
    pub map: MoebiusMap,
    pub word: Vec<i32>,
    /// `1 - |g(0)|`.
    pub origin_image_gap: f64,
    /// Euclidean length of `g(∂𝓕)`, once computed.
    pub boundary_image_length: Option<f64>,
}

impl GroupElement {
    /// `map` must be a determinant-one disk automorphism, for which
    /// `|d|² - |b|² = 1` and so `1 - |g(0)| = 1/(|d|(|d| + |b|))` without cancellation.
    pub fn new(map: MoebiusMap, word: Vec<i32>) -> Self {
        let [_, b, _, d] = map.entries();
        let origin_image_gap = 1.0 / (d.norm() * (d.norm() + b.norm()));
        Self {
            map,
            word,
            origin_image_gap,
            boundary_image_length: None,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.word.is_empty()
    }

    /// Word as signed letters joined by `.`, `e` for the identity.
    pub fn word_string(&self) -> String {
        if self.word.is_empty() {
            return "e".into();
        }
        let parts: Vec<String> = self.word.iter().map(i32::to_string).collect();
        parts.join(".")
    }
}

/// One generator per conjugate gap pair: `g_j = S ∘ R_j` with `S` complex
/// conjugation and `R_j` the reflection in the geodesic over upper gap `j`.
/// `g_j` carries 𝓕 across the conjugate edge `L_{j+n}`, and `g_j^{-1}` across `L_j`.
pub fn generators_from_domain(fd: &FundamentalDomain) -> Vec<GroupElement> {
    let s = MoebiusMap::conjugation();
    (0..fd.pair_count())
        .map(|j| {
            let r = fd.geodesics()[j].reflection();
            GroupElement::new(s.compose(&r), vec![j as i32 + 1])
        })
        .collect()
}

/// Letter of the generator power that carries 𝓕 across edge `k`.
pub fn crossing_letter(fd: &FundamentalDomain, k: usize) -> i32 {
    let n = fd.pair_count();
    if k < n {
        -(k as i32 + 1)
    } else {
        (k - n) as i32 + 1
    }
}

/// Enumeration limits. At least one of `max_word_length` and `min_origin_gap`
/// must be set; `max_elements` caps the table either way.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Budget {
    pub max_word_length: Option<usize>,
    pub min_origin_gap: Option<f64>,
    pub max_elements: usize,
}

impl Budget {
    pub fn word_length(l: usize) -> Self {
        Self {
            max_word_length: Some(l),
            min_origin_gap: None,
            max_elements: 2_000_000,
        }
    }

    pub fn origin_gap(floor: f64) -> Self {
        Self {
            max_word_length: None,
            min_origin_gap: Some(floor),
            max_elements: 2_000_000,
        }
    }
}

/// Pair of words whose matrices agree to 1e-6 but not to the comparison
/// tolerance. Both are kept.
#[derive(Clone, Debug, Serialize)]
pub struct Collision {
    pub kept: String,
    pub candidate: String,
    pub distance: f64,
}

/// A truncated orbit sum with its geometric tail estimate.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct Truncated {
    pub value: f64,
    pub tail: f64,
}

/// The enumerated part of the group.
#[derive(Clone, Debug)]
pub struct OrbitSummary {
    /// Sorted by `origin_image_gap`, largest first.
    pub elements: Vec<GroupElement>,
    pub budget: Budget,
    /// Tail estimate of `Σ (1 - |g(0)|)`.
    pub tail_estimate: f64,
    pub collisions: Vec<Collision>,
    /// True when `max_elements` stopped the enumeration early.
    pub capped: bool,
    generator_count: usize,
    index: DedupIndex,
}

const BUCKET: f64 = 1e-6;

/// Hash index over `(arg d², ln|d|)` of the canonical matrix: both are
/// invariant under the overall sign and spread apart elements whose images of
/// the origin crowd together near the limit set.
#[derive(Clone, Debug, Default)]
struct DedupIndex {
    buckets: HashMap<(i64, i64), Vec<usize>>,
    tol: f64,
}

impl DedupIndex {
    fn key(m: &MoebiusMap) -> (i64, i64) {
        let d = m.entries()[3];
        let kx = ((d * d).arg() / BUCKET).floor() as i64;
        let ky = (d.norm().ln() / BUCKET).floor() as i64;
        (kx, ky)
    }

    fn scale(m: &MoebiusMap) -> f64 {
        m.entries().iter().map(|e| e.norm()).fold(1.0, f64::max)
    }

    /// Closest stored element, with its scaled matrix distance.
    fn nearest(&self, m: &MoebiusMap, table: &[GroupElement]) -> Option<(usize, f64)> {
        let (kx, ky) = Self::key(m);
        let wrap = (std::f64::consts::PI / BUCKET).floor() as i64;
        let scale = Self::scale(m);
        let mut best: Option<(usize, f64)> = None;
        let mut xs = vec![kx - 1, kx, kx + 1];
        // arg d² jumps by 2π across the negative real axis
        if kx <= -wrap + 1 || kx >= wrap - 2 {
            xs.extend([
                kx + 2 * wrap - 1,
                kx + 2 * wrap,
                kx - 2 * wrap,
                kx - 2 * wrap + 1,
                kx + 2 * wrap + 1,
                kx - 2 * wrap - 1,
            ]);
        }
        for x in xs {
            for dy in -1..=1 {
                if let Some(ids) = self.buckets.get(&(x, ky + dy)) {
                    for &i in ids {
                        let d = table[i].map.distance(m) / scale;
                        if best.is_none_or(|(_, b)| d < b) {
                            best = Some((i, d));
                        }
                    }
                }
            }
        }
        best
    }

    fn insert(&mut self, m: &MoebiusMap, i: usize) {
        self.buckets.entry(Self::key(m)).or_default().push(i);
    }
}

/// Breadth-first closure over the generators and their inverses along reduced
/// words. A word is extended only while it satisfies the budget; a word whose
/// matrix matches a stored one (relative entrywise distance <= 1e-9) is
/// dropped, and near misses up to 1e-6 are logged as collisions.
pub fn enumerate_group(generators: &[GroupElement], budget: &Budget) -> Result<OrbitSummary> {
    if budget.max_word_length.is_none() && budget.min_origin_gap.is_none() {
        return Err(invalid("budget needs a word length or an origin-gap floor"));
    }
    if let Some(f) = budget.min_origin_gap {
        if !(f > 0.0 && f < 1.0) {
            return Err(invalid("min_origin_gap must lie in (0, 1)"));
        }
    }
    let n = generators.len() as i32;
    let mut letters: Vec<(i32, MoebiusMap)> = Vec::new();
    for (i, g) in generators.iter().enumerate() {
        letters.push((i as i32 + 1, g.map));
        letters.push((-(i as i32 + 1), g.map.inverse()));
    }
    let mut table = vec![GroupElement::new(MoebiusMap::identity(), Vec::new())];
    let mut index = DedupIndex {
        tol: COMPARE_TOL,
        ..Default::default()
    };
    index.insert(&table[0].map, 0);
    let mut collisions = Vec::new();
    let mut frontier: Vec<usize> = vec![0];
    let mut capped = false;
    let mut length = 0;
    while !frontier.is_empty() && n > 0 {
        if budget.max_word_length.is_some_and(|l| length >= l) {
            break;
        }
        length += 1;
        let candidates: Vec<GroupElement> = frontier
            .par_iter()
            .flat_map_iter(|&i| {
                let parent = &table[i];
                let last = parent.word.last().copied();
                letters
                    .iter()
                    .filter(move |(l, _)| last != Some(-l))
                    .map(move |(l, m)| {
                        let mut word = parent.word.clone();
                        word.push(*l);
                        GroupElement::new(parent.map.compose(m), word)
                    })
                    .filter(|e| budget.min_origin_gap.is_none_or(|f| e.origin_image_gap >= f))
                    .collect::<Vec<_>>()
            })
            .collect();
        let mut next = Vec::new();
        for cand in candidates {
            if table.len() >= budget.max_elements {
                capped = true;
                break;
            }
            match index.nearest(&cand.map, &table) {
                Some((_, d)) if d <= index.tol => continue,
                Some((i, d)) if d <= 1e-6 => {
                    log::warn!(
                        "dedup near miss: {} vs {} at distance {d:e}",
                        table[i].word_string(),
                        cand.word_string()
                    );
                    collisions.push(Collision {
                        kept: table[i].word_string(),
                        candidate: cand.word_string(),
                        distance: d,
                    });
                }
                _ => {}
            }
            index.insert(&cand.map, table.len());
            next.push(table.len());
            table.push(cand);
        }
        if capped {
            break;
        }
        frontier = next;
    }
    table.sort_by(|a, b| {
        b.origin_image_gap
            .total_cmp(&a.origin_image_gap)
            .then(a.word.len().cmp(&b.word.len()))
            .then(a.word.cmp(&b.word))
    });
    let mut index = DedupIndex {
        tol: COMPARE_TOL,
        ..Default::default()
    };
    for (i, e) in table.iter().enumerate() {
        index.insert(&e.map, i);
    }
    let mut orbit = OrbitSummary {
        elements: table,
        budget: budget.clone(),
        tail_estimate: 0.0,
        collisions,
        capped,
        generator_count: generators.len(),
        index,
    };
    orbit.tail_estimate = orbit.sum_with_tail(|e| e.origin_image_gap).tail;
    Ok(orbit)
}

/// `s_m q/(1 - q)` with `q` the geometric-mean ratio over the last three
/// nonzero shells; infinite when the shells do not decay.
pub fn geometric_tail(shells: &[f64]) -> f64 {
    let s: Vec<f64> = shells.to_vec();
    let m = s.len();
    if m < 2 || s[1..].iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    let (first, last) = if m >= 3 {
        (s[m - 3], s[m - 1])
    } else {
        (s[m - 2], s[m - 1])
    };
    let steps = if m >= 3 { 2.0 } else { 1.0 };
    if !(first > 0.0) {
        return f64::INFINITY;
    }
    let q = (last / first).powf(1.0 / steps);
    if q < 1.0 {
        last * q / (1.0 - q)
    } else {
        f64::INFINITY
    }
}

impl OrbitSummary {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn generator_count(&self) -> usize {
        self.generator_count
    }

    /// Index of a stored element equal to `m` under the comparison tolerance.
    pub fn lookup(&self, m: &MoebiusMap) -> Option<usize> {
        self.index
            .nearest(m, &self.elements)
            .filter(|&(_, d)| d <= self.index.tol)
            .map(|(i, _)| i)
    }

    /// Shell of each element: word length for word budgets, otherwise the
    /// dyadic band `floor(log2(gap / floor))` counted from the top.
    pub fn shell_of(&self, e: &GroupElement) -> usize {
        match (self.budget.max_word_length, self.budget.min_origin_gap) {
            (Some(_), _) | (None, None) => e.word.len(),
            (None, Some(floor)) => {
                let top = (1.0 / floor).log2().floor() as usize;
                let band = (e.origin_image_gap / floor).log2().floor().max(0.0) as usize;
                top.saturating_sub(band.min(top))
            }
        }
    }

    pub fn shell_count(&self) -> usize {
        self.elements
            .iter()
            .map(|e| self.shell_of(e))
            .max()
            .map_or(0, |m| m + 1)
    }

    /// Per-shell sums of `f` over the elements.
    pub fn shell_sums(&self, f: impl Fn(&GroupElement) -> f64) -> Vec<f64> {
        let mut s = vec![0.0; self.shell_count()];
        for e in &self.elements {
            s[self.shell_of(e)] += f(e);
        }
        s
    }

    /// Truncated sum of `f` in element order plus the geometric tail of its shells.
    pub fn sum_with_tail(&self, f: impl Fn(&GroupElement) -> f64) -> Truncated {
        let value = self.elements.iter().map(&f).sum();
        Truncated {
            value,
            tail: geometric_tail(&self.shell_sums(f)),
        }
    }

    /// Fills `boundary_image_length` for every element.
    pub fn compute_boundary_lengths(&mut self, fd: &FundamentalDomain) {
        let edges = fd.edges();
        self.elements.par_iter_mut().for_each(|e| {
            e.boundary_image_length = Some(image_length(&edges, &e.map));
        });
    }

    /// CSV with columns `word,trace,origin_image_gap,boundary_image_length`
    /// (the last column empty until computed).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("word,trace,origin_image_gap,boundary_image_length\n");
        for e in &self.elements {
            let trace = e.map.normalized_trace().unwrap_or(f64::NAN);
            let len = e.boundary_image_length.map(|l| l.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", e.word_string(), trace, e.origin_image_gap, len);
        }
        out
    }
}

fn image_length(edges: &[Arc], m: &MoebiusMap) -> f64 {
    edges.iter().map(|a| a.image(m).length()).sum()
}

/// Partial sums and the estimated exponent of convergence.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub alphas: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// Geometric-mean shell ratio over the last three shells, per alpha.
    pub shell_ratios: Vec<f64>,
    /// `(estimate, lower, upper)`; absent for orbits under 50 elements.
    pub delta: Option<(f64, f64, f64)>,
}

/// Partial sums `Σ (1 - |g(0)|)^α` and an estimate of the critical exponent:
/// the shell ratio `q(α)` decreases in α and the sum converges where it
/// drops below 1. The estimate interpolates `log q` linearly between the
/// bracketing alphas (α = 0 is always probed).
pub fn convergence_exponent(orbit: &OrbitSummary, alphas: &[f64]) -> Result<ConvergenceReport> {
    if orbit.is_empty() {
        return Err(LabError::EmptySet);
    }
    if alphas.iter().any(|a| !(*a >= 0.0)) {
        return Err(invalid("alphas must be nonnegative"));
    }
    let ratio = |alpha: f64| -> f64 {
        let s = orbit.shell_sums(|e| e.origin_image_gap.powf(alpha));
        let m = s.len();
        if m < 3 {
            return f64::NAN;
        }
        (s[m - 1] / s[m - 3]).sqrt()
    };
    let partial_sums = alphas
        .iter()
        .map(|&a| orbit.elements.iter().map(|e| e.origin_image_gap.powf(a)).sum())
        .collect();
    let shell_ratios: Vec<f64> = alphas.iter().map(|&a| ratio(a)).collect();
    let delta = if orbit.len() < 50 {
        None
    } else {
        let mut probes: Vec<(f64, f64)> = alphas.iter().copied().zip(shell_ratios.iter().copied()).collect();
        probes.push((0.0, ratio(0.0)));
        probes.sort_by(|a, b| a.0.total_cmp(&b.0));
        let lo = probes.iter().rev().find(|p| p.1 >= 1.0).copied();
        let hi = probes.iter().find(|p| p.1 < 1.0).copied();
        match (lo, hi) {
            (Some(l), Some(h)) if l.0 < h.0 => {
                let (fl, fh) = (l.1.ln(), h.1.ln());
                let t = if fl == fh { 0.0 } else { fl / (fl - fh) };
                Some((l.0 + t * (h.0 - l.0), l.0, h.0))
            }
            (None, Some(h)) => Some((0.0, 0.0, h.0)),
            (Some(l), None) => Some((f64::INFINITY, l.0, f64::INFINITY)),
            _ => None,
        }
    };
    Ok(ConvergenceReport {
        alphas: alphas.to_vec(),
        partial_sums,
        shell_ratios,
        delta,
    })
}

/// `Σ_g length(g(∂𝓕))` over the orbit, `∂𝓕` being the geodesic edges. Each
/// image is a union of circular arcs whose lengths are exact.
pub fn boundary_orbit_length_sum(fd: &FundamentalDomain, orbit: &OrbitSummary) -> Truncated {
    let edges = fd.edges();
    orbit.sum_with_tail(|e| e.boundary_image_length.unwrap_or_else(|| image_length(&edges, &e.map)))
}

/// Result of [`sflt_functional`].
#[derive(Clone, Debug, Serialize)]
pub struct SfltReport {
    pub sup: f64,
    /// `(a, θ)` of the maximizing `T(z) = e^{iθ}(z + a)/(1 + ā z)`.
    pub argmax: (C64, f64),
    pub identity_value: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Seeded sample of disk automorphisms: the identity first, then uniform
/// rotation angle times `(z + a)/(1 + ā z)` with `|a|²` uniform on
/// `[0, (1 - 1e-3)²]` and `arg a` uniform.
pub fn sample_automorphisms(count: usize, seed: u64) -> Vec<(C64, f64, MoebiusMap)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![(C64::new(0.0, 0.0), 0.0, MoebiusMap::identity())];
    let rmax2 = (1.0 - 1e-3f64).powi(2);
    while out.len() < count.max(1) {
        let theta = rng.gen::<f64>() * std::f64::consts::TAU;
        let r = (rng.gen::<f64>() * rmax2).sqrt();
        let a = C64::from_polar(r, rng.gen::<f64>() * std::f64::consts::TAU);
        let t = MoebiusMap::rotation(theta).compose(&MoebiusMap::disk_automorphism(a).expect("|a| < 1"));
        out.push((a, theta, t));
    }
    out
}

/// Sup over sampled automorphisms `T` of `Σ_g length(T(g(∂𝓕)))`.
pub fn sflt_functional(fd: &FundamentalDomain, orbit: &OrbitSummary, samples: usize, seed: u64) -> SfltReport {
    let edges = fd.edges();
    let images: Vec<Arc> = orbit
        .elements
        .iter()
        .flat_map(|e| edges.iter().map(move |a| a.image(&e.map)))
        .collect();
    let values: Vec<(C64, f64, f64)> = sample_automorphisms(samples, seed)
        .into_par_iter()
        .map(|(a, theta, t)| (a, theta, images.iter().map(|arc| arc.image(&t).length()).sum()))
        .collect();
    let identity_value = values[0].2;
    let best = values.iter().fold(values[0], |b, v| if v.2 > b.2 { *v } else { b });
    SfltReport {
        sup: best.2,
        argmax: (best.0, best.1),
        identity_value,
        samples,
        seed,
    }
}

/// Minimum normalized trace over the non-identity elements and the word
/// attaining it.
pub fn min_trace(orbit: &OrbitSummary) -> Result<(f64, String)> {
    orbit
        .elements
        .iter()
        .filter(|e| !e.is_identity())
        .map(|e| Ok((e.map.normalized_trace()?, e.word_string())))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
        .ok_or_else(|| invalid("orbit has no non-identity element"))
}

/// Truncated Dirichlet test: `d(0, z) <= d(0, g z) + 1e-9` for every enumerated
/// `g ≠ id`.
pub fn dirichlet_membership(z: C64, orbit: &OrbitSummary) -> Result<bool> {
    let d0 = hyperbolic_distance(C64::new(0.0, 0.0), z)?;
    for e in orbit.elements.iter().filter(|e| !e.is_identity()) {
        let w = e.map.apply_c(z);
        if w.norm() >= 1.0 {
            continue;
        }
        if d0 > hyperbolic_distance(C64::new(0.0, 0.0), w)? + 1e-9 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Reduction of a disk point into 𝓕.
#[derive(Clone, Debug)]
pub struct Reduction {
    /// Point of 𝓕.
    pub point: C64,
    /// Word `w` with `w(point) = z`.
    pub word: Vec<i32>,
    /// The map of `w`.
    pub map: MoebiusMap,
}

/// Greedy descent: while `z` lies beyond some edge, pull it back across the
/// deepest violated edge. Each step moves one tile closer to 𝓕 in the tile
/// tree, so at most `max_steps` steps are needed for words of that length.
pub fn reduce_to_domain(
    fd: &FundamentalDomain,
    generators: &[GroupElement],
    z: C64,
    max_steps: usize,
) -> Result<Reduction> {
    if z.norm() >= 1.0 {
        return Err(LabError::IdealPoint(z));
    }
    let mut p = z;
    let mut word = Vec::new();
    let mut map = MoebiusMap::identity();
    for _ in 0..=max_steps {
        let Some(k) = fd.violated_gap(p) else {
            return Ok(Reduction { point: p, word, map });
        };
        let letter = crossing_letter(fd, k);
        let g = generators[letter.unsigned_abs() as usize - 1].map;
        let g = if letter > 0 { g } else { g.inverse() };
        p = g.inverse().apply_c(p);
        map = map.compose(&g);
        word.push(letter);
    }
    Err(LabError::Irreducible {
        z,
        distance: hyperbolic_distance(C64::new(0.0, 0.0), p).unwrap_or(f64::INFINITY),
    })
}
