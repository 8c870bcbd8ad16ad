//! Universal coverings of Denjoy domains by the disk, and the Bloch, BMOA and
//! Hayman–Wu functionals computed from them.
//!
//! The numerical covering is `f(z) = s(γ z)` where `γ` reduces `z` into 𝓕 and
//! `s` is a conformal map of 𝓕 onto the upper/lower half-planes glued along
//! the image of the diameter. `s` is built on the Cayley side, where 𝓕 becomes
//! the plane minus disks centred on the real axis: a multipole slit map `F`
//! straightens those circles into real segments and `-F²` folds the result
//! onto the sphere minus real slits.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arc::{diameter_of_arcs, Arc};
use crate::carleson::{mesh_norm, mesh_norm_pulled, reduction_cap, CarlesonNorm, Sampling, MAX_UNCOVERED};
use crate::denjoy::FundamentalDomain;
use crate::error::{invalid, LabError, Result};
use crate::fuchsian::{generators_from_domain, reduce_to_domain, Budget, GroupElement, OrbitSummary};
use crate::hyperbolic::{MoebiusMap, Point, C64, ONE, ZERO};
use crate::quadrature::{gauss_legendre_unit, DiskMesh, MeshSpec};

/// Value and first three complex derivatives at a point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Jet {
    pub value: C64,
    pub d1: C64,
    pub d2: C64,
    pub d3: C64,
}

impl Jet {
    pub fn identity(z: C64) -> Self {
        Self {
            value: z,
            d1: ONE,
            d2: ZERO,
            d3: ZERO,
        }
    }

    /// Jet of `self ∘ inner`, where `self` is the jet of the outer map at
    /// `inner.value`.
    pub fn after(self, inner: Jet) -> Jet {
        let (a1, a2, a3) = (inner.d1, inner.d2, inner.d3);
        Jet {
            value: self.value,
            d1: self.d1 * a1,
            d2: self.d2 * a1 * a1 + self.d1 * a2,
            d3: self.d3 * a1 * a1 * a1 + 3.0 * self.d2 * a1 * a2 + self.d1 * a3,
        }
    }

    /// `(log f')' = f''/f'`.
    pub fn log_derivative(&self) -> C64 {
        self.d2 / self.d1
    }

    pub fn schwarzian(&self) -> C64 {
        let l = self.d2 / self.d1;
        self.d3 / self.d1 - 1.5 * l * l
    }
}

/// Jet of a holomorphic Möbius map.
pub fn moebius_jet(m: &MoebiusMap, z: C64) -> Result<Jet> {
    if m.is_antiholomorphic() {
        return Err(invalid("jets need a holomorphic map"));
    }
    let [a, b, c, d] = m.entries();
    let q = c * z + d;
    if q == ZERO {
        return Err(LabError::Pole(z));
    }
    let r = q.inv();
    Ok(Jet {
        value: (a * z + b) * r,
        d1: r * r,
        d2: -2.0 * c * r * r * r,
        d3: 6.0 * c * c * r * r * r * r,
    })
}

/// Cauchy-integral differentiation on the circle of radius
/// `radius_fraction · (1 - |z|)` around `z`, with `nodes` trapezoid nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyScheme {
    pub radius_fraction: f64,
    pub nodes: usize,
}

impl Default for CauchyScheme {
    fn default() -> Self {
        Self {
            radius_fraction: 0.5,
            nodes: 64,
        }
    }
}

/// Derivatives of a function holomorphic on the unit disk from its values on
/// a small circle.
pub fn cauchy_jet(f: impl Fn(C64) -> Result<C64>, z: C64, scheme: CauchyScheme) -> Result<Jet> {
    let rho = scheme.radius_fraction * (1.0 - z.norm());
    if !(rho > 0.0) || scheme.nodes < 8 {
        return Err(invalid("Cauchy circle must lie in the disk and use at least 8 nodes"));
    }
    let n = scheme.nodes;
    let mut c = [ZERO; 3];
    for j in 0..n {
        let u = C64::from_polar(1.0, TAU * j as f64 / n as f64);
        let v = f(z + rho * u)?;
        let ub = u.conj();
        c[0] += v * ub;
        c[1] += v * ub * ub;
        c[2] += v * ub * ub * ub;
    }
    let n = n as f64;
    Ok(Jet {
        value: f(z)?,
        d1: c[0] / (n * rho),
        d2: 2.0 * c[1] / (n * rho * rho),
        d3: 6.0 * c[2] / (n * rho * rho * rho),
    })
}

/// Schwarzian derivative of `f` at `z` by Cauchy differentiation.
pub fn schwarzian(f: impl Fn(C64) -> Result<C64>, z: C64, scheme: CauchyScheme) -> Result<C64> {
    Ok(cauchy_jet(f, z, scheme)?.schwarzian())
}

/// Image on the extended real line of one boundary piece of 𝓕.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryImage {
    pub piece: String,
    /// `None` stands for ∞.
    pub start: Option<f64>,
    pub end: Option<f64>,
}

/// Conformal map of 𝓕 sending the diameter onto (-1, 1) with ±1 fixed and
/// `i` to ∞; real on the geodesic edges and on the arcs of F.
#[derive(Clone, Debug)]
pub struct SeedMap {
    fd: FundamentalDomain,
    /// `(centre, radius)` on the negative real axis of the Cayley images of
    /// the upper edges; their mirrors sit at `-centre`.
    disks: Vec<(f64, f64)>,
    coeffs: Vec<f64>,
    terms: usize,
    fold: MoebiusMap,
    pub residual: f64,
    pub eps_seed: f64,
    pub correspondence: Vec<BoundaryImage>,
}

const TERM_LADDER: [usize; 7] = [4, 8, 16, 32, 64, 128, 256];

/// Least-squares multipole seed map of 𝓕. Terms are doubled until the edge
/// residual `max |Im s| / (1 + |s|)` drops below `eps_seed`.
pub fn seed_riemann_map(fd: &FundamentalDomain, eps_seed: f64) -> Result<SeedMap> {
    if !(eps_seed > 0.0) {
        return Err(invalid("eps_seed must be positive"));
    }
    if fd.base_gap().is_none() && !fd.gaps().is_empty() {
        return Err(invalid("seed map needs a base gap"));
    }
    let n = fd.pair_count();
    let disks: Vec<(f64, f64)> = fd.gaps()[..n]
        .iter()
        .map(|g| {
            let x1 = -1.0 / (g.start / 2.0).tan();
            let x2 = -1.0 / (g.end / 2.0).tan();
            (0.5 * (x1 + x2), 0.5 * (x2 - x1).abs())
        })
        .collect();
    let mut sorted = disks.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let separated =
        sorted.windows(2).all(|w| w[0].0 + w[0].1 < w[1].0 - w[1].1) && sorted.last().is_none_or(|d| d.0 + d.1 < 0.0);
    if !separated {
        return Err(invalid("seed map needs arcs of F of positive length between gaps"));
    }
    let mut best: Option<SeedMap> = None;
    for &terms in &TERM_LADDER {
        let coeffs = if n == 0 { Vec::new() } else { fit(&disks, terms)? };
        let mut seed = SeedMap {
            fd: fd.clone(),
            disks: disks.clone(),
            coeffs,
            terms,
            fold: MoebiusMap::identity(),
            residual: f64::INFINITY,
            eps_seed,
            correspondence: Vec::new(),
        };
        let p = -seed.slit_jet(C64::new(-1.0, 0.0)).value.re.powi(2);
        seed.fold = MoebiusMap::new(ONE, C64::new(p, 0.0), ONE, C64::new(-p, 0.0), false)?;
        seed.residual = seed.edge_residual(64)?;
        log::debug!("seed map: {terms} terms, residual {:e}", seed.residual);
        let done = seed.residual <= eps_seed || n == 0;
        if best.as_ref().is_none_or(|b| seed.residual < b.residual) {
            best = Some(seed);
        }
        if done {
            break;
        }
    }
    let mut seed = best.expect("ladder is nonempty");
    if seed.residual > eps_seed {
        return Err(LabError::NonConvergence {
            what: "seed map".into(),
            residual: seed.residual,
        });
    }
    seed.correspondence = seed.boundary_table();
    Ok(seed)
}

/// Real coefficients making `Im F = 0` on the upper halves of the disk
/// circles, in the least-squares sense.
fn fit(disks: &[(f64, f64)], terms: usize) -> Result<Vec<f64>> {
    let per = 2 * terms + 8;
    let rows = disks.len() * per;
    let cols = disks.len() * terms;
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    let mut b = DVector::<f64>::zeros(rows);
    for (i0, &(m0, r0)) in disks.iter().enumerate() {
        for s in 0..per {
            let t = PI * (s as f64 + 0.5) / per as f64;
            let w = C64::new(m0, 0.0) + C64::from_polar(r0, t);
            let row = i0 * per + s;
            b[row] = -w.im / r0;
            for (j, &(m, r)) in disks.iter().enumerate() {
                let u = r / (w - m);
                let v = r / (w + m);
                let (mut pu, mut pv) = (u, v);
                for k in 1..=terms {
                    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                    a[(row, j * terms + k - 1)] = (pu + sign * pv).im / r0;
                    pu *= u;
                    pv *= v;
                }
            }
        }
    }
    let svd = a.svd(true, true);
    let x = svd
        .solve(&b, 1e-13)
        .map_err(|e| LabError::Optimizer(format!("seed least squares: {e}")))?;
    Ok(x.iter().copied().collect())
}

impl SeedMap {
    pub fn domain(&self) -> &FundamentalDomain {
        &self.fd
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    /// Jet of the slit map `F` on the Cayley side.
    fn slit_jet(&self, w: C64) -> Jet {
        let mut out = Jet::identity(w);
        let k_max = self.terms;
        for (j, &(m, r)) in self.disks.iter().enumerate() {
            for (centre, mirror) in [(m, false), (-m, true)] {
                let q = w - centre;
                let iq = q.inv();
                let u = r * iq;
                let mut p = u;
                for k in 1..=k_max {
                    let mut c = self.coeffs[j * k_max + k - 1];
                    if mirror && k % 2 == 0 {
                        c = -c;
                    }
                    let kk = k as f64;
                    let t = c * p;
                    out.value += t;
                    out.d1 -= kk * t * iq;
                    out.d2 += kk * (kk + 1.0) * t * iq * iq;
                    out.d3 -= kk * (kk + 1.0) * (kk + 2.0) * t * iq * iq * iq;
                    p *= u;
                }
            }
        }
        out
    }

    /// `-u²` followed by the real Möbius fold.
    fn finish(&self, f: Jet) -> Result<Jet> {
        let u = f.value;
        let sq = Jet {
            value: -u * u,
            d1: -2.0 * u,
            d2: C64::new(-2.0, 0.0),
            d3: ZERO,
        }
        .after(f);
        Ok(moebius_jet(&self.fold, sq.value)?.after(sq))
    }

    /// Jet of the seed at a point of the closed disk other than 1 and i.
    pub fn jet(&self, z: C64) -> Result<Jet> {
        let c = moebius_jet(&MoebiusMap::cayley(), z)?;
        self.finish(self.slit_jet(c.value).after(c))
    }

    pub fn value(&self, z: C64) -> Result<C64> {
        Ok(self.jet(z)?.value)
    }

    /// Boundary value at `e^{iθ}`, a point of ℝ̄.
    pub fn boundary_value(&self, theta: f64) -> Point {
        let half = (theta / 2.0).rem_euclid(PI);
        if half == 0.0 {
            return Point::Finite(ONE);
        }
        let x = C64::new(-1.0 / half.tan(), 0.0);
        let u = self.slit_jet(x).value;
        self.fold.apply(Point::Finite(-u * u)).unwrap_or(Point::Infinity)
    }

    fn edge_residual(&self, per_edge: usize) -> Result<f64> {
        let mut worst = 0.0f64;
        for g in &self.fd.geodesics()[..self.fd.pair_count()] {
            let arc = Arc::from_geodesic(g);
            for s in 0..per_edge {
                let z = arc.point_at((s as f64 + 0.5) / per_edge as f64);
                let v = self.value(z)?;
                worst = worst.max(v.im.abs() / (1.0 + v.norm()));
            }
        }
        Ok(worst)
    }

    fn boundary_table(&self) -> Vec<BoundaryImage> {
        let real = |p: Point| p.finite().map(|z| z.re);
        let mut out = vec![BoundaryImage {
            piece: "diameter".into(),
            start: real(self.boundary_value(PI)),
            end: real(self.boundary_value(0.0)),
        }];
        for (k, &(s, e)) in self.fd.f_arcs().iter().enumerate() {
            out.push(BoundaryImage {
                piece: format!("arc {k}"),
                start: real(self.boundary_value(s)),
                end: real(self.boundary_value(e)),
            });
        }
        for (k, g) in self.fd.gaps().iter().enumerate() {
            out.push(BoundaryImage {
                piece: format!("edge {k}"),
                start: real(self.boundary_value(g.start)),
                end: real(self.boundary_value(g.end)),
            });
        }
        out
    }
}

/// Largest `|s(g_j z) - s(z)| / (1 + |s(z)|)` over sample points `z` of the
/// upper edges, where `g_j` carries edge `j` to its conjugate edge.
pub fn equivariance_residual(seed: &SeedMap, per_edge: usize) -> Result<f64> {
    let fd = seed.domain();
    let gens = generators_from_domain(fd);
    let mut worst = 0.0f64;
    for (j, g) in gens.iter().enumerate() {
        let arc = Arc::from_geodesic(&fd.geodesics()[j]);
        for s in 0..per_edge {
            let z = arc.point_at((s as f64 + 0.5) / per_edge as f64);
            let a = seed.value(z)?;
            let b = seed.value(g.map.apply_c(z))?;
            worst = worst.max((a - b).norm() / (1.0 + a.norm()));
        }
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoveringKind {
    ExplicitJoukowski,
    NumericalSeed,
}

/// A universal covering of a Denjoy domain by the unit disk, possibly
/// precomposed with a disk automorphism.
#[derive(Clone, Debug)]
pub struct CoveringMap {
    kind: CoveringKind,
    seed: Option<SeedMap>,
    generators: Vec<GroupElement>,
    budget: Option<Budget>,
    max_steps: usize,
    pre: MoebiusMap,
}

/// `f(z) = (z + 1/z)/2`, the covering (a conformal map) of the complement of
/// [-1, 1]. Its pole at 0 is cut out of the functionals.
pub fn joukowski_covering() -> CoveringMap {
    CoveringMap {
        kind: CoveringKind::ExplicitJoukowski,
        seed: None,
        generators: Vec::new(),
        budget: None,
        max_steps: 0,
        pre: MoebiusMap::identity(),
    }
}

/// Covering built from a seed map, reducing points with at most four times
/// the word budget of `orbit` generator steps.
pub fn numerical_covering(seed: SeedMap, orbit: &OrbitSummary) -> CoveringMap {
    CoveringMap {
        kind: CoveringKind::NumericalSeed,
        generators: generators_from_domain(seed.domain()),
        seed: Some(seed),
        budget: Some(orbit.budget.clone()),
        max_steps: reduction_cap(orbit),
        pre: MoebiusMap::identity(),
    }
}

impl CoveringMap {
    pub fn kind(&self) -> CoveringKind {
        self.kind
    }

    pub fn seed(&self) -> Option<&SeedMap> {
        self.seed.as_ref()
    }

    pub fn budget(&self) -> Option<&Budget> {
        self.budget.as_ref()
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    /// Radius of the disk around the pole left out of sample grids.
    pub fn core_radius(&self) -> f64 {
        match self.kind {
            CoveringKind::ExplicitJoukowski => 0.5,
            CoveringKind::NumericalSeed => 0.0,
        }
    }

    /// `z ↦ f(t(z))` for a holomorphic disk automorphism `t`.
    pub fn precomposed(&self, t: &MoebiusMap) -> Result<CoveringMap> {
        if t.is_antiholomorphic() || !crate::hyperbolic::is_disk_automorphism(t, 1e-9) {
            return Err(invalid("precomposition needs a holomorphic disk automorphism"));
        }
        Ok(CoveringMap {
            pre: self.pre.compose(t),
            ..self.clone()
        })
    }

    fn excluded(&self, z: C64) -> bool {
        self.kind == CoveringKind::ExplicitJoukowski && self.pre.apply_c(z).norm() < self.core_radius()
    }

    /// The Joukowski map is rational and also evaluates on the unit circle.
    pub fn jet(&self, z: C64) -> Result<Jet> {
        let rim = if self.seed.is_none() {
            z.norm() > 1.0
        } else {
            z.norm() >= 1.0
        };
        if rim {
            return Err(LabError::IdealPoint(z));
        }
        let pj = moebius_jet(&self.pre, z)?;
        let w = pj.value;
        match &self.seed {
            None => {
                if w == ZERO {
                    return Err(LabError::Pole(z));
                }
                let r = w.inv();
                Ok(Jet {
                    value: 0.5 * (w + r),
                    d1: 0.5 * (ONE - r * r),
                    d2: r * r * r,
                    d3: -3.0 * r * r * r * r,
                }
                .after(pj))
            }
            Some(seed) => {
                let red = reduce_to_domain(seed.domain(), &self.generators, w, self.max_steps)?;
                let h = moebius_jet(&red.map.inverse(), w)?;
                Ok(seed.jet(red.point)?.after(h).after(pj))
            }
        }
    }

    pub fn value(&self, z: C64) -> Result<C64> {
        Ok(self.jet(z)?.value)
    }
}

/// `f(z)` on the Riemann sphere; the Joukowski pole comes back as ∞.
pub fn evaluate_covering(cm: &CoveringMap, z: C64) -> Result<Point> {
    match cm.jet(z) {
        Ok(j) => Ok(Point::Finite(j.value)),
        Err(LabError::Pole(_)) => Ok(Point::Infinity),
        Err(e) => Err(e),
    }
}

/// Relative tolerance of the Cauchy cross-check of stored derivatives.
pub const VALIDATION_TOL: f64 = 1e-5;

/// Jets of a covering on a rim-graded disk mesh, cross-checked by Cauchy
/// integrals at every tenth evaluated point.
#[derive(Clone, Debug)]
pub struct AnalyticSampleGrid {
    pub mesh: DiskMesh,
    /// `None` in the excluded core or where reduction failed.
    pub jets: Vec<Option<Jet>>,
    pub core_radius: f64,
    /// Share of `dA/(1 - |z|²)` carried by points that could not be reduced.
    pub uncovered_fraction: f64,
    pub validated: usize,
    pub max_mismatch: f64,
}

pub fn sample_grid(cm: &CoveringMap, spec: MeshSpec) -> Result<AnalyticSampleGrid> {
    let mesh = DiskMesh::new(spec)?;
    let jets: Vec<Option<Jet>> = mesh
        .points()
        .par_iter()
        .map(|p| {
            if cm.excluded(p.z) {
                return Ok(None);
            }
            match cm.jet(p.z) {
                Ok(j) => Ok(Some(j)),
                Err(LabError::Irreducible { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let (mut missing, mut total) = (0.0, 0.0);
    for (p, j) in mesh.points().iter().zip(&jets) {
        let w = p.weight / (1.0 - p.z.norm_sqr());
        total += w;
        if j.is_none() && !cm.excluded(p.z) {
            missing += w;
        }
    }
    let uncovered_fraction = missing / total;
    if uncovered_fraction > MAX_UNCOVERED {
        return Err(LabError::InsufficientBudget {
            fraction: uncovered_fraction,
        });
    }
    let scheme = CauchyScheme {
        radius_fraction: 0.5,
        nodes: 32,
    };
    let checks: Vec<Option<(C64, f64)>> = mesh
        .points()
        .par_iter()
        .zip(&jets)
        .enumerate()
        .filter(|(i, (_, j))| i % 10 == 0 && j.is_some())
        .map(|(_, (p, j))| {
            let j = j.expect("filtered");
            match cauchy_jet(|w| cm.value(w), p.z, scheme) {
                Ok(c) => {
                    let e1 = (c.d1 - j.d1).norm() / j.d1.norm();
                    let e2 = (c.d2 - j.d2).norm() / (j.d2.norm() + j.d1.norm() / (1.0 - p.z.norm()));
                    Ok(Some((p.z, e1.max(e2))))
                }
                Err(LabError::Irreducible { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let mut max_mismatch = 0.0f64;
    let mut validated = 0;
    for (z, m) in checks.into_iter().flatten() {
        validated += 1;
        if !(m <= VALIDATION_TOL) {
            return Err(LabError::DerivativeValidation { z, mismatch: m });
        }
        max_mismatch = max_mismatch.max(m);
    }
    Ok(AnalyticSampleGrid {
        mesh,
        jets,
        core_radius: cm.core_radius(),
        uncovered_fraction,
        validated,
        max_mismatch,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BlochNorm {
    /// `sup (1 - |z|²) |f''/f'|` over the grid.
    pub value: f64,
    pub argmax: C64,
    pub points: usize,
}

pub fn bloch_norm(grid: &AnalyticSampleGrid) -> Result<BlochNorm> {
    let mut best = (f64::NEG_INFINITY, ZERO);
    let mut points = 0;
    for (p, j) in grid.mesh.points().iter().zip(&grid.jets) {
        if let Some(j) = j {
            points += 1;
            let v = (1.0 - p.z.norm_sqr()) * j.log_derivative().norm();
            if v > best.0 {
                best = (v, p.z);
            }
        }
    }
    if points == 0 {
        return Err(LabError::EmptySet);
    }
    Ok(BlochNorm {
        value: best.0,
        argmax: best.1,
        points,
    })
}

/// Identity first, then rotations times `(z + a)/(1 + ā z)` with `a` uniform
/// in the disk of radius 1/2.
pub fn precomposition_sample(count: usize, seed: u64) -> Vec<MoebiusMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![MoebiusMap::identity()];
    while out.len() < count.max(1) {
        let theta = rng.gen::<f64>() * TAU;
        let a = C64::from_polar(0.5 * rng.gen::<f64>().sqrt(), rng.gen::<f64>() * TAU);
        out.push(MoebiusMap::rotation(theta).compose(&MoebiusMap::disk_automorphism(a).expect("|a| < 1")));
    }
    out
}

/// Carleson norms of `|(log f')'|² (1 - |z|²) dA` and
/// `(1 - |z|²)³ |S_f|² dA`, each maximized over precompositions `f ∘ T`.
#[derive(Clone, Debug, Serialize)]
pub struct BmoaReport {
    pub garsia: CarlesonNorm,
    pub schwarzian: CarlesonNorm,
    /// Index in the precomposition sample attaining each maximum.
    pub garsia_argmax: usize,
    pub schwarzian_argmax: usize,
    pub precompositions: usize,
    pub seed: u64,
    pub uncovered_fraction: f64,
}

/// The densities of `f ∘ T` are read off the grid of `f`: a test ball `B`
/// for `f ∘ T` is measured on the grid points of `T(B)`, with the Jacobian
/// `|(T^{-1})'|²` folded into the values.
pub fn bmoa_functionals(
    grid: &AnalyticSampleGrid,
    sampling: Sampling,
    precompositions: usize,
    seed: u64,
) -> Result<BmoaReport> {
    let sample = precomposition_sample(precompositions, seed);
    let mut garsia: Option<(CarlesonNorm, usize)> = None;
    let mut schw: Option<(CarlesonNorm, usize)> = None;
    for (k, t) in sample.iter().enumerate() {
        let tinv = t.inverse();
        let (gv, sv): (Vec<f64>, Vec<f64>) = grid
            .mesh
            .points()
            .par_iter()
            .zip(&grid.jets)
            .map(|(p, j)| {
                let Some(j) = j else { return (0.0, 0.0) };
                let z = tinv.apply_c(p.z);
                let jac = tinv.derivative(p.z).norm_sqr();
                let d = t.derivative(z);
                let rim = 1.0 - z.norm_sqr();
                let l = j.log_derivative() * d + t.second_derivative(z) / d;
                let s = j.schwarzian().norm_sqr() * d.norm_sqr().powi(2);
                (jac * l.norm_sqr() * rim, jac * rim.powi(3) * s)
            })
            .unzip();
        let (g, s) = if k == 0 {
            (
                mesh_norm(&grid.mesh, gv, sampling)?,
                mesh_norm(&grid.mesh, sv, sampling)?,
            )
        } else {
            (
                mesh_norm_pulled(&grid.mesh, gv, *t, sampling)?,
                mesh_norm_pulled(&grid.mesh, sv, *t, sampling)?,
            )
        };
        if garsia.as_ref().is_none_or(|b| g.value > b.0.value) {
            garsia = Some((g, k));
        }
        if schw.as_ref().is_none_or(|b| s.value > b.0.value) {
            schw = Some((s, k));
        }
    }
    let (garsia, garsia_argmax) = garsia.expect("sample is nonempty");
    let (schwarzian, schwarzian_argmax) = schw.expect("sample is nonempty");
    Ok(BmoaReport {
        garsia,
        schwarzian,
        garsia_argmax,
        schwarzian_argmax,
        precompositions: sample.len(),
        seed,
        uncovered_fraction: grid.uncovered_fraction,
    })
}

/// A real-direction line `{point + t e^{i angle}}` in the target plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub point: C64,
    pub angle: f64,
}

impl Line {
    pub fn real_axis() -> Self {
        Self {
            point: ZERO,
            angle: 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HaymanWu {
    pub length: f64,
    pub resolution: usize,
    pub segments: Vec<(C64, C64)>,
    /// Sign changes across poles rather than zeros.
    pub rejected_crossings: usize,
    /// Grid nodes where `f` could not be evaluated.
    pub unevaluated_nodes: usize,
}

impl HaymanWu {
    pub fn segments_csv(&self) -> String {
        let mut s = String::from("x0,y0,x1,y1\n");
        for (a, b) in &self.segments {
            s.push_str(&format!("{},{},{},{}\n", a.re, a.im, b.re, b.im));
        }
        s
    }
}

/// Length of `f^{-1}(line)` inside `|z| < 1 - 2/N` by marching squares on an
/// `N × N` grid of the square `[-1, 1]²` (`N` is made odd so that no node
/// falls on the origin), with crossings located by bisection.
pub fn hayman_wu_length(cm: &CoveringMap, line: Line, resolution: usize) -> Result<HaymanWu> {
    if resolution < 8 {
        return Err(invalid("resolution must be at least 8"));
    }
    let n = resolution | 1;
    let h = 2.0 / n as f64;
    let rot = C64::from_polar(1.0, -line.angle);
    let g = |z: C64| -> f64 {
        match evaluate_covering(cm, z) {
            Ok(Point::Finite(w)) => ((w - line.point) * rot).im,
            _ => f64::NAN,
        }
    };
    let node = |i: usize, j: usize| C64::new(-1.0 + i as f64 * h, -1.0 + j as f64 * h);
    let limit = 1.0 - h;
    let values: Vec<f64> = (0..(n + 1) * (n + 1))
        .into_par_iter()
        .map(|k| {
            let z = node(k % (n + 1), k / (n + 1));
            if z.norm() <= limit {
                g(z)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let unevaluated_nodes = values.iter().filter(|v| v.is_nan()).count();
    let at = |i: usize, j: usize| values[j * (n + 1) + i];
    let mut cache: HashMap<(usize, usize, usize, usize), Option<C64>> = HashMap::new();
    let mut rejected = 0;
    let mut crossing = |a: (usize, usize), b: (usize, usize)| -> Option<C64> {
        let key = (a.0, a.1, b.0, b.1);
        if let Some(c) = cache.get(&key) {
            return *c;
        }
        let (mut za, mut zb) = (node(a.0, a.1), node(b.0, b.1));
        let (mut ga, gb) = (at(a.0, a.1), at(b.0, b.1));
        let scale = ga.abs() + gb.abs();
        let mut gm = ga;
        for _ in 0..30 {
            let zm = 0.5 * (za + zb);
            gm = g(zm);
            if !gm.is_finite() {
                break;
            }
            if (gm >= 0.0) == (ga >= 0.0) {
                za = zm;
                ga = gm;
            } else {
                zb = zm;
            }
        }
        let out = if gm.is_finite() && gm.abs() <= 1e-3 * scale {
            Some(0.5 * (za + zb))
        } else {
            rejected += 1;
            None
        };
        cache.insert(key, out);
        out
    };
    let mut segments = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let c = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let v = c.map(|(x, y)| at(x, y));
            if v.iter().any(|x| !x.is_finite()) {
                continue;
            }
            let s = v.map(|x| x >= 0.0);
            let cuts: Vec<usize> = (0..4).filter(|&e| s[e] != s[(e + 1) % 4]).collect();
            let mut join = |e: usize, f: usize, segments: &mut Vec<(C64, C64)>| {
                let p = crossing(c[e], c[(e + 1) % 4]);
                let q = crossing(c[f], c[(f + 1) % 4]);
                if let (Some(p), Some(q)) = (p, q) {
                    segments.push((p, q));
                }
            };
            match cuts.len() {
                2 => join(cuts[0], cuts[1], &mut segments),
                4 => {
                    let centre = g(0.5 * (node(i, j) + node(i + 1, j + 1)));
                    if (centre >= 0.0) == s[0] {
                        join(0, 1, &mut segments);
                        join(2, 3, &mut segments);
                    } else {
                        join(3, 0, &mut segments);
                        join(1, 2, &mut segments);
                    }
                }
                _ => {}
            }
        }
    }
    Ok(HaymanWu {
        length: segments.iter().map(|(a, b)| (a - b).norm()).sum(),
        resolution: n,
        segments,
        rejected_crossings: rejected,
        unevaluated_nodes,
    })
}

/// One group element of the conjecture probe: `lhs = ∬_𝓕 (1 - |z|²)³ |γ'| dA`
/// and `rhs = diam γ(∂𝓕)`.
#[derive(Clone, Debug, Serialize)]
pub struct ConjectureRow {
    pub word: String,
    pub lhs: f64,
    /// Change of `lhs` when the quadrature panels are halved.
    pub lhs_change: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub running_min: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjectureTable {
    pub rows: Vec<ConjectureRow>,
    pub panels: usize,
    /// Largest relative `lhs` change under panel halving.
    pub max_lhs_change: f64,
}

impl ConjectureTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("word,lhs,lhs_change,rhs,ratio,running_min\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.word, r.lhs, r.lhs_change, r.rhs, r.ratio, r.running_min
            ));
        }
        s
    }
}

/// Polar Gauss–Legendre nodes over 𝓕, split at the gap endpoints so each
/// piece has a smooth outer radius.
fn domain_nodes(fd: &FundamentalDomain, panels: usize) -> Vec<(C64, f64)> {
    let mut cuts: Vec<f64> = vec![-PI, PI];
    for g in fd.gaps() {
        for t in [g.start, g.end] {
            cuts.push((t + PI).rem_euclid(TAU) - PI);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let rule = gauss_legendre_unit(8);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let ht = (b - a) / panels as f64;
        for pt in 0..panels {
            for &(u, wu) in &rule {
                let theta = a + (pt as f64 + u) * ht;
                let r_max = fd.radial_extent(theta);
                let hr = r_max / panels as f64;
                for pr in 0..panels {
                    for &(v, wv) in &rule {
                        let rho = (pr as f64 + v) * hr;
                        out.push((C64::from_polar(rho, theta), wu * ht * wv * hr * rho));
                    }
                }
            }
        }
    }
    out
}

/// Records both sides of the conjectured inequality for every enumerated
/// element, in orbit order, with the running minimum of `lhs / rhs`.
pub fn conjecture_probe(fd: &FundamentalDomain, orbit: &OrbitSummary, panels: usize) -> Result<ConjectureTable> {
    if panels == 0 {
        return Err(invalid("panels must be positive"));
    }
    let coarse = domain_nodes(fd, panels);
    let fine = domain_nodes(fd, 2 * panels);
    let boundary = fd.boundary_curve();
    let integral = |nodes: &[(C64, f64)], m: &MoebiusMap| -> f64 {
        nodes
            .iter()
            .map(|&(z, w)| w * (1.0 - z.norm_sqr()).powi(3) * m.derivative_modulus_unchecked(z))
            .sum()
    };
    let raw: Vec<(String, f64, f64, f64)> = orbit
        .elements
        .par_iter()
        .map(|e| {
            let lhs = integral(&fine, &e.map);
            let change = (lhs - integral(&coarse, &e.map)).abs() / lhs;
            let images: Vec<Arc> = boundary.iter().map(|a| a.image(&e.map)).collect();
            (e.word_string(), lhs, change, diameter_of_arcs(&images, 64))
        })
        .collect();
    let mut running = f64::INFINITY;
    let mut max_lhs_change = 0.0f64;
    let rows = raw
        .into_iter()
        .map(|(word, lhs, lhs_change, rhs)| {
            let ratio = lhs / rhs;
            running = running.min(ratio);
            max_lhs_change = max_lhs_change.max(lhs_change);
            ConjectureRow {
                word,
                lhs,
                lhs_change,
                rhs,
                ratio,
                running_min: running,
            }
        })
        .collect();
    Ok(ConjectureTable {
        rows,
        panels,
        max_lhs_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denjoy::{circle_model, two_gap_pair, RealBoundarySet};
    use crate::fuchsian::{boundary_orbit_length_sum, enumerate_group};
    use crate::hyperbolic::I;
    use proptest::prelude::{prop_assert, prop_assume, proptest, ProptestConfig};

    fn homogeneous() -> FundamentalDomain {
        circle_model(&two_gap_pair(1.0).unwrap(), None).unwrap()
    }

    fn orbit(fd: &FundamentalDomain, l: usize) -> OrbitSummary {
        enumerate_group(&generators_from_domain(fd), &Budget::word_length(l)).unwrap()
    }

    fn covering(l: usize) -> CoveringMap {
        let fd = homogeneous();
        numerical_covering(seed_riemann_map(&fd, 1e-10).unwrap(), &orbit(&fd, l))
    }

    fn sparse() -> MeshSpec {
        MeshSpec {
            rings: 12,
            base_angular: 8,
            radial: 1,
            order: 2,
        }
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn joukowski_closed_forms() {
        let j = joukowski_covering();
        assert!(close(j.value(I).unwrap(), ZERO, 1e-15));
        assert!(close(j.jet(I).unwrap().d1, ONE, 1e-15));
        assert_eq!(evaluate_covering(&j, ZERO).unwrap(), Point::Infinity);
        for k in 0..16 {
            let v = j.value(C64::from_polar(1.0, 0.4 * k as f64)).unwrap();
            assert!(v.im.abs() < 1e-15 && v.re.abs() <= 1.0);
        }
        // (log f')' = 2 / (z (z² - 1))
        let z = C64::new(0.3, -0.6);
        assert!(close(
            j.jet(z).unwrap().log_derivative(),
            2.0 / (z * (z * z - 1.0)),
            1e-12
        ));
        let c = cauchy_jet(|w| j.value(w), z, CauchyScheme::default()).unwrap();
        assert!(close(c.d3, j.jet(z).unwrap().d3, 1e-9 * j.jet(z).unwrap().d3.norm()));
    }

    #[test]
    fn schwarzian_oracles() {
        let sq = |z: C64| Ok(z * z);
        let s = schwarzian(sq, C64::new(0.5, 0.0), CauchyScheme::default()).unwrap();
        assert!((s - C64::new(-6.0, 0.0)).norm() < 1e-6);
        let half = CauchyScheme {
            radius_fraction: 0.25,
            nodes: 64,
        };
        let z = C64::new(0.2, 0.35);
        let j = joukowski_covering();
        let a = schwarzian(|w| j.value(w), z, CauchyScheme::default()).unwrap();
        let b = schwarzian(|w| j.value(w), z, half).unwrap();
        assert!((a - b).norm() <= 1e-5 * a.norm());
        let m = MoebiusMap::new(
            C64::new(1.0, 2.0),
            C64::new(0.3, 0.0),
            C64::new(0.1, -0.2),
            C64::new(2.0, 0.5),
            false,
        )
        .unwrap();
        for k in 0..20 {
            let z = C64::from_polar(0.9 * k as f64 / 20.0, 1.3 * k as f64);
            assert!(moebius_jet(&m, z).unwrap().schwarzian().norm() < 1e-10);
        }
    }

    #[test]
    fn jets_compose_like_derivatives() {
        let j = joukowski_covering();
        let t = MoebiusMap::disk_automorphism(C64::new(0.2, -0.1)).unwrap();
        let ft = j.precomposed(&t).unwrap();
        let z = C64::new(-0.4, 0.5);
        let exact = ft.jet(z).unwrap();
        let num = cauchy_jet(|w| ft.value(w), z, CauchyScheme::default()).unwrap();
        for (a, b) in [(exact.d1, num.d1), (exact.d2, num.d2), (exact.d3, num.d3)] {
            assert!((a - b).norm() <= 1e-9 * a.norm().max(1.0));
        }
    }

    #[test]
    fn zero_gap_seed_is_the_standard_map() {
        let fd = circle_model(&RealBoundarySet::full_line(), None).unwrap();
        let s = seed_riemann_map(&fd, 1e-12).unwrap();
        for z in [C64::new(0.3, 0.2), C64::new(-0.5, -0.4)] {
            let w = ((ONE + z) / (ONE - z)).powi(2);
            assert!(close(s.value(z).unwrap(), (w - 1.0) / (w + 1.0), 1e-12));
        }
        assert_eq!(s.boundary_value(0.0), Point::Finite(ONE));
        assert!(s.boundary_value(PI).approx_eq(Point::Finite(-ONE), 1e-12));
    }

    #[test]
    fn seed_fixes_plus_minus_one_and_is_odd() {
        let fd = homogeneous();
        let s = seed_riemann_map(&fd, 1e-10).unwrap();
        assert!(s.residual <= 1e-10);
        let diam = &s.correspondence[0];
        assert_eq!(diam.piece, "diameter");
        assert!((diam.start.unwrap() + 1.0).abs() < 1e-12 && (diam.end.unwrap() - 1.0).abs() < 1e-12);
        for x in [0.0, 0.2, 0.5, 0.9] {
            let a = s.value(C64::new(x, 0.0)).unwrap();
            let b = s.value(C64::new(-x, 0.0)).unwrap();
            assert!(a.im.abs() < 1e-12 && (a + b).norm() < 1e-10, "x={x}: {a} {b}");
        }
        // upper half of 𝓕 goes to the upper half-plane
        for z in fd.sample_interior(4, 16).into_iter().filter(|z| z.im > 1e-3) {
            assert!(s.value(z).unwrap().im > 0.0);
        }
        assert!(equivariance_residual(&s, 64).unwrap() <= 10.0 * s.eps_seed);
    }

    #[test]
    fn cross_ratio_stable_under_term_doubling() {
        let fd = homogeneous();
        let s = seed_riemann_map(&fd, 1e-10).unwrap();
        let mut fine = s.clone();
        fine.terms = 2 * s.terms;
        fine.coeffs = fit(&fine.disks, fine.terms).unwrap();
        let pts = [
            C64::new(0.1, 0.2),
            C64::new(-0.3, 0.1),
            C64::new(0.4, -0.3),
            C64::new(0.0, -0.5),
        ];
        let cr = |m: &SeedMap| {
            let v: Vec<C64> = pts.iter().map(|&z| m.value(z).unwrap()).collect();
            (v[0] - v[2]) * (v[1] - v[3]) / ((v[0] - v[3]) * (v[1] - v[2]))
        };
        let fold = |m: &mut SeedMap| {
            let p = -m.slit_jet(C64::new(-1.0, 0.0)).value.re.powi(2);
            m.fold = MoebiusMap::new(ONE, C64::new(p, 0.0), ONE, C64::new(-p, 0.0), false).unwrap();
        };
        fold(&mut fine);
        assert!((cr(&s) - cr(&fine)).norm() <= s.eps_seed * cr(&s).norm().max(1.0));
    }

    #[test]
    fn covering_is_invariant_and_symmetric() {
        let cm = covering(4);
        let gens = generators_from_domain(cm.seed().unwrap().domain());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 100 {
            let z = C64::from_polar(0.9 * rng.gen::<f64>().sqrt(), rng.gen::<f64>() * TAU);
            let g = &gens[checked % gens.len()].map;
            let (Ok(a), Ok(b)) = (cm.value(z), cm.value(g.apply_c(z))) else {
                continue;
            };
            assert!((a - b).norm() <= 10.0 * 1e-10 * (1.0 + a.norm()), "z={z}");
            assert!((cm.value(z.conj()).unwrap() - a.conj()).norm() <= 1e-10 * (1.0 + a.norm()));
            checked += 1;
        }
    }

    #[test]
    fn grid_validates_and_bloch_is_finite() {
        let g = sample_grid(&covering(3), sparse()).unwrap();
        assert!(g.validated * 10 + 10 >= g.jets.iter().filter(|j| j.is_some()).count());
        assert!(g.max_mismatch <= VALIDATION_TOL);
        assert!(g.jets.iter().flatten().all(|j| j.d1.norm() > 0.0));
        let b = bloch_norm(&g).unwrap();
        assert!(b.value.is_finite() && b.value > 0.0);
    }

    #[test]
    fn shallow_budget_is_reported() {
        let fd = circle_model(&crate::denjoy::triadic_cantor(3), None).unwrap();
        let cm = numerical_covering(seed_riemann_map(&fd, 1e-10).unwrap(), &orbit(&fd, 0));
        let err = sample_grid(&cm, sparse()).unwrap_err();
        assert!(matches!(err, LabError::InsufficientBudget { .. }), "{err}");
    }

    #[test]
    fn moebius_coverings_have_zero_functionals() {
        let mesh = DiskMesh::new(sparse()).unwrap();
        let m = MoebiusMap::disk_automorphism(C64::new(0.3, 0.1)).unwrap();
        let jets = mesh.points().iter().map(|p| moebius_jet(&m, p.z).ok()).collect();
        let grid = AnalyticSampleGrid {
            mesh,
            jets,
            core_radius: 0.0,
            uncovered_fraction: 0.0,
            validated: 0,
            max_mismatch: 0.0,
        };
        assert!(bloch_norm(&grid).unwrap().value > 0.0);
        let s = Sampling {
            boundary_net: 32,
            radii: 8,
        };
        let r = bmoa_functionals(&grid, s, 1, 0).unwrap();
        assert!(r.schwarzian.value < 1e-18);
        let id = AnalyticSampleGrid {
            jets: grid.mesh.points().iter().map(|p| Some(Jet::identity(p.z))).collect(),
            ..grid
        };
        assert_eq!(bloch_norm(&id).unwrap().value, 0.0);
        let r = bmoa_functionals(&id, s, 1, 0).unwrap();
        assert_eq!((r.garsia.value, r.schwarzian.value), (0.0, 0.0));
    }

    #[test]
    fn joukowski_hayman_wu_and_rotation() {
        let j = joukowski_covering();
        let hw = hayman_wu_length(&j, Line::real_axis(), 801).unwrap();
        assert!((hw.length - 2.0).abs() < 0.02, "{}", hw.length);
        assert_eq!(hw.rejected_crossings, 0);
        let theta = 0.7;
        let rotated = j.precomposed(&MoebiusMap::rotation(theta)).unwrap();
        let hr = hayman_wu_length(&rotated, Line::real_axis(), 801).unwrap();
        assert!((hr.length - hw.length).abs() < 0.01 * hw.length);
        let off = Line {
            point: C64::new(0.0, 5.0),
            angle: 0.0,
        };
        let far = hayman_wu_length(&j, off, 201).unwrap();
        assert!(far.length > 0.0);
    }

    #[test]
    fn hayman_wu_matches_orbit_lengths() {
        let fd = homogeneous();
        let orb = orbit(&fd, 6);
        let cm = numerical_covering(seed_riemann_map(&fd, 1e-10).unwrap(), &orb);
        let hw = hayman_wu_length(&cm, Line::real_axis(), 801).unwrap();
        let diameter = Arc::Segment {
            from: C64::new(-1.0, 0.0),
            to: C64::new(1.0, 0.0),
        };
        let diam: f64 = orb.elements.iter().map(|e| diameter.image(&e.map).length()).sum();
        let edges = boundary_orbit_length_sum(&fd, &orb);
        let expected = diam + 0.5 * edges.value;
        assert!(
            (hw.length - expected).abs() < 0.05 * expected,
            "{} vs {expected}",
            hw.length
        );
    }

    #[test]
    fn conjecture_identity_row() {
        let fd = homogeneous();
        let t = conjecture_probe(&fd, &orbit(&fd, 2), 4).unwrap();
        let id = &t.rows[0];
        assert_eq!(id.word, "e");
        assert!((id.rhs - 2.0).abs() < 1e-9);
        assert!(t.max_lhs_change < 0.01);
        assert!(t.rows.iter().all(|r| r.running_min <= r.ratio));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn moebius_schwarzian_vanishes(re in -2.0..2.0f64, im in -2.0..2.0f64, x in -0.9..0.9f64, y in -0.4..0.4f64) {
            let m = MoebiusMap::new(ONE, C64::new(re, im), C64::new(0.1, 0.0), ONE, false).unwrap();
            prop_assume!((C64::new(0.1, 0.0) * C64::new(x, y) + 1.0).norm() > 0.1);
            prop_assert!(moebius_jet(&m, C64::new(x, y)).unwrap().schwarzian().norm() < 1e-10);
        }

        #[test]
        fn seed_conjugation_symmetry(r in 0.0..0.95f64, t in 0.0..TAU) {
            let cm = covering(3);
            let z = C64::from_polar(r, t);
            if let (Ok(a), Ok(b)) = (cm.value(z), cm.value(z.conj())) {
                prop_assert!((a.conj() - b).norm() <= 1e-10 * (1.0 + a.norm()));
            }
        }
    }
}
