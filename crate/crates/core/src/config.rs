//! Experiment configuration: a JSON document validated field by field.

use serde::{Deserialize, Serialize};

use crate::capacity::{CapacityOptions, CompactSet};
use crate::carleson::Sampling;
use crate::denjoy::{fat_cantor, triadic_cantor, two_gap_pair, RealBoundarySet};
use crate::error::{LabError, Result};
use crate::fuchsian::Budget;
use crate::quadrature::MeshSpec;

/// How the boundary set is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundarySpec {
    /// Explicit intervals; `"inf"` and `"-inf"` stand for the infinite bounds.
    Intervals(RealBoundarySet),
    TwoGapPair {
        ell: f64,
    },
    TriadicCantor {
        depth: i64,
    },
    FatCantor {
        depth: i64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    /// Top word length; stability checks also run at `word_length - 1`.
    pub word_length: i64,
    #[serde(default)]
    pub origin_gap: Option<f64>,
    #[serde(default = "default_max_elements")]
    pub max_elements: i64,
}

fn default_max_elements() -> i64 {
    2_000_000
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            word_length: 4,
            origin_gap: None,
            max_elements: default_max_elements(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub boundary_net: i64,
    pub radii: i64,
    /// Automorphisms for the SFLT functional and BMOA precompositions.
    pub automorphisms: i64,
    pub seed: Option<u64>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            boundary_net: 64,
            radii: 10,
            automorphisms: 32,
            seed: Some(0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub rings: i64,
    pub base_angular: i64,
    pub radial: i64,
    pub order: i64,
    /// Number of nested meshes, each refining the previous one.
    pub levels: i64,
    /// Polar panels per direction for the conjecture integrals.
    pub panels: i64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rings: 12,
            base_angular: 8,
            radial: 1,
            order: 2,
            levels: 2,
            panels: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityConfig {
    pub n_max: i64,
    pub restarts: i64,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        Self { n_max: 16, restarts: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogeneityConfig {
    pub t_max: f64,
    pub perfectness_levels: i64,
    pub perfectness_resolution: i64,
}

impl Default for HomogeneityConfig {
    fn default() -> Self {
        Self {
            t_max: 16.0,
            perfectness_levels: 5,
            perfectness_resolution: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoveringChoice {
    NumericalSeed,
    ExplicitJoukowski,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoveringConfig {
    pub kind: CoveringChoice,
    /// Grid nodes per side for the Hayman–Wu tracer; must be odd.
    pub hayman_wu_resolution: i64,
}

impl Default for CoveringConfig {
    fn default() -> Self {
        Self {
            kind: CoveringChoice::NumericalSeed,
            hayman_wu_resolution: 801,
        }
    }
}

pub const DEFAULT_EPS_SEED: f64 = 1e-10;

fn default_eps_seed() -> f64 {
    DEFAULT_EPS_SEED
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub boundary_set: BoundarySpec,
    /// Index of the gap whose arc is centred at `θ = π`; the longest by default.
    #[serde(default)]
    pub base_gap: Option<i64>,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub capacity: CapacityConfig,
    #[serde(default)]
    pub homogeneity: HomogeneityConfig,
    #[serde(default)]
    pub covering: CoveringConfig,
    #[serde(default = "default_eps_seed")]
    pub eps_seed: f64,
}

fn field(name: &str, message: impl Into<String>) -> LabError {
    LabError::Validation {
        field: name.into(),
        message: message.into(),
    }
}

fn positive_int(name: &str, v: i64) -> Result<usize> {
    if v > 0 {
        Ok(v as usize)
    } else {
        Err(field(name, format!("must be a positive integer, got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(field(name, format!("must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    /// Parses JSON and validates every field.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| field("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.boundary_set()?;
        if let Some(g) = self.base_gap {
            if g < 0 {
                return Err(field("base_gap", format!("must be a nonnegative index, got {g}")));
            }
        }
        positive_int("budgets.word_length", self.budgets.word_length)?;
        if let Some(floor) = self.budgets.origin_gap {
            if !(floor > 0.0 && floor < 1.0) {
                return Err(field("budgets.origin_gap", format!("must lie in (0, 1), got {floor}")));
            }
        }
        positive_int("budgets.max_elements", self.budgets.max_elements)?;
        if self.sampling.boundary_net < 4 {
            return Err(field("sampling.boundary_net", "needs at least 4 net points"));
        }
        positive_int("sampling.radii", self.sampling.radii)?;
        positive_int("sampling.automorphisms", self.sampling.automorphisms)?;
        if self.sampling.seed.is_none() {
            return Err(field(
                "sampling.seed",
                "a seed is required whenever sampling is configured",
            ));
        }
        let q = &self.quadrature;
        if !(2..=20).contains(&q.rings) {
            return Err(field(
                "quadrature.rings",
                format!("must lie in 2..=20, got {}", q.rings),
            ));
        }
        if q.base_angular < 4 {
            return Err(field("quadrature.base_angular", "needs at least 4 angular cells"));
        }
        positive_int("quadrature.radial", q.radial)?;
        positive_int("quadrature.order", q.order)?;
        positive_int("quadrature.levels", q.levels)?;
        positive_int("quadrature.panels", q.panels)?;
        if self.capacity.n_max < 6 {
            return Err(field(
                "capacity.n_max",
                format!("must be at least 6, got {}", self.capacity.n_max),
            ));
        }
        positive_int("capacity.restarts", self.capacity.restarts)?;
        positive("homogeneity.t_max", self.homogeneity.t_max)?;
        positive_int("homogeneity.perfectness_levels", self.homogeneity.perfectness_levels)?;
        positive_int(
            "homogeneity.perfectness_resolution",
            self.homogeneity.perfectness_resolution,
        )?;
        let r = self.covering.hayman_wu_resolution;
        if r < 5 || r % 2 == 0 {
            return Err(field(
                "covering.hayman_wu_resolution",
                format!("must be odd and at least 5, got {r}"),
            ));
        }
        let eps = positive("eps_seed", self.eps_seed)?;
        if eps >= 1e-2 {
            return Err(field("eps_seed", format!("must be below 1e-2, got {eps}")));
        }
        Ok(())
    }

    pub fn boundary_set(&self) -> Result<RealBoundarySet> {
        match &self.boundary_set {
            BoundarySpec::Intervals(e) => Ok(e.clone()),
            BoundarySpec::TwoGapPair { ell } => {
                two_gap_pair(*ell).map_err(|e| field("boundary_set.ell", e.to_string()))
            }
            BoundarySpec::TriadicCantor { depth } | BoundarySpec::FatCantor { depth } => {
                if !(0..=12).contains(depth) {
                    return Err(field("boundary_set.depth", format!("must lie in 0..=12, got {depth}")));
                }
                Ok(match self.boundary_set {
                    BoundarySpec::TriadicCantor { .. } => triadic_cantor(*depth as u32),
                    _ => fat_cantor(*depth as u32),
                })
            }
        }
    }

    /// The boundary set as a compact subset of ℝ, for capacity estimates.
    pub fn compact_set(&self) -> Result<CompactSet> {
        let e = self.boundary_set()?;
        if e.contains_infinity() {
            return Err(field(
                "boundary_set",
                "capacity needs a bounded set without the point at infinity",
            ));
        }
        CompactSet::new(e.intervals().to_vec()).map_err(|err| field("boundary_set", err.to_string()))
    }

    pub fn base_gap(&self) -> Option<usize> {
        self.base_gap.map(|g| g as usize)
    }

    /// Budget with the given word length and the configured floor and cap.
    pub fn budget_at(&self, word_length: usize) -> Budget {
        Budget {
            max_word_length: Some(word_length),
            min_origin_gap: self.budgets.origin_gap,
            max_elements: self.budgets.max_elements as usize,
        }
    }

    pub fn word_length(&self) -> usize {
        self.budgets.word_length as usize
    }

    pub fn sampling(&self) -> Sampling {
        Sampling {
            boundary_net: self.sampling.boundary_net as usize,
            radii: self.sampling.radii as usize,
        }
    }

    pub fn seed(&self) -> u64 {
        self.sampling.seed.unwrap_or(0)
    }

    pub fn automorphisms(&self) -> usize {
        self.sampling.automorphisms as usize
    }

    /// Meshes for each quadrature level, coarsest first.
    pub fn meshes(&self) -> Vec<MeshSpec> {
        let q = &self.quadrature;
        let mut spec = MeshSpec {
            rings: q.rings as usize,
            base_angular: q.base_angular as usize,
            radial: q.radial as usize,
            order: q.order as usize,
        };
        let mut out = Vec::new();
        for _ in 0..q.levels {
            out.push(spec);
            spec = spec.refined();
        }
        out
    }

    pub fn capacity_options(&self) -> CapacityOptions {
        CapacityOptions {
            n_max: self.capacity.n_max as usize,
            restarts: self.capacity.restarts as usize,
            seed: self.seed(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"boundary_set": {"kind": "two_gap_pair", "ell": 1.0}}"#).unwrap();
        assert_eq!(cfg.word_length(), 4);
        assert_eq!(cfg.eps_seed, DEFAULT_EPS_SEED);
        assert_eq!(cfg.meshes().len(), 2);
        assert_eq!(cfg.boundary_set().unwrap(), two_gap_pair(1.0).unwrap());
    }

    #[test]
    fn explicit_intervals_with_infinite_bounds() {
        let cfg = ExperimentConfig::from_json(
            r#"{"boundary_set": {"kind": "intervals", "intervals": [["-inf", 0.0], [1.0, "inf"]], "infinity": true}}"#,
        )
        .unwrap();
        let e = cfg.boundary_set().unwrap();
        assert_eq!(e.intervals(), &[(f64::NEG_INFINITY, 0.0), (1.0, f64::INFINITY)]);
        assert!(cfg.compact_set().is_err());
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            (r#""budgets": {"word_length": -2}"#, "budgets.word_length"),
            (
                r#""sampling": {"boundary_net": 64, "radii": 10, "automorphisms": 4}"#,
                "sampling.seed",
            ),
            (
                r#""quadrature": {"rings": 1, "base_angular": 8, "radial": 1, "order": 2, "levels": 1, "panels": 4}"#,
                "quadrature.rings",
            ),
            (r#""eps_seed": -1.0"#, "eps_seed"),
            (
                r#""covering": {"kind": "numerical-seed", "hayman_wu_resolution": 100}"#,
                "covering.hayman_wu_resolution",
            ),
        ];
        for (extra, name) in cases {
            let text = format!(r#"{{"boundary_set": {{"kind": "two_gap_pair", "ell": 1.0}}, {extra}}}"#);
            match ExperimentConfig::from_json(&text) {
                Err(LabError::Validation { field, .. }) => assert_eq!(field, name),
                other => panic!("{name}: {other:?}"),
            }
        }
        let err = ExperimentConfig::from_json(r#"{"boundary_set": {"kind": "two_gap_pair", "ell": 3.0}}"#).unwrap_err();
        assert!(err.to_string().contains("boundary_set.ell"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = ExperimentConfig::from_json(r#"{"boundary_set": {"kind": "fat_cantor", "depth": 2}, "budget": {}}"#)
            .unwrap_err();
        assert!(matches!(err, LabError::Validation { .. }));
    }

    #[test]
    fn round_trip() {
        let cfg =
            ExperimentConfig::from_json(r#"{"boundary_set": {"kind": "triadic_cantor", "depth": 3}, "base_gap": 1}"#)
                .unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }
}
