//! Subcommand runner behind the `denjoy-lab` binary.
//!
//! Each subcommand computes everything first and only then writes its files,
//! each through a temporary name, so a failure leaves earlier outputs alone.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use serde_json::{json, Value};

use crate::capacity::capacity_estimate;
use crate::carleson::{
    beltrami_carleson_check, finite_and_stable, orbit_pushforward, property_h_probe, BeltramiDensity, DiscreteMeasure,
};
use crate::config::{CoveringChoice, ExperimentConfig};
use crate::covering::{
    bloch_norm, bmoa_functionals, conjecture_probe, equivariance_residual, hayman_wu_length, joukowski_covering,
    numerical_covering, sample_grid, seed_riemann_map, CoveringMap, Line,
};
use crate::denjoy::{
    carleson_homogeneity_constant, chord_arc_constant, circle_model, uniform_perfectness_constant, FundamentalDomain,
    PerfectnessOptions,
};
use crate::error::{LabError, Result};
use crate::fuchsian::{
    boundary_orbit_length_sum, convergence_exponent, enumerate_group, generators_from_domain, min_trace,
    sflt_functional, OrbitSummary,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Relative change below which a quantity counts as stable across budgets.
pub const STABILITY_TOL: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Homogeneity,
    Capacity,
    Group,
    Measures,
    Covering,
    ProbeConjecture,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Homogeneity => "homogeneity",
            Subcommand::Capacity => "capacity",
            Subcommand::Group => "group",
            Subcommand::Measures => "measures",
            Subcommand::Covering => "covering",
            Subcommand::ProbeConjecture => "probe-conjecture",
        }
    }
}

/// Exit status for an error: 2 for bad input, 3 for numerical failure.
pub fn exit_code(err: &LabError) -> i32 {
    match err {
        LabError::Validation { .. } | LabError::InvalidInput(_) | LabError::Json(_) | LabError::EmptySet => 2,
        LabError::NonConvergence { .. }
        | LabError::Divergent { .. }
        | LabError::Optimizer(_)
        | LabError::Irreducible { .. }
        | LabError::InsufficientBudget { .. }
        | LabError::DerivativeValidation { .. } => 3,
        _ => 1,
    }
}

/// Reads, validates and runs; returns the files written.
pub fn run_file(sub: Subcommand, config: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(config)?;
    let cfg = ExperimentConfig::from_json(&text)?;
    run(sub, &cfg, out)
}

pub fn run(sub: Subcommand, cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    info!("running {}", sub.name());
    let artifacts = match sub {
        Subcommand::Homogeneity => homogeneity(cfg)?,
        Subcommand::Capacity => capacity(cfg)?,
        Subcommand::Group => group(cfg)?,
        Subcommand::Measures => measures(cfg)?,
        Subcommand::Covering => covering(cfg)?,
        Subcommand::ProbeConjecture => probe_conjecture(cfg)?,
    };
    write_all(sub, cfg, out, artifacts)
}

enum Artifact {
    Json(&'static str, Value),
    Csv(&'static str, String),
}

fn write_all(sub: Subcommand, cfg: &ExperimentConfig, out: &Path, artifacts: Vec<Artifact>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let config = serde_json::to_value(cfg)?;
    let mut written = Vec::new();
    for a in artifacts {
        let (name, body) = match a {
            Artifact::Json(name, results) => {
                let doc = json!({
                    "tool": "denjoy-lab",
                    "version": VERSION,
                    "subcommand": sub.name(),
                    "config": config,
                    "results": results,
                });
                (name, serde_json::to_string_pretty(&doc)? + "\n")
            }
            Artifact::Csv(name, body) => {
                let header = format!(
                    "# denjoy-lab {VERSION} {}\n# config {}\n",
                    sub.name(),
                    serde_json::to_string(&config)?
                );
                (name, header + &body)
            }
        };
        let path = out.join(name);
        let tmp = out.join(format!(".{name}.tmp"));
        fs::write(&tmp, body)?;
        fs::rename(&tmp, &path)?;
        info!("wrote {}", path.display());
        written.push(path);
    }
    Ok(written)
}

/// Appends constant columns to every row of a CSV table.
fn with_columns(csv: &str, columns: &[(&str, String)]) -> String {
    let mut out = String::with_capacity(csv.len() * 2);
    for (i, line) in csv.lines().enumerate() {
        out.push_str(line);
        for (name, value) in columns {
            out.push(',');
            out.push_str(if i == 0 { name } else { value });
        }
        out.push('\n');
    }
    out
}

fn budget_columns(cfg: &ExperimentConfig, word_length: usize) -> Vec<(&'static str, String)> {
    vec![
        ("word_length", word_length.to_string()),
        (
            "origin_gap",
            cfg.budgets.origin_gap.map(|g| g.to_string()).unwrap_or_default(),
        ),
    ]
}

fn domain(cfg: &ExperimentConfig) -> Result<FundamentalDomain> {
    circle_model(&cfg.boundary_set()?, cfg.base_gap())
}

fn orbit_at(fd: &FundamentalDomain, cfg: &ExperimentConfig, word_length: usize) -> Result<OrbitSummary> {
    let mut orbit = enumerate_group(&generators_from_domain(fd), &cfg.budget_at(word_length))?;
    orbit.compute_boundary_lengths(fd);
    Ok(orbit)
}

/// Word lengths of the two largest budgets (one if the top is 1).
fn top_budgets(cfg: &ExperimentConfig) -> Vec<usize> {
    let l = cfg.word_length();
    if l > 1 {
        vec![l - 1, l]
    } else {
        vec![l]
    }
}

fn homogeneity(cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let e = cfg.boundary_set()?;
    let h = &cfg.homogeneity;
    let constant = carleson_homogeneity_constant(&e, h.t_max)?;
    let opts = PerfectnessOptions {
        resolution: h.perfectness_resolution as usize,
        levels: h.perfectness_levels as usize,
        capacity: crate::capacity::CapacityOptions {
            seed: cfg.seed(),
            ..PerfectnessOptions::default().capacity
        },
    };
    let perfectness = uniform_perfectness_constant(&e, &opts)?;
    Ok(vec![Artifact::Json(
        "homogeneity.json",
        json!({
            "carleson_homogeneity": constant,
            "t_max": h.t_max,
            "uniform_perfectness": perfectness,
            "perfectness_levels": opts.levels,
            "perfectness_resolution": opts.resolution,
        }),
    )])
}

fn capacity(cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let set = cfg.compact_set()?;
    let opts = cfg.capacity_options();
    let est = capacity_estimate(&set, &opts)?;
    let mut csv = String::from("n,d_n\n");
    for (n, d) in &est.table {
        csv.push_str(&format!("{n},{d}\n"));
    }
    let cols = [
        ("n_max", opts.n_max.to_string()),
        ("restarts", opts.restarts.to_string()),
        ("seed", opts.seed.to_string()),
    ];
    Ok(vec![
        Artifact::Csv("capacity.csv", with_columns(&csv, &cols)),
        Artifact::Json("capacity.json", serde_json::to_value(&est)?),
    ])
}

fn group(cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let fd = domain(cfg)?;
    let mut levels = Vec::new();
    let mut top = None;
    for l in top_budgets(cfg) {
        let orbit = orbit_at(&fd, cfg, l)?;
        let alphas: Vec<f64> = (1..=8).map(|k| 0.25 * k as f64).collect();
        let conv = convergence_exponent(&orbit, &alphas)?;
        let lengths = boundary_orbit_length_sum(&fd, &orbit);
        let trace = if orbit.len() > 1 {
            Some(min_trace(&orbit)?)
        } else {
            None
        };
        let sflt = sflt_functional(&fd, &orbit, cfg.automorphisms(), cfg.seed());
        levels.push(json!({
            "word_length": l,
            "elements": orbit.len(),
            "capped": orbit.capped,
            "collisions": orbit.collisions,
            "tail_estimate": orbit.tail_estimate,
            "convergence": conv,
            "boundary_length_sum": lengths,
            "min_trace": trace,
            "sflt": sflt,
        }));
        top = Some((l, orbit, sflt.sup));
    }
    let (l, orbit, sup) = top.expect("at least one budget");
    let sflt_stable = levels.len() == 2
        && finite_and_stable(
            levels[0]["sflt"]["sup"].as_f64().unwrap_or(f64::NAN),
            sup,
            STABILITY_TOL,
        );
    let chord_arc = chord_arc_constant(&fd, 64, cfg.seed())?;
    Ok(vec![
        Artifact::Csv(
            "group_orbit.csv",
            with_columns(&orbit.to_csv(), &budget_columns(cfg, l)),
        ),
        Artifact::Json(
            "group.json",
            json!({
                "generators": fd.pair_count(),
                "chord_arc": chord_arc,
                "levels": levels,
                "sflt_finite_and_stable": sflt_stable,
            }),
        ),
    ])
}

fn measures(cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let fd = domain(cfg)?;
    let nu = DiscreteMeasure::arclength(&fd.edges())?;
    let sampling = cfg.sampling();
    let mut probes = Vec::new();
    let mut top = None;
    for l in top_budgets(cfg) {
        let orbit = orbit_at(&fd, cfg, l)?;
        let probe = property_h_probe(&fd, &orbit, &nu, sampling)?;
        probes.push(probe);
        top = Some(orbit);
    }
    let orbit = top.expect("at least one budget");
    let h_stable = match probes.as_slice() {
        [a, b] => finite_and_stable(a.norm_tilde.value, b.norm_tilde.value, STABILITY_TOL),
        _ => false,
    };
    let lengths = boundary_orbit_length_sum(&fd, &orbit);
    let pushed = orbit_pushforward(&fd, &nu, &orbit)?;
    let mesh = cfg.meshes()[0];
    let beltrami: Vec<Value> = [BeltramiDensity::zero(), BeltramiDensity::rim_vanishing(0.5)]
        .iter()
        .map(|mu| beltrami_carleson_check(mu, &fd, &orbit, mesh, sampling).and_then(|r| Ok(serde_json::to_value(r)?)))
        .collect::<Result<_>>()?;
    let mut csv = String::from("word_length,elements,norm_on_f,norm_tilde,tilde_mass,tilde_tail\n");
    for p in &probes {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.budget.max_word_length.unwrap_or(0),
            p.elements,
            p.norm_on_f.value,
            p.norm_tilde.value,
            p.tilde_mass.value,
            p.tilde_mass.tail
        ));
    }
    let cols = [
        ("boundary_net", sampling.boundary_net.to_string()),
        ("radii", sampling.radii.to_string()),
    ];
    Ok(vec![
        Artifact::Csv("measures.csv", with_columns(&csv, &cols)),
        Artifact::Json(
            "measures.json",
            json!({
                "property_h": probes,
                "property_h_finite_and_stable": h_stable,
                "pushforward_mass": pushed.total_mass(),
                "boundary_length_sum": lengths,
                "beltrami": beltrami,
            }),
        ),
    ])
}

/// Coverings labelled by word length, with the seed residual when numerical.
type Coverings = (Vec<(Option<usize>, CoveringMap)>, Option<f64>);

fn covering_maps(cfg: &ExperimentConfig) -> Result<Coverings> {
    match cfg.covering.kind {
        CoveringChoice::ExplicitJoukowski => Ok((vec![(None, joukowski_covering())], None)),
        CoveringChoice::NumericalSeed => {
            let fd = domain(cfg)?;
            let seed = seed_riemann_map(&fd, cfg.eps_seed)?;
            info!("seed map: {} terms, residual {:e}", seed.terms(), seed.residual);
            let equivariance = equivariance_residual(&seed, 64)?;
            let maps = top_budgets(cfg)
                .into_iter()
                .map(|l| {
                    let orbit = enumerate_group(&generators_from_domain(&fd), &cfg.budget_at(l))?;
                    Ok((Some(l), numerical_covering(seed.clone(), &orbit)))
                })
                .collect::<Result<_>>()?;
            Ok((maps, Some(equivariance)))
        }
    }
}

fn covering(cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let (maps, equivariance) = covering_maps(cfg)?;
    let sampling = cfg.sampling();
    let mut rows = Vec::new();
    let mut csv =
        String::from("word_length,rings,base_angular,bloch,garsia,schwarzian,uncovered_fraction,max_mismatch\n");
    for (l, cm) in &maps {
        for mesh in cfg.meshes() {
            let grid = sample_grid(cm, mesh)?;
            let bloch = bloch_norm(&grid)?;
            let bmoa = bmoa_functionals(&grid, sampling, cfg.automorphisms(), cfg.seed())?;
            info!("word length {l:?}, {} rings: Bloch {:.6}", mesh.rings, bloch.value);
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                l.map(|l| l.to_string()).unwrap_or_default(),
                mesh.rings,
                mesh.base_angular,
                bloch.value,
                bmoa.garsia.value,
                bmoa.schwarzian.value,
                grid.uncovered_fraction,
                grid.max_mismatch
            ));
            rows.push(json!({
                "word_length": l,
                "mesh": mesh,
                "bloch": bloch,
                "bmoa": bmoa,
                "validated_points": grid.validated,
                "max_mismatch": grid.max_mismatch,
            }));
        }
    }
    let (_, top) = maps.last().expect("at least one covering");
    let hw = hayman_wu_length(top, Line::real_axis(), cfg.covering.hayman_wu_resolution as usize)?;
    let seed = top.seed().map(|s| {
        json!({
            "terms": s.terms(),
            "residual": s.residual,
            "eps_seed": s.eps_seed,
            "correspondence": s.correspondence,
        })
    });
    let cols = [
        ("boundary_net", sampling.boundary_net.to_string()),
        ("radii", sampling.radii.to_string()),
        ("precompositions", cfg.automorphisms().to_string()),
        ("seed", cfg.seed().to_string()),
    ];
    let hw_cols = [("resolution", hw.resolution.to_string())];
    Ok(vec![
        Artifact::Csv("covering.csv", with_columns(&csv, &cols)),
        Artifact::Csv("hayman_wu_segments.csv", with_columns(&hw.segments_csv(), &hw_cols)),
        Artifact::Json(
            "covering.json",
            json!({
                "kind": top.kind(),
                "seed_map": seed,
                "equivariance_residual": equivariance,
                "functionals": rows,
                "hayman_wu": {
                    "length": hw.length,
                    "resolution": hw.resolution,
                    "segments": hw.segments.len(),
                    "rejected_crossings": hw.rejected_crossings,
                    "unevaluated_nodes": hw.unevaluated_nodes,
                },
            }),
        ),
    ])
}

fn probe_conjecture(cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let fd = domain(cfg)?;
    let l = cfg.word_length();
    let orbit = enumerate_group(&generators_from_domain(&fd), &cfg.budget_at(l))?;
    let table = conjecture_probe(&fd, &orbit, cfg.quadrature.panels as usize)?;
    let mut cols = budget_columns(cfg, l);
    cols.push(("panels", table.panels.to_string()));
    Ok(vec![
        Artifact::Csv("conjecture.csv", with_columns(&table.to_csv(), &cols)),
        Artifact::Json(
            "conjecture.json",
            json!({
                "elements": table.rows.len(),
                "panels": table.panels,
                "max_lhs_change": table.max_lhs_change,
                "min_ratio": table.rows.last().map(|r| r.running_min),
            }),
        ),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(text).unwrap()
    }

    fn results(path: &Path) -> Value {
        let doc: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(doc["version"], VERSION);
        assert!(doc["config"]["boundary_set"].is_object());
        doc["results"].clone()
    }

    #[test]
    fn homogeneity_of_two_rays() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(
            r#"{"boundary_set": {"kind": "intervals", "intervals": [["-inf", 0.0], [1.0, "inf"]], "infinity": true}}"#,
        );
        let files = run(Subcommand::Homogeneity, &cfg, dir.path()).unwrap();
        let r = results(&files[0]);
        assert_eq!(r["carleson_homogeneity"].as_f64().unwrap(), 0.5);
    }

    #[test]
    fn capacity_of_the_unit_segment() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(
            r#"{"boundary_set": {"kind": "intervals", "intervals": [[-1.0, 1.0]], "infinity": false}, "capacity": {"n_max": 16, "restarts": 2}}"#,
        );
        let files = run(Subcommand::Capacity, &cfg, dir.path()).unwrap();
        let csv = fs::read_to_string(&files[0]).unwrap();
        assert!(csv.starts_with("# denjoy-lab"));
        assert!(csv.contains("n,d_n,n_max,restarts,seed\n"));
        let cap = results(&files[1])["extrapolated"].as_f64().unwrap();
        assert!((cap - 0.5).abs() < 0.025, "{cap}");
    }

    #[test]
    fn failures_leave_prior_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let ok = config(r#"{"boundary_set": {"kind": "intervals", "intervals": [[-1.0, 1.0]], "infinity": false}}"#);
        run(Subcommand::Homogeneity, &ok, dir.path()).unwrap();
        let before = fs::read_to_string(dir.path().join("homogeneity.json")).unwrap();
        let bad = config(r#"{"boundary_set": {"kind": "two_gap_pair", "ell": 1.0}}"#);
        let err = run(Subcommand::Capacity, &bad, dir.path()).unwrap_err();
        assert_eq!(exit_code(&err), 2);
        assert_eq!(fs::read_to_string(dir.path().join("homogeneity.json")).unwrap(), before);
        assert!(!dir.path().join("capacity.json").exists());
    }

    #[test]
    fn csv_columns_are_appended() {
        let t = with_columns("a,b\n1,2\n", &[("c", "x".into())]);
        assert_eq!(t, "a,b,c\n1,2,x\n");
    }
}
