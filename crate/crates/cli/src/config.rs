//! Flat key=value experiment configs with `[section]` headers.
//!
//! The format is deliberately plain text so experiment definitions diff
//! cleanly; every parameter has an explicit default matching the benchmark
//! setup, and seeds are always explicit (never wall-clock derived).

use np_newton::grf::GrfSpec;
use np_newton::mesh::{ElemKind, HoleSpec, MeshSpec, TagConvention};
use np_newton::solver::SolveOptions;
use np_newton::train::AdamWConfig;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

type Sections = BTreeMap<String, BTreeMap<String, String>>;

fn parse_sections(text: &str) -> Result<Sections, ConfigError> {
    let mut sections: Sections = BTreeMap::new();
    let mut current = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ConfigError(format!("line {}: unterminated section", lineno + 1)))?;
            current = name.trim().to_string();
            sections.entry(current.clone()).or_default();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {}: expected key = value", lineno + 1)))?;
        sections
            .entry(current.clone())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(sections)
}

struct Lookup {
    sections: Sections,
}

impl Lookup {
    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(|s| s.as_str())
    }

    fn parse<T: std::str::FromStr>(
        &self,
        section: &str,
        key: &str,
        default: T,
    ) -> Result<T, ConfigError> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                ConfigError(format!("[{section}] {key}: cannot parse {v:?}"))
            }),
        }
    }

    fn string(&self, section: &str, key: &str, default: &str) -> String {
        self.raw(section, key).unwrap_or(default).to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemFamily {
    NonlinearPoisson,
    NeoHookean,
}

/// Fully resolved experiment definition.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub family: ProblemFamily,
    pub train_mesh: MeshSpec,
    pub solve_mesh: MeshSpec,
    pub forcing: GrfSpec,
    pub forcing_sigma_case3: f64,
    pub init_grf: GrfSpec,
    pub u_t_case1: f64,
    pub u_t_case2: f64,
    /// Upper end of the uniform top-displacement range sampled during
    /// dataset generation.
    pub u_t_max: f64,
    pub youngs: f64,
    pub poisson_ratio: f64,
    pub delta_u_t: f64,
    pub solver: SolveOptions,
    pub m: usize,
    pub val_fraction: f64,
    pub data_seed: u64,
    pub batch: usize,
    pub optimizer: AdamWConfig,
    pub patience: usize,
    pub max_epochs: usize,
    pub hidden: usize,
    pub latent: usize,
    pub blocks: usize,
    pub scaling_blocks: usize,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub eval_seed: u64,
    pub dataset_file: String,
    pub model_file: String,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let lk = Lookup {
        sections: parse_sections(&text)?,
    };

    let family = match lk.string("problem", "kind", "nonlinear_poisson").as_str() {
        "nonlinear_poisson" => ProblemFamily::NonlinearPoisson,
        "neo_hookean" => ProblemFamily::NeoHookean,
        other => return Err(ConfigError(format!("unknown problem kind {other:?}"))),
    };
    let default_kind = match family {
        ProblemFamily::NonlinearPoisson => "tri",
        ProblemFamily::NeoHookean => "quad",
    };
    let kind = match lk.string("mesh", "kind", default_kind).as_str() {
        "tri" => ElemKind::P1Tri,
        "quad" => ElemKind::Q1Quad,
        other => return Err(ConfigError(format!("unknown element kind {other:?}"))),
    };
    let convention = match family {
        ProblemFamily::NonlinearPoisson => TagConvention::Poisson,
        ProblemFamily::NeoHookean => TagConvention::Elasticity,
    };
    let hole = if lk.parse("mesh", "hole", false)? {
        Some(HoleSpec {
            center: [
                lk.parse("mesh", "hole_cx", 0.5)?,
                lk.parse("mesh", "hole_cy", 0.5)?,
            ],
            semi_axes: [
                lk.parse("mesh", "hole_rx", 0.3)?,
                lk.parse("mesh", "hole_ry", 0.25)?,
            ],
        })
    } else {
        None
    };
    let train_n = lk.parse("mesh", "train_n", 16usize)?;
    let solve_n = lk.parse("mesh", "solve_n", train_n)?;
    let mesh = |n: usize| MeshSpec {
        n,
        kind,
        hole,
        convention,
    };

    let mut solver = SolveOptions::default();
    solver.abs_tol = lk.parse("solver", "abs_tol", solver.abs_tol)?;
    solver.rel_tol = lk.parse("solver", "rel_tol", solver.rel_tol)?;
    solver.max_iters = lk.parse("solver", "max_iters", solver.max_iters)?;
    solver.divergence_cap = lk.parse("solver", "divergence_cap", solver.divergence_cap)?;

    let mut optimizer = AdamWConfig::default();
    optimizer.lr = lk.parse("train", "lr", optimizer.lr)?;
    optimizer.weight_decay = lk.parse("train", "weight_decay", optimizer.weight_decay)?;

    Ok(ExperimentConfig {
        family,
        train_mesh: mesh(train_n),
        solve_mesh: mesh(solve_n),
        forcing: GrfSpec::new(
            lk.parse("problem", "forcing_mean", 0.0)?,
            lk.parse("problem", "forcing_sigma", 0.1)?,
            lk.parse("problem", "forcing_ell", 0.1)?,
        ),
        forcing_sigma_case3: lk.parse("problem", "forcing_sigma_case3", 1.0)?,
        init_grf: GrfSpec::new(
            0.0,
            lk.parse("data", "init_sigma", 0.1)?,
            lk.parse("data", "init_ell", 0.1)?,
        ),
        u_t_case1: lk.parse("problem", "u_t_case1", 0.1)?,
        u_t_case2: lk.parse("problem", "u_t_case2", 1.0)?,
        u_t_max: lk.parse("data", "u_t_max", 2.0)?,
        youngs: lk.parse("problem", "youngs", 1.0)?,
        poisson_ratio: lk.parse("problem", "poisson_ratio", 0.49)?,
        delta_u_t: lk.parse("problem", "delta_u_t", 0.1)?,
        solver,
        m: lk.parse("data", "m", 200usize)?,
        val_fraction: lk.parse("data", "val_fraction", 0.1)?,
        data_seed: lk.parse("data", "seed", 1000u64)?,
        batch: lk.parse("train", "batch", 100usize)?,
        optimizer,
        patience: lk.parse("train", "patience", 1000usize)?,
        max_epochs: lk.parse("train", "max_epochs", 5000usize)?,
        hidden: lk.parse("train", "hidden", 96usize)?,
        latent: lk.parse("train", "latent", 48usize)?,
        blocks: lk.parse("train", "blocks", 2usize)?,
        scaling_blocks: lk.parse("train", "scaling_blocks", 1usize)?,
        init_seed: lk.parse("train", "init_seed", 2000u64)?,
        shuffle_seed: lk.parse("train", "shuffle_seed", 3000u64)?,
        eval_seed: lk.parse("eval", "seed", 900_000u64)?,
        dataset_file: lk.string("paths", "dataset", "dataset.bin"),
        model_file: lk.string("paths", "model", "model.bin"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parses_sections_and_defaults() {
        let f = tempfile_path("cfg");
        writeln!(
            std::fs::File::create(&f).unwrap(),
            "# comment\n[problem]\nkind = nonlinear_poisson\n[mesh]\ntrain_n = 8\n[data]\nseed = 42\n"
        )
        .unwrap();
        let cfg = load_config(&f).unwrap();
        assert_eq!(cfg.family, ProblemFamily::NonlinearPoisson);
        assert_eq!(cfg.train_mesh.n, 8);
        assert_eq!(cfg.solve_mesh.n, 8, "solve mesh defaults to the train mesh");
        assert_eq!(cfg.data_seed, 42);
        assert_eq!(cfg.batch, 100);
        std::fs::remove_file(&f).ok();
    }

    #[test]
    fn rejects_bad_values() {
        let f = tempfile_path("bad");
        std::fs::write(&f, "[mesh]\ntrain_n = lots\n").unwrap();
        assert!(load_config(&f).is_err());
        std::fs::write(&f, "no equals sign here\n").unwrap();
        assert!(load_config(&f).is_err());
        std::fs::remove_file(&f).ok();
    }

    fn tempfile_path(tag: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("np-newton-cfg-test-{tag}-{}", std::process::id()))
    }
}
