//! The five experiment commands. Each is deterministic given its config;
//! timings are reported but never part of any contract.

use crate::config::{ExperimentConfig, ProblemFamily};
use np_newton::grf::GrfSampler;
use np_newton::mesh::Mesh;
use np_newton::nn::fpno::{FpnoModel, ModelSpec};
use np_newton::problems::{ElasticityParams, Problem};
use np_newton::solver::{
    fmt_f64, incremental_loading, newton_ls, newton_tr, np_newton, InnerSolver, Outcome,
    SolveOptions, SolveReport,
};
use np_newton::train::{
    generate_dataset, history_csv, load_dataset, load_model, save_dataset, save_model, train,
    DataGenConfig, FamilySampling, TrainConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub enum CmdError {
    /// Bad invocation or configuration: exit code 2.
    Usage(String),
    /// The run itself failed: exit code 3.
    Runtime(String),
}

impl From<np_newton::Error> for CmdError {
    fn from(e: np_newton::Error) -> Self {
        CmdError::Runtime(e.to_string())
    }
}

type CmdResult = Result<(), CmdError>;

pub fn mesh_info(cfg: &ExperimentConfig) -> CmdResult {
    let solve = cfg.solve_mesh.build()?;
    print!("{}", solve.summary());
    if cfg.train_mesh != cfg.solve_mesh {
        let train = cfg.train_mesh.build()?;
        println!("-- training mesh --");
        print!("{}", train.summary());
    }
    Ok(())
}

pub fn gen_data(cfg: &ExperimentConfig, seed: Option<u64>, out: &Path) -> CmdResult {
    std::fs::create_dir_all(out).map_err(|e| CmdError::Runtime(e.to_string()))?;
    let family = match cfg.family {
        ProblemFamily::NonlinearPoisson => FamilySampling::PoissonGrf {
            forcing: cfg.forcing,
        },
        ProblemFamily::NeoHookean => FamilySampling::NeoHookeanUniform {
            u_t_range: [0.0, cfg.u_t_max],
        },
    };
    let gen = DataGenConfig {
        mesh: cfg.train_mesh,
        family,
        m: cfg.m,
        seed: seed.unwrap_or(cfg.data_seed),
        init_grf: cfg.init_grf,
        solver: cfg.solver,
        val_fraction: cfg.val_fraction,
    };
    let data = generate_dataset(&gen)?;
    let path = out.join(&cfg.dataset_file);
    save_dataset(&path, &data)?;
    println!(
        "dataset: m = {} groups requested, {} kept, {} discarded",
        cfg.m,
        data.groups.len(),
        data.discarded
    );
    println!(
        "snapshots: {} total ({} train / {} val, split by group)",
        data.n_snapshots(),
        data.n_train_snapshots(),
        data.n_val_snapshots()
    );
    println!("wrote {}", path.display());
    Ok(())
}

pub fn train_cmd(cfg: &ExperimentConfig, out: &Path) -> CmdResult {
    std::fs::create_dir_all(out).map_err(|e| CmdError::Runtime(e.to_string()))?;
    let data = load_dataset(&out.join(&cfg.dataset_file))?;
    let zeta_dim = data
        .groups
        .first()
        .map(|g| g.zeta.len())
        .ok_or_else(|| CmdError::Runtime("dataset has no groups".into()))?;
    let spec = ModelSpec {
        d: data.d,
        p: cfg.latent,
        hidden: cfg.hidden,
        blocks: cfg.blocks,
        scaling_blocks: cfg.scaling_blocks,
        zeta_dim,
    };
    let model = FpnoModel::init(
        spec,
        data.mesh,
        &mut ChaCha8Rng::seed_from_u64(cfg.init_seed),
    )?;
    let tcfg = TrainConfig {
        batch_size: cfg.batch,
        optimizer: cfg.optimizer,
        patience: cfg.patience,
        max_epochs: cfg.max_epochs,
        shuffle_seed: cfg.shuffle_seed,
    };
    let outcome = train(model, &data, &tcfg)?;
    let model_path = out.join(&cfg.model_file);
    save_model(&model_path, &outcome.model)?;
    std::fs::write(out.join("train-history.csv"), history_csv(&outcome.history))
        .map_err(|e| CmdError::Runtime(e.to_string()))?;
    println!(
        "trained {} epochs; best validation rel-L2 {:.6} at epoch {}",
        outcome.history.len(),
        outcome.best_val,
        outcome.best_epoch
    );
    if outcome.history.len() < cfg.max_epochs {
        println!(
            "early stop: no improvement for {} epochs after epoch {}",
            cfg.patience, outcome.best_epoch
        );
    }
    println!("wrote {}", model_path.display());
    if outcome.aborted_nan {
        return Err(CmdError::Runtime(
            "training aborted on a non-finite loss; last good checkpoint retained".into(),
        ));
    }
    Ok(())
}

fn np_case_problem(
    cfg: &ExperimentConfig,
    mesh: &Mesh,
    case: u32,
    seed: Option<u64>,
) -> Result<Problem, CmdError> {
    let forcing = match case {
        1 => vec![1.0; mesh.n_nodes()],
        2 | 3 => {
            let mut spec = cfg.forcing;
            if case == 3 {
                spec.sigma = cfg.forcing_sigma_case3;
            }
            GrfSampler::new(&mesh.nodes, &spec)?.sample(seed.unwrap_or(cfg.eval_seed))
        }
        _ => {
            return Err(CmdError::Usage(format!(
                "nonlinear_poisson has cases 1..3, got {case}"
            )))
        }
    };
    Ok(Problem::nonlinear_poisson(mesh.clone(), forcing)?)
}

fn he_u_t(cfg: &ExperimentConfig, case: u32) -> Result<f64, CmdError> {
    match case {
        1 => Ok(cfg.u_t_case1),
        2 => Ok(cfg.u_t_case2),
        _ => Err(CmdError::Usage(format!(
            "neo_hookean has cases 1..2, got {case}"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    NewtonLs,
    NewtonTr,
    NpNewtonLs,
    NpNewtonTr,
    IcNewtonLs,
}

impl Method {
    fn parse(s: &str) -> Result<Self, CmdError> {
        match s {
            "newton-ls" => Ok(Method::NewtonLs),
            "newton-tr" => Ok(Method::NewtonTr),
            "np-newton-ls" => Ok(Method::NpNewtonLs),
            "np-newton-tr" => Ok(Method::NpNewtonTr),
            "ic-newton-ls" => Ok(Method::IcNewtonLs),
            other => Err(CmdError::Usage(format!(
                "unknown method {other:?}; expected newton-ls | newton-tr | np-newton-ls | np-newton-tr | ic-newton-ls"
            ))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Method::NewtonLs => "newton-ls",
            Method::NewtonTr => "newton-tr",
            Method::NpNewtonLs => "np-newton-ls",
            Method::NpNewtonTr => "np-newton-tr",
            Method::IcNewtonLs => "ic-newton-ls",
        }
    }

    fn needs_model(self) -> bool {
        matches!(self, Method::NpNewtonLs | Method::NpNewtonTr)
    }
}

fn run_method(
    cfg: &ExperimentConfig,
    mesh: &Mesh,
    case: u32,
    method: Method,
    model: Option<&FpnoModel>,
    opts: &SolveOptions,
    seed: Option<u64>,
) -> Result<SolveReport, CmdError> {
    match cfg.family {
        ProblemFamily::NonlinearPoisson => {
            if method == Method::IcNewtonLs {
                return Err(CmdError::Usage(
                    "ic-newton-ls applies to the neo_hookean problem only".into(),
                ));
            }
            let problem = np_case_problem(cfg, mesh, case, seed)?;
            run_on_problem(&problem, method, model, opts)
        }
        ProblemFamily::NeoHookean => {
            let u_t = he_u_t(cfg, case)?;
            if method == Method::IcNewtonLs {
                let material = ElasticityParams::new(0.0, cfg.youngs, cfg.poisson_ratio)?;
                return Ok(incremental_loading(
                    mesh,
                    material,
                    u_t,
                    cfg.delta_u_t,
                    InnerSolver::LineSearch,
                    opts,
                )?);
            }
            let material = ElasticityParams::new(u_t, cfg.youngs, cfg.poisson_ratio)?;
            let problem = Problem::neo_hookean(mesh.clone(), material)?;
            run_on_problem(&problem, method, model, opts)
        }
    }
}

fn run_on_problem(
    problem: &Problem,
    method: Method,
    model: Option<&FpnoModel>,
    opts: &SolveOptions,
) -> Result<SolveReport, CmdError> {
    let u0 = vec![0.0; np_newton::problems::NonlinearSystem::n_free(problem)];
    match method {
        Method::NewtonLs => Ok(newton_ls(problem, &u0, opts)?),
        Method::NewtonTr => Ok(newton_tr(problem, &u0, opts)?),
        Method::NpNewtonLs | Method::NpNewtonTr => {
            let model = model.ok_or_else(|| {
                CmdError::Runtime("a trained model is required for np-newton methods".into())
            })?;
            let binding = model.bind(&problem.mesh)?;
            let inner = if method == Method::NpNewtonLs {
                InnerSolver::LineSearch
            } else {
                InnerSolver::TrustRegion
            };
            Ok(np_newton(problem, &binding, inner, opts)?)
        }
        Method::IcNewtonLs => unreachable!("handled by the caller"),
    }
}

pub fn solve_cmd(
    cfg: &ExperimentConfig,
    case: u32,
    method_str: &str,
    out: &Path,
    seed: Option<u64>,
    strict_paper: bool,
) -> CmdResult {
    let method = Method::parse(method_str)?;
    std::fs::create_dir_all(out).map_err(|e| CmdError::Runtime(e.to_string()))?;
    let mesh = cfg.solve_mesh.build()?;
    let mut opts = cfg.solver;
    opts.strict_paper = strict_paper;
    let model = if method.needs_model() {
        Some(load_model(&out.join(&cfg.model_file))?)
    } else {
        None
    };
    let report = run_method(cfg, &mesh, case, method, model.as_ref(), &opts, seed)?;
    let path = out.join(format!("solve-case{case}-{}.csv", method.name()));
    std::fs::write(&path, report.to_csv()).map_err(|e| CmdError::Runtime(e.to_string()))?;
    println!(
        "case {case} {}: {} after {} iterations (final rel residual {:.3e})",
        method.name(),
        report.outcome.as_str(),
        report.iterations(),
        if report.initial_residual() > 0.0 {
            report.final_residual() / report.initial_residual()
        } else {
            0.0
        }
    );
    if report.model_fallback {
        println!("note: model produced non-finite output; fell back to the plain solver");
    }
    println!("wrote {}", path.display());
    Ok(())
}

/// Percentage with two decimals, truncated toward zero.
fn trunc2(x: f64) -> String {
    format!("{:.2}", (x * 100.0).trunc() / 100.0)
}

pub fn bench_cmd(cfg: &ExperimentConfig, out: &Path, strict_paper: bool) -> CmdResult {
    std::fs::create_dir_all(out).map_err(|e| CmdError::Runtime(e.to_string()))?;
    let mesh = cfg.solve_mesh.build()?;
    let mut opts = cfg.solver;
    opts.strict_paper = strict_paper;

    // (case, method, baseline method for the speedup column)
    let rows: Vec<(u32, Method, Option<Method>)> = match cfg.family {
        ProblemFamily::NonlinearPoisson => vec![
            (1, Method::NewtonLs, None),
            (1, Method::NpNewtonLs, Some(Method::NewtonLs)),
            (2, Method::NewtonLs, None),
            (2, Method::NpNewtonLs, Some(Method::NewtonLs)),
            (3, Method::NewtonLs, None),
            (3, Method::NpNewtonLs, Some(Method::NewtonLs)),
        ],
        ProblemFamily::NeoHookean => vec![
            (1, Method::NewtonLs, None),
            (1, Method::NpNewtonLs, Some(Method::NewtonLs)),
            (1, Method::NewtonTr, None),
            (1, Method::NpNewtonTr, Some(Method::NewtonTr)),
            (2, Method::NewtonTr, None),
            (2, Method::IcNewtonLs, Some(Method::NewtonTr)),
            (2, Method::NpNewtonTr, Some(Method::NewtonTr)),
        ],
    };
    let needs_model = rows.iter().any(|(_, m, _)| m.needs_model());
    let model = if needs_model {
        Some(load_model(&out.join(&cfg.model_file))?)
    } else {
        None
    };

    let mut results: Vec<(u32, Method, Option<SolveReport>, String)> = Vec::new();
    for &(case, method, _) in &rows {
        match run_method(cfg, &mesh, case, method, model.as_ref(), &opts, None) {
            Ok(report) => results.push((case, method, Some(report), String::new())),
            Err(CmdError::Usage(msg)) => return Err(CmdError::Usage(msg)),
            Err(CmdError::Runtime(msg)) => {
                // Partial failure: record the row, keep going.
                results.push((case, method, None, msg));
            }
        }
    }

    let mut csv = String::from("case,method,iters,outcome,time_s,speedup_pct\n");
    for (i, &(case, method, baseline)) in rows.iter().enumerate() {
        let (_, _, report, errmsg) = &results[i];
        let Some(report) = report else {
            let _ = writeln!(csv, "{case},{},,ERROR: {errmsg},,", method.name());
            continue;
        };
        let speedup = match baseline {
            None => String::new(),
            Some(base_method) => {
                let base = results
                    .iter()
                    .find(|(c, m, _, _)| *c == case && *m == base_method)
                    .and_then(|(_, _, r, _)| r.as_ref());
                match base {
                    None => String::new(),
                    Some(base) => {
                        let base_ok = base.outcome == Outcome::Converged;
                        let new_ok = report.outcome == Outcome::Converged;
                        if !new_ok {
                            String::new()
                        } else if !base_ok {
                            "inf".to_string()
                        } else {
                            speedup_cell(base.wall_time, report.wall_time)
                        }
                    }
                }
            }
        };
        let _ = writeln!(
            csv,
            "{case},{},{},{},{},{speedup}",
            method.name(),
            report.iterations(),
            report.outcome.as_str(),
            fmt_f64(report.wall_time),
        );
    }
    let path = out.join("bench.csv");
    std::fs::write(&path, &csv).map_err(|e| CmdError::Runtime(e.to_string()))?;
    print!("{csv}");
    println!("wrote {}", path.display());
    Ok(())
}

/// Computes the speedup cell value for a timing pair; exposed for tests.
pub fn speedup_cell(t_base: f64, t_new: f64) -> String {
    trunc2((t_base / t_new - 1.0) * 100.0)
}

pub fn default_out_dir(config: &Path) -> PathBuf {
    let stem = config
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "experiment".to_string());
    PathBuf::from("runs").join(stem)
}
