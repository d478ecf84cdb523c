//! Newton-snapshot datasets: for each sampled parameter and scaled random
//! initial guess, a converged Newton-LS run contributes every iterate paired
//! with the reference solution.

use crate::dof::DofMap;
use crate::error::{Error, Result};
use crate::grf::{split_seed, GrfSampler, GrfSpec};
use crate::mesh::{Mesh, MeshSpec};
use crate::problems::{ElasticityParams, NonlinearSystem, Problem, ProblemKind};
use crate::solver::{newton_ls_traced, Outcome, SolveOptions};
use crate::sparse::norm2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// How the PDE parameter of each group is sampled.
#[derive(Debug, Clone)]
pub enum FamilySampling {
    /// Nodal forcing drawn from a Gaussian random field.
    PoissonGrf { forcing: GrfSpec },
    /// Top displacement drawn uniformly from a range.
    NeoHookeanUniform { u_t_range: [f64; 2] },
}

#[derive(Debug, Clone)]
pub struct DataGenConfig {
    pub mesh: MeshSpec,
    pub family: FamilySampling,
    /// Number of random initial guesses (groups).
    pub m: usize,
    pub seed: u64,
    /// GRF used for the scaled initial guesses.
    pub init_grf: GrfSpec,
    pub solver: SolveOptions,
    /// Fraction of groups held out for validation (split is by group).
    pub val_fraction: f64,
}

/// One converged run: the parameter, every Newton iterate (the initial guess
/// first, the converged solution last), and the reference solution. All
/// vectors are full nodal dof vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotGroup {
    pub zeta: Vec<f64>,
    pub iterates: Vec<Vec<f64>>,
    pub u_ref: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub mesh: MeshSpec,
    pub kind: ProblemKind,
    /// Components per node.
    pub d: usize,
    pub seed: u64,
    pub groups: Vec<SnapshotGroup>,
    pub train_groups: Vec<usize>,
    pub val_groups: Vec<usize>,
    pub discarded: usize,
}

impl Dataset {
    pub fn n_snapshots(&self) -> usize {
        self.groups.iter().map(|g| g.iterates.len()).sum()
    }

    pub fn n_train_snapshots(&self) -> usize {
        self.train_groups
            .iter()
            .map(|&g| self.groups[g].iterates.len())
            .sum()
    }

    pub fn n_val_snapshots(&self) -> usize {
        self.val_groups
            .iter()
            .map(|&g| self.groups[g].iterates.len())
            .sum()
    }

    /// Builds the problem of one group (its parameter bound to the mesh).
    pub fn problem_for(&self, mesh: &Mesh, group: &SnapshotGroup) -> Result<Problem> {
        match self.kind {
            ProblemKind::NonlinearPoisson => {
                Problem::nonlinear_poisson(mesh.clone(), group.zeta.clone())
            }
            ProblemKind::NeoHookean => Problem::neo_hookean(
                mesh.clone(),
                ElasticityParams::rubber(group.zeta[0]),
            ),
        }
    }
}

/// Seed-splitting convention: group j draws its parameter from
/// `seed + 2 j` and its initial guess from `seed + 2 j + 1`.
pub fn group_seeds(seed: u64, j: u64) -> (u64, u64) {
    (split_seed(seed, 2 * j), split_seed(seed, 2 * j + 1))
}

/// Generates a snapshot dataset by running Newton-LS from `m` scaled random
/// initial guesses; divergent runs are discarded (an error if more than
/// half of them fail).
pub fn generate_dataset(cfg: &DataGenConfig) -> Result<Dataset> {
    let mesh = cfg.mesh.build()?;
    let kind = match cfg.family {
        FamilySampling::PoissonGrf { .. } => ProblemKind::NonlinearPoisson,
        FamilySampling::NeoHookeanUniform { .. } => ProblemKind::NeoHookean,
    };
    let d = match kind {
        ProblemKind::NonlinearPoisson => 1,
        ProblemKind::NeoHookean => 2,
    };
    let guess_sampler = GrfSampler::new(&mesh.nodes, &cfg.init_grf)?;
    let forcing_sampler = match &cfg.family {
        FamilySampling::PoissonGrf { forcing } => Some(GrfSampler::new(&mesh.nodes, forcing)?),
        FamilySampling::NeoHookeanUniform { .. } => None,
    };

    let mut groups = Vec::with_capacity(cfg.m);
    let mut discarded = 0usize;
    for j in 0..cfg.m {
        let (zeta_seed, guess_seed) = group_seeds(cfg.seed, j as u64);
        let (zeta, problem) = match &cfg.family {
            FamilySampling::PoissonGrf { .. } => {
                let forcing = forcing_sampler.as_ref().unwrap().sample(zeta_seed);
                let problem = Problem::nonlinear_poisson(mesh.clone(), forcing.clone())?;
                (forcing, problem)
            }
            FamilySampling::NeoHookeanUniform { u_t_range } => {
                let mut rng = ChaCha8Rng::seed_from_u64(zeta_seed);
                let u_t = rng.random_range(u_t_range[0]..u_t_range[1]);
                let problem =
                    Problem::neo_hookean(mesh.clone(), ElasticityParams::rubber(u_t))?;
                (vec![u_t], problem)
            }
        };
        let guess_full = guess_sampler.scaled_initial_guess(guess_seed, d, [1e-4, 1e-2])?;
        let u0 = restrict_guess(&problem.dofmap, &guess_full);

        let (report, trace) = match newton_ls_traced(&problem, &u0, &cfg.solver) {
            Ok(ok) => ok,
            Err(Error::ElementInversion { .. }) => {
                discarded += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if report.outcome != Outcome::Converged {
            discarded += 1;
            continue;
        }
        // Reference-solution quality gate, relative to the zero-interior
        // initial guess residual.
        let u_ref_free = trace.last().unwrap().clone();
        let r_ref = norm2(&problem.residual(&u_ref_free)?);
        let r_zero = norm2(&problem.residual(&vec![0.0; problem.n_free()])?);
        if r_zero > 0.0 && r_ref / r_zero > 1e-9 && r_ref > 1e-15 {
            discarded += 1;
            continue;
        }
        let iterates: Result<Vec<Vec<f64>>> = trace
            .iter()
            .map(|u_free| problem.dofmap.to_full(u_free))
            .collect();
        let iterates = iterates?;
        let u_ref = iterates.last().unwrap().clone();
        groups.push(SnapshotGroup {
            zeta,
            iterates,
            u_ref,
        });
    }
    if groups.len() * 2 < cfg.m {
        return Err(Error::DataGenFailure(format!(
            "{discarded} of {} runs discarded",
            cfg.m
        )));
    }

    // Group-disjoint split: shuffle group indices, hold out the tail.
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_cafe);
    for i in (1..order.len()).rev() {
        let k = rng.random_range(0..=i);
        order.swap(i, k);
    }
    let n_val = ((groups.len() as f64 * cfg.val_fraction).round() as usize)
        .clamp(1.min(groups.len().saturating_sub(1)), groups.len().saturating_sub(1));
    let (train_part, val_part) = order.split_at(groups.len() - n_val);
    let mut train_groups = train_part.to_vec();
    let mut val_groups = val_part.to_vec();
    train_groups.sort_unstable();
    val_groups.sort_unstable();

    Ok(Dataset {
        mesh: cfg.mesh,
        kind,
        d,
        seed: cfg.seed,
        groups,
        train_groups,
        val_groups,
        discarded,
    })
}

/// The starting iterate keeps the sampled field on free dofs and the
/// prescribed values on constrained ones.
fn restrict_guess(dofmap: &DofMap, guess_full: &[f64]) -> Vec<f64> {
    dofmap
        .free_dofs
        .iter()
        .map(|&dof| guess_full[dof])
        .collect()
}
