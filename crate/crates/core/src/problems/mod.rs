//! The two parametric benchmark problems behind F(u) = 0: a nonlinear
//! Poisson equation with solution-dependent diffusivity and a compressible
//! Neo-Hookean hyperelasticity model.

pub mod neo_hookean;
pub mod poisson;

use crate::dof::{boundary_dofs, BoundaryCondition, DofMap};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::sparse::CsrMatrix;

/// Interface the Newton solvers iterate on: the reduced residual and its
/// Jacobian over free dofs.
pub trait NonlinearSystem {
    fn n_free(&self) -> usize;
    fn residual(&self, u_free: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, u_free: &[f64]) -> Result<CsrMatrix>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    NonlinearPoisson,
    NeoHookean,
}

/// Material and loading parameters of the Neo-Hookean problem.
///
/// `lame_lambda` is the Lamé constant; the name avoids the Newton step size
/// lambda used by the solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticityParams {
    pub u_t: f64,
    pub youngs: f64,
    pub poisson_ratio: f64,
    pub mu: f64,
    pub lame_lambda: f64,
}

impl ElasticityParams {
    /// Rubber-like material of the benchmark: E = 1.0, nu = 0.49.
    pub fn rubber(u_t: f64) -> Self {
        Self::new(u_t, 1.0, 0.49).unwrap()
    }

    pub fn new(u_t: f64, youngs: f64, poisson_ratio: f64) -> Result<Self> {
        if poisson_ratio >= 0.5 {
            return Err(Error::Unsupported(
                "compressible model requires nu < 0.5".into(),
            ));
        }
        let mu = youngs / (2.0 * (1.0 + poisson_ratio));
        let lame_lambda =
            youngs * poisson_ratio / ((1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio));
        Ok(ElasticityParams {
            u_t,
            youngs,
            poisson_ratio,
            mu,
            lame_lambda,
        })
    }
}

#[derive(Debug, Clone)]
pub enum ProblemParams {
    /// Nodal forcing values, one per mesh node.
    Poisson { forcing: Vec<f64> },
    Elasticity(ElasticityParams),
}

/// A discretized nonlinear problem: mesh, dof partition, and parameters.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mesh: Mesh,
    pub dofmap: DofMap,
    pub params: ProblemParams,
    pub kind: ProblemKind,
}

impl Problem {
    pub fn nonlinear_poisson(mesh: Mesh, forcing: Vec<f64>) -> Result<Self> {
        if forcing.len() != mesh.n_nodes() {
            return Err(Error::Dimension {
                expected: mesh.n_nodes(),
                got: forcing.len(),
            });
        }
        let dofmap = boundary_dofs(&mesh, BoundaryCondition::PoissonUnitDirichlet)?;
        Ok(Problem {
            mesh,
            dofmap,
            params: ProblemParams::Poisson { forcing },
            kind: ProblemKind::NonlinearPoisson,
        })
    }

    pub fn neo_hookean(mesh: Mesh, params: ElasticityParams) -> Result<Self> {
        let dofmap = boundary_dofs(&mesh, BoundaryCondition::ElasticityStretch { u_t: params.u_t })?;
        Ok(Problem {
            mesh,
            dofmap,
            params: ProblemParams::Elasticity(params),
            kind: ProblemKind::NeoHookean,
        })
    }

    /// Components per node of the unknown field.
    pub fn components(&self) -> usize {
        self.dofmap.d
    }

    /// The PDE parameter as a flat vector: the nodal forcing for the Poisson
    /// problem, the top displacement for elasticity.
    pub fn zeta(&self) -> Vec<f64> {
        match &self.params {
            ProblemParams::Poisson { forcing } => forcing.clone(),
            ProblemParams::Elasticity(p) => vec![p.u_t],
        }
    }

    /// Stored energy; defined for the elasticity problem only.
    pub fn energy(&self, u_free: &[f64]) -> Result<f64> {
        match &self.params {
            ProblemParams::Elasticity(p) => {
                let u_full = self.dofmap.to_full(u_free)?;
                neo_hookean::energy_full(&self.mesh, p, &u_full)
            }
            ProblemParams::Poisson { .. } => Err(Error::Unsupported(
                "the nonlinear Poisson problem has no stored energy".into(),
            )),
        }
    }
}

impl NonlinearSystem for Problem {
    fn n_free(&self) -> usize {
        self.dofmap.n_free()
    }

    fn residual(&self, u_free: &[f64]) -> Result<Vec<f64>> {
        match &self.params {
            ProblemParams::Poisson { forcing } => {
                poisson::residual(&self.mesh, &self.dofmap, forcing, u_free)
            }
            ProblemParams::Elasticity(p) => {
                neo_hookean::residual(&self.mesh, &self.dofmap, p, u_free)
            }
        }
    }

    fn jacobian(&self, u_free: &[f64]) -> Result<CsrMatrix> {
        match &self.params {
            ProblemParams::Poisson { forcing } => {
                poisson::jacobian(&self.mesh, &self.dofmap, forcing, u_free)
            }
            ProblemParams::Elasticity(p) => {
                neo_hookean::jacobian(&self.mesh, &self.dofmap, p, u_free)
            }
        }
    }
}
