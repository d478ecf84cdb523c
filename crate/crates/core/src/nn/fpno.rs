//! The fixed-point operator head: G(u) = u + eta * G_B(u) with the step size
//! eta = tanh(|r|_2 * N(r / |r|_2)) predicted from the normalized residual.
//!
//! At a root of F the residual norm vanishes, eta is exactly zero, and the
//! operator is the identity, which is what makes it usable as a nonlinear
//! right-preconditioner. eta lives in (-1, 1) and can be negative.

use crate::error::{Error, Result};
use crate::mesh::{Mesh, MeshSpec};
use crate::nn::mionet::MioNet;
use crate::nn::{FlatParams, SeResNet};
use crate::problems::{Problem, ProblemKind};
use crate::sparse::norm2;
use crate::transfer::{build_transfer, TransferOps};
use ndarray::Array2;
use rand::Rng;

/// Architecture hyperparameters of a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    /// Components per node of the unknown field (1 scalar, 2 displacement).
    pub d: usize,
    /// Latent width of the MIONet inner product.
    pub p: usize,
    /// Hidden width of every subnet.
    pub hidden: usize,
    /// SE blocks in the branch / feature nets and residual blocks in the trunk.
    pub blocks: usize,
    /// SE blocks in the scaling net.
    pub scaling_blocks: usize,
    /// Parameter-vector length (nodal forcing size or 1 for a scalar load).
    pub zeta_dim: usize,
}

/// The trained preconditioner: a scaling net over the normalized residual,
/// a MIONet backbone producing the correction field, and the descriptor of
/// the mesh the model was trained on.
#[derive(Debug, Clone)]
pub struct FpnoModel {
    pub scaling: SeResNet,
    pub backbone: MioNet,
    pub spec: ModelSpec,
    pub train_mesh: MeshSpec,
    /// Dof count of the training mesh (d * nodes); the subnets' input size.
    pub n_dof: usize,
}

impl FpnoModel {
    /// Random initialization. The scaling net's output layer starts at zero,
    /// so an untrained model predicts eta = 0 and acts as the identity.
    pub fn init<R: Rng>(spec: ModelSpec, train_mesh: MeshSpec, rng: &mut R) -> Result<Self> {
        let mesh = train_mesh.build()?;
        let n_dof = spec.d * mesh.n_nodes();
        let mut scaling = SeResNet::init(n_dof, spec.hidden, spec.scaling_blocks, 1, rng);
        scaling.output.w.fill(0.0);
        scaling.output.b.fill(0.0);
        scaling.output.init = crate::nn::InitScheme::Zero;
        let backbone = MioNet::init(
            n_dof,
            spec.zeta_dim,
            spec.d,
            spec.p,
            spec.hidden,
            spec.blocks,
            rng,
        );
        Ok(FpnoModel {
            scaling,
            backbone,
            spec,
            train_mesh,
            n_dof,
        })
    }

    /// Binds the model to a solve mesh, building the transfer operators and
    /// freezing the trunk output at the training-mesh coordinates.
    pub fn bind(&self, solve_mesh: &Mesh) -> Result<FpnoBinding<'_>> {
        let train_mesh = self.train_mesh.build()?;
        if self.spec.d * train_mesh.n_nodes() != self.n_dof {
            return Err(Error::Format(
                "model dof count disagrees with its mesh descriptor".into(),
            ));
        }
        let transfer = build_transfer(&train_mesh, solve_mesh)?;
        let coords = coords_matrix(&train_mesh);
        let trunk_out = self.backbone.trunk.forward(&coords)?;
        Ok(FpnoBinding {
            model: self,
            transfer,
            trunk_out,
            coarse_nodes: train_mesh.n_nodes(),
        })
    }
}

impl FlatParams for FpnoModel {
    fn flat(&self) -> Vec<&[f64]> {
        let mut v = self.scaling.flat();
        v.extend(self.backbone.flat());
        v
    }
    fn flat_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.scaling.flat_mut();
        v.extend(self.backbone.flat_mut());
        v
    }
}

impl FpnoModel {
    /// Gradient mirror: same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        FpnoModel {
            scaling: self.scaling.zeros_like(),
            backbone: self.backbone.zeros_like(),
            spec: self.spec,
            train_mesh: self.train_mesh,
            n_dof: self.n_dof,
        }
    }
}

pub fn coords_matrix(mesh: &Mesh) -> Array2<f64> {
    Array2::from_shape_fn((mesh.n_nodes(), 2), |(i, j)| mesh.nodes[i][j])
}

/// A model bound to a solve mesh: ready to precondition Newton iterations.
pub struct FpnoBinding<'a> {
    pub model: &'a FpnoModel,
    pub transfer: TransferOps,
    trunk_out: Array2<f64>,
    coarse_nodes: usize,
}

impl FpnoBinding<'_> {
    /// Applies the preconditioner to a full nodal vector of the solve mesh.
    ///
    /// Steps: residual on the solve mesh; eta from the solve-mesh residual
    /// norm and the scaling net at the restricted normalized residual; the
    /// backbone correction at the training mesh, prolonged back; Dirichlet
    /// entries reset to their prescribed values. Exact identity when the
    /// residual norm or eta is exactly zero.
    pub fn apply(&self, problem: &Problem, u_full: &[f64]) -> Result<Vec<f64>> {
        let dofmap = &problem.dofmap;
        if u_full.len() != dofmap.n_dofs() {
            return Err(Error::Dimension {
                expected: dofmap.n_dofs(),
                got: u_full.len(),
            });
        }
        let u_free = dofmap.to_free(u_full)?;
        let r_free = crate::problems::NonlinearSystem::residual(problem, &u_free)?;
        self.apply_with_residual(problem, u_full, &r_free)
    }

    /// Same as [`FpnoBinding::apply`] but reusing an already computed
    /// residual (solvers have it at hand every iteration).
    pub fn apply_with_residual(
        &self,
        problem: &Problem,
        u_full: &[f64],
        r_free: &[f64],
    ) -> Result<Vec<f64>> {
        let dofmap = &problem.dofmap;
        let r_norm = norm2(r_free);
        if r_norm == 0.0 {
            return Ok(u_full.to_vec());
        }
        let mut r_tilde = dofmap.scatter_free(r_free)?;
        for v in r_tilde.iter_mut() {
            *v /= r_norm;
        }
        let r_coarse = self.transfer.restrict(&r_tilde)?;
        let s = self.model.scaling.forward(&row_matrix(&r_coarse))?[[0, 0]];
        let eta = (r_norm * s).tanh();
        if eta == 0.0 {
            return Ok(u_full.to_vec());
        }

        let u_coarse = self.transfer.restrict(u_full)?;
        let zeta = self.restrict_zeta(problem)?;
        let g = self.model.backbone.forward_with_trunk(
            &row_matrix(&u_coarse),
            &row_matrix(&zeta),
            &self.trunk_out,
        )?;
        if g.len() != self.model.spec.d * self.coarse_nodes {
            return Err(Error::Dimension {
                expected: self.model.spec.d * self.coarse_nodes,
                got: g.len(),
            });
        }
        let corr = self.transfer.prolong(g.as_slice().unwrap())?;
        let mut v: Vec<f64> = u_full
            .iter()
            .zip(&corr)
            .map(|(u, c)| u + eta * c)
            .collect();
        dofmap.enforce_prescribed(&mut v);
        if v.iter().any(|x| !x.is_finite()) || !eta.is_finite() {
            return Err(Error::ModelNan);
        }
        Ok(v)
    }

    fn restrict_zeta(&self, problem: &Problem) -> Result<Vec<f64>> {
        let zeta = problem.zeta();
        match problem.kind {
            // Nodal forcing lives on the solve mesh; bring it to the
            // training mesh.
            ProblemKind::NonlinearPoisson => self.transfer.restrict(&zeta),
            ProblemKind::NeoHookean => Ok(zeta),
        }
    }
}

fn row_matrix(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, v.len()), v.to_vec()).unwrap()
}
