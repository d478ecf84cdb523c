//! Degree-of-freedom bookkeeping: free/constrained partition and the
//! expansion between reduced (free) and full nodal vectors.
//!
//! Dofs are numbered node-major: dof of node `v`, component `c` is
//! `v * d + c`. Newton solvers work on the reduced system over free dofs;
//! the neural preconditioner sees full nodal vectors.

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh};

#[derive(Debug, Clone)]
pub struct DofMap {
    /// Components per node (1 scalar, 2 displacement).
    pub d: usize,
    pub n_nodes: usize,
    /// Free global dof ids, ascending.
    pub free_dofs: Vec<usize>,
    /// Constrained global dof ids with prescribed values, ascending.
    pub constrained_dofs: Vec<(usize, f64)>,
    /// Global dof -> slot in `free_dofs`, `None` when constrained.
    free_slot: Vec<Option<usize>>,
}

/// Which boundary-value problem the dof map constrains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryCondition {
    /// u = 1 on the Dirichlet edge, natural elsewhere.
    PoissonUnitDirichlet,
    /// u = (0,0) on the bottom edge, u = (0, u_t) on the top edge.
    ElasticityStretch { u_t: f64 },
}

/// Builds the free/constrained dof partition for a problem.
pub fn boundary_dofs(mesh: &Mesh, bc: BoundaryCondition) -> Result<DofMap> {
    let d = match bc {
        BoundaryCondition::PoissonUnitDirichlet => 1,
        BoundaryCondition::ElasticityStretch { .. } => 2,
    };
    let n_nodes = mesh.n_nodes();
    let mut free_dofs = Vec::new();
    let mut constrained = Vec::new();
    let mut free_slot = vec![None; d * n_nodes];
    for v in 0..n_nodes {
        let tag = mesh.boundary_tags[v];
        let prescribed: Option<Vec<f64>> = match bc {
            BoundaryCondition::PoissonUnitDirichlet => match tag {
                BoundaryTag::GammaDirichlet => Some(vec![1.0]),
                BoundaryTag::GammaBottom | BoundaryTag::GammaTop => {
                    return Err(Error::Unsupported(
                        "mesh tagged with the elasticity convention".into(),
                    ))
                }
                _ => None,
            },
            BoundaryCondition::ElasticityStretch { u_t } => match tag {
                BoundaryTag::GammaBottom => Some(vec![0.0, 0.0]),
                BoundaryTag::GammaTop => Some(vec![0.0, u_t]),
                BoundaryTag::GammaDirichlet | BoundaryTag::GammaNeumann => {
                    return Err(Error::Unsupported(
                        "mesh tagged with the scalar convention".into(),
                    ))
                }
                _ => None,
            },
        };
        for c in 0..d {
            let dof = v * d + c;
            match &prescribed {
                Some(vals) => constrained.push((dof, vals[c])),
                None => {
                    free_slot[dof] = Some(free_dofs.len());
                    free_dofs.push(dof);
                }
            }
        }
    }
    Ok(DofMap {
        d,
        n_nodes,
        free_dofs,
        constrained_dofs: constrained,
        free_slot,
    })
}

impl DofMap {
    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.d * self.n_nodes
    }

    /// Slot of a global dof in the free vector, `None` when constrained.
    pub fn free_slot(&self, dof: usize) -> Option<usize> {
        self.free_slot[dof]
    }

    /// Full nodal vector with prescribed values and zeros on free dofs.
    pub fn prescribed_full(&self) -> Vec<f64> {
        let mut full = vec![0.0; self.n_dofs()];
        for &(dof, val) in &self.constrained_dofs {
            full[dof] = val;
        }
        full
    }

    /// Expands a free vector to a full nodal vector, inserting prescribed
    /// boundary values.
    pub fn to_full(&self, u_free: &[f64]) -> Result<Vec<f64>> {
        if u_free.len() != self.n_free() {
            return Err(Error::Dimension {
                expected: self.n_free(),
                got: u_free.len(),
            });
        }
        let mut full = self.prescribed_full();
        for (slot, &dof) in self.free_dofs.iter().enumerate() {
            full[dof] = u_free[slot];
        }
        Ok(full)
    }

    /// Restricts a full nodal vector to its free entries.
    pub fn to_free(&self, full: &[f64]) -> Result<Vec<f64>> {
        if full.len() != self.n_dofs() {
            return Err(Error::Dimension {
                expected: self.n_dofs(),
                got: full.len(),
            });
        }
        Ok(self.free_dofs.iter().map(|&dof| full[dof]).collect())
    }

    /// Embeds a free vector into a full vector with zeros on constrained
    /// dofs (used for residuals, which vanish there by construction).
    pub fn scatter_free(&self, v_free: &[f64]) -> Result<Vec<f64>> {
        if v_free.len() != self.n_free() {
            return Err(Error::Dimension {
                expected: self.n_free(),
                got: v_free.len(),
            });
        }
        let mut full = vec![0.0; self.n_dofs()];
        for (slot, &dof) in self.free_dofs.iter().enumerate() {
            full[dof] = v_free[slot];
        }
        Ok(full)
    }

    /// Overwrites constrained entries of a full vector with their
    /// prescribed values.
    pub fn enforce_prescribed(&self, full: &mut [f64]) {
        for &(dof, val) in &self.constrained_dofs {
            full[dof] = val;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_unit_square_mesh, ElemKind, TagConvention};

    #[test]
    fn poisson_constrains_the_right_column() {
        let mesh =
            build_unit_square_mesh(32, ElemKind::P1Tri, None, TagConvention::Poisson).unwrap();
        let dm = boundary_dofs(&mesh, BoundaryCondition::PoissonUnitDirichlet).unwrap();
        assert_eq!(dm.constrained_dofs.len(), 33);
        assert!(dm.constrained_dofs.iter().all(|&(_, v)| v == 1.0));
        assert_eq!(dm.n_free() + dm.constrained_dofs.len(), dm.n_dofs());
        for &(dof, _) in &dm.constrained_dofs {
            assert_eq!(mesh.nodes[dof][0], 1.0);
        }
    }

    #[test]
    fn elasticity_pins_bottom_and_top() {
        let mesh =
            build_unit_square_mesh(2, ElemKind::Q1Quad, None, TagConvention::Elasticity).unwrap();
        let dm = boundary_dofs(&mesh, BoundaryCondition::ElasticityStretch { u_t: 1.0 }).unwrap();
        // 3 bottom nodes at (0,0) and 3 top nodes at (0,1): 12 constrained dofs.
        assert_eq!(dm.constrained_dofs.len(), 12);
        let mut bottom = 0;
        let mut top = 0;
        for &(dof, val) in &dm.constrained_dofs {
            let node = dof / 2;
            let comp = dof % 2;
            let y = mesh.nodes[node][1];
            if y == 0.0 {
                assert_eq!(val, 0.0);
                bottom += 1;
            } else {
                assert_eq!(y, 1.0);
                assert_eq!(val, if comp == 0 { 0.0 } else { 1.0 });
                top += 1;
            }
        }
        assert_eq!(bottom, 6);
        assert_eq!(top, 6);
    }

    #[test]
    fn partition_is_exact() {
        let mesh =
            build_unit_square_mesh(4, ElemKind::P1Tri, None, TagConvention::Poisson).unwrap();
        let dm = boundary_dofs(&mesh, BoundaryCondition::PoissonUnitDirichlet).unwrap();
        let mut seen = vec![false; dm.n_dofs()];
        for &dof in &dm.free_dofs {
            assert!(!seen[dof]);
            seen[dof] = true;
        }
        for &(dof, _) in &dm.constrained_dofs {
            assert!(!seen[dof]);
            seen[dof] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn full_free_round_trip() {
        let mesh =
            build_unit_square_mesh(3, ElemKind::P1Tri, None, TagConvention::Poisson).unwrap();
        let dm = boundary_dofs(&mesh, BoundaryCondition::PoissonUnitDirichlet).unwrap();
        let u_free: Vec<f64> = (0..dm.n_free()).map(|i| i as f64 * 0.1).collect();
        let full = dm.to_full(&u_free).unwrap();
        for &(dof, val) in &dm.constrained_dofs {
            assert_eq!(full[dof], val);
        }
        assert_eq!(dm.to_free(&full).unwrap(), u_free);
    }

    #[test]
    fn wrong_convention_is_rejected() {
        let mesh =
            build_unit_square_mesh(3, ElemKind::P1Tri, None, TagConvention::Poisson).unwrap();
        assert!(matches!(
            boundary_dofs(&mesh, BoundaryCondition::ElasticityStretch { u_t: 1.0 }),
            Err(Error::Unsupported(_))
        ));
    }
}
