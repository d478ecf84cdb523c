//! Compressible Neo-Hookean hyperelasticity in plane strain.
//!
//! The stored energy density is
//! psi = mu/2 (I_c - 3) - mu ln(J) + lambda/2 (J - 1)^2
//! with F = I + grad u (2x2, F_33 = 1 in the plane-strain embedding),
//! I_c = tr(F^T F) + 1 and J = det(F). The residual is the analytic first
//! variation through the first Piola-Kirchhoff stress
//! P(F) = mu (F - F^-T) + lambda (J - 1) J F^-T,
//! and the tangent is its consistent derivative (the energy Hessian).

use crate::dof::DofMap;
use crate::error::{Error, Result};
use crate::fem::{element_geometry, element_quadrature};
use crate::mesh::Mesh;
use crate::problems::ElasticityParams;
use crate::sparse::CsrMatrix;

struct PointState {
    f: [[f64; 2]; 2],
    finv: [[f64; 2]; 2],
    det: f64,
}

fn deformation(
    elem: &[usize],
    grad: &[[f64; 2]],
    u_full: &[f64],
    elem_id: usize,
) -> Result<PointState> {
    // grad_u[i][j] = d u_i / d X_j
    let mut gu = [[0.0f64; 2]; 2];
    for (a, &v) in elem.iter().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                gu[i][j] += u_full[2 * v + i] * grad[a][j];
            }
        }
    }
    let f = [[1.0 + gu[0][0], gu[0][1]], [gu[1][0], 1.0 + gu[1][1]]];
    let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
    if det <= 0.0 || !det.is_finite() {
        return Err(Error::ElementInversion { elem: elem_id });
    }
    let finv = [
        [f[1][1] / det, -f[0][1] / det],
        [-f[1][0] / det, f[0][0] / det],
    ];
    Ok(PointState { f, finv, det })
}

/// Energy of a full nodal displacement field (no boundary substitution).
pub fn energy_full(mesh: &Mesh, params: &ElasticityParams, u_full: &[f64]) -> Result<f64> {
    if u_full.len() != 2 * mesh.n_nodes() {
        return Err(Error::Dimension {
            expected: 2 * mesh.n_nodes(),
            got: u_full.len(),
        });
    }
    let quad = element_quadrature(mesh.elem_kind);
    let (mu, lam) = (params.mu, params.lame_lambda);
    let mut energy = 0.0;
    let mut coords = vec![[0.0; 2]; mesh.elem_kind.nodes_per_elem()];
    for (e, elem) in mesh.elements().enumerate() {
        for (a, &v) in elem.iter().enumerate() {
            coords[a] = mesh.nodes[v];
        }
        for qp in &quad {
            let geo = element_geometry(mesh.elem_kind, &coords, qp.xi)?;
            let st = deformation(elem, &geo.grad, u_full, e)?;
            let ic = st.f[0][0] * st.f[0][0]
                + st.f[0][1] * st.f[0][1]
                + st.f[1][0] * st.f[1][0]
                + st.f[1][1] * st.f[1][1]
                + 1.0;
            let psi = 0.5 * mu * (ic - 3.0) - mu * st.det.ln()
                + 0.5 * lam * (st.det - 1.0) * (st.det - 1.0);
            energy += qp.weight * geo.det_j * psi;
        }
    }
    Ok(energy)
}

pub fn energy(
    mesh: &Mesh,
    dofmap: &DofMap,
    params: &ElasticityParams,
    u_free: &[f64],
) -> Result<f64> {
    let u_full = dofmap.to_full(u_free)?;
    energy_full(mesh, params, &u_full)
}

fn piola(st: &PointState, mu: f64, lam: f64) -> [[f64; 2]; 2] {
    let mut p = [[0.0f64; 2]; 2];
    let c = lam * (st.det - 1.0) * st.det;
    for i in 0..2 {
        for jj in 0..2 {
            let finv_t = st.finv[jj][i];
            p[i][jj] = mu * (st.f[i][jj] - finv_t) + c * finv_t;
        }
    }
    p
}

/// Residual over free dofs (first variation of the energy).
pub fn residual(
    mesh: &Mesh,
    dofmap: &DofMap,
    params: &ElasticityParams,
    u_free: &[f64],
) -> Result<Vec<f64>> {
    if u_free.len() != dofmap.n_free() {
        return Err(Error::Dimension {
            expected: dofmap.n_free(),
            got: u_free.len(),
        });
    }
    let u_full = dofmap.to_full(u_free)?;
    let quad = element_quadrature(mesh.elem_kind);
    let (mu, lam) = (params.mu, params.lame_lambda);
    let mut r = vec![0.0; dofmap.n_free()];
    let mut coords = vec![[0.0; 2]; mesh.elem_kind.nodes_per_elem()];
    for (e, elem) in mesh.elements().enumerate() {
        for (a, &v) in elem.iter().enumerate() {
            coords[a] = mesh.nodes[v];
        }
        for qp in &quad {
            let geo = element_geometry(mesh.elem_kind, &coords, qp.xi)?;
            let st = deformation(elem, &geo.grad, u_full.as_slice(), e)?;
            let p = piola(&st, mu, lam);
            let w = qp.weight * geo.det_j;
            for (a, &v) in elem.iter().enumerate() {
                for i in 0..2 {
                    if let Some(slot) = dofmap.free_slot(2 * v + i) {
                        r[slot] += w * (p[i][0] * geo.grad[a][0] + p[i][1] * geo.grad[a][1]);
                    }
                }
            }
        }
    }
    Ok(r)
}

/// Consistent tangent over free dofs (symmetric: Hessian of the energy).
pub fn jacobian(
    mesh: &Mesh,
    dofmap: &DofMap,
    params: &ElasticityParams,
    u_free: &[f64],
) -> Result<CsrMatrix> {
    if u_free.len() != dofmap.n_free() {
        return Err(Error::Dimension {
            expected: dofmap.n_free(),
            got: u_free.len(),
        });
    }
    let u_full = dofmap.to_full(u_free)?;
    let quad = element_quadrature(mesh.elem_kind);
    let (mu, lam) = (params.mu, params.lame_lambda);
    let k = mesh.elem_kind.nodes_per_elem();
    let ndof = 2 * k;
    let mut triplets = Vec::with_capacity(mesh.n_elems() * ndof * ndof);
    let mut coords = vec![[0.0; 2]; k];
    for (e, elem) in mesh.elements().enumerate() {
        for (a, &v) in elem.iter().enumerate() {
            coords[a] = mesh.nodes[v];
        }
        let mut local = vec![0.0; ndof * ndof];
        for qp in &quad {
            let geo = element_geometry(mesh.elem_kind, &coords, qp.xi)?;
            let st = deformation(elem, &geo.grad, u_full.as_slice(), e)?;
            let w = qp.weight * geo.det_j;
            // dP_iJ/dF_kL = mu d_ik d_JL
            //            + (mu - lam (J-1) J) Finv_Jk Finv_Li
            //            + lam (2J - 1) J Finv_Ji Finv_Lk
            let c2 = mu - lam * (st.det - 1.0) * st.det;
            let c3 = lam * (2.0 * st.det - 1.0) * st.det;
            let mut amat = [[[[0.0f64; 2]; 2]; 2]; 2];
            for i in 0..2 {
                for jj in 0..2 {
                    for kk in 0..2 {
                        for ll in 0..2 {
                            let mut v = c2 * st.finv[jj][kk] * st.finv[ll][i]
                                + c3 * st.finv[jj][i] * st.finv[ll][kk];
                            if i == kk && jj == ll {
                                v += mu;
                            }
                            amat[i][jj][kk][ll] = v;
                        }
                    }
                }
            }
            for a in 0..k {
                for i in 0..2 {
                    for b in 0..k {
                        for kk in 0..2 {
                            let mut s = 0.0;
                            for jj in 0..2 {
                                for ll in 0..2 {
                                    s += geo.grad[a][jj] * amat[i][jj][kk][ll] * geo.grad[b][ll];
                                }
                            }
                            local[(2 * a + i) * ndof + (2 * b + kk)] += w * s;
                        }
                    }
                }
            }
        }
        for (a, &va) in elem.iter().enumerate() {
            for i in 0..2 {
                let Some(row) = dofmap.free_slot(2 * va + i) else {
                    continue;
                };
                for (b, &vb) in elem.iter().enumerate() {
                    for kk in 0..2 {
                        if let Some(col) = dofmap.free_slot(2 * vb + kk) {
                            triplets.push((row, col, local[(2 * a + i) * ndof + (2 * b + kk)]));
                        }
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(&triplets, dofmap.n_free(), dofmap.n_free())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dof::{boundary_dofs, BoundaryCondition};
    use crate::mesh::{build_unit_square_mesh, ElemKind, TagConvention};
    use crate::sparse::max_abs;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, u_t: f64) -> (Mesh, DofMap, ElasticityParams) {
        let mesh = build_unit_square_mesh(n, ElemKind::Q1Quad, None, TagConvention::Elasticity)
            .unwrap();
        let params = ElasticityParams::rubber(u_t);
        let dm = boundary_dofs(&mesh, BoundaryCondition::ElasticityStretch { u_t }).unwrap();
        (mesh, dm, params)
    }

    #[test]
    fn undeformed_state_has_zero_energy_and_residual() {
        let (mesh, dm, params) = setup(3, 0.0);
        let u = vec![0.0; dm.n_free()];
        assert_eq!(energy(&mesh, &dm, &params, &u).unwrap(), 0.0);
        let r = residual(&mesh, &dm, &params, &u).unwrap();
        assert_eq!(max_abs(&r), 0.0, "unloaded body is an exact equilibrium");
    }

    #[test]
    fn uniform_dilation_matches_closed_form() {
        // u = alpha (x, y) gives F = (1 + alpha) I in every element, so the
        // energy is psi(F) times the domain area (= 1).
        let (mesh, _, params) = setup(2, 0.0);
        let alpha = 0.1;
        let mut u_full = Vec::with_capacity(2 * mesh.n_nodes());
        for p in &mesh.nodes {
            u_full.push(alpha * p[0]);
            u_full.push(alpha * p[1]);
        }
        let e = energy_full(&mesh, &params, &u_full).unwrap();
        let s = 1.0 + alpha;
        let jf = s * s;
        let ic = 2.0 * s * s + 1.0;
        let psi = 0.5 * params.mu * (ic - 3.0) - params.mu * jf.ln()
            + 0.5 * params.lame_lambda * (jf - 1.0) * (jf - 1.0);
        assert!((e - psi).abs() < 1e-13, "{e} vs {psi}");
    }

    fn fd_energy_gradient(
        mesh: &Mesh,
        dm: &DofMap,
        params: &ElasticityParams,
        u: &[f64],
        eps: f64,
    ) -> Vec<f64> {
        let mut g = vec![0.0; u.len()];
        let mut up = u.to_vec();
        for i in 0..u.len() {
            let orig = up[i];
            up[i] = orig + eps;
            let ep = energy(mesh, dm, params, &up).unwrap();
            up[i] = orig - eps;
            let em = energy(mesh, dm, params, &up).unwrap();
            up[i] = orig;
            g[i] = (ep - em) / (2.0 * eps);
        }
        g
    }

    #[test]
    fn residual_is_the_energy_gradient() {
        let (mesh, dm, params) = setup(2, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u: Vec<f64> = (0..dm.n_free())
            .map(|_| 0.02 * (rng.random::<f64>() - 0.5))
            .collect();
        let r = residual(&mesh, &dm, &params, &u).unwrap();
        let g = fd_energy_gradient(&mesh, &dm, &params, &u, 1e-6);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..u.len() {
            num += (r[i] - g[i]) * (r[i] - g[i]);
            den += r[i] * r[i];
        }
        assert!((num / den).sqrt() < 1e-6, "rel err {}", (num / den).sqrt());
    }

    #[test]
    fn translated_state_still_matches_the_gradient_oracle() {
        // Shift every free dof by a constant; the residual changes only via
        // the coupling with the fixed boundary and must still equal the FD
        // energy gradient there.
        let (mesh, dm, params) = setup(2, 0.0);
        let mut u = vec![0.0; dm.n_free()];
        for (slot, &dof) in dm.free_dofs.iter().enumerate() {
            u[slot] = if dof % 2 == 0 { 0.01 } else { -0.015 };
        }
        let r = residual(&mesh, &dm, &params, &u).unwrap();
        let g = fd_energy_gradient(&mesh, &dm, &params, &u, 1e-6);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..u.len() {
            num += (r[i] - g[i]) * (r[i] - g[i]);
            den += r[i] * r[i];
        }
        assert!((num / den).sqrt() < 1e-6);
        assert!(max_abs(&r) > 0.0, "boundary coupling makes this a non-equilibrium");
    }

    #[test]
    fn tangent_is_symmetric() {
        let (mesh, dm, params) = setup(2, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let u: Vec<f64> = (0..dm.n_free())
            .map(|_| 0.02 * (rng.random::<f64>() - 0.5))
            .collect();
        let jac = jacobian(&mesh, &dm, &params, &u).unwrap();
        let d = jac.to_dense();
        let n = dm.n_free();
        let mut max_asym = 0.0f64;
        let mut max_entry = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                max_asym = max_asym.max((d[i][j] - d[j][i]).abs());
                max_entry = max_entry.max(d[i][j].abs());
            }
        }
        assert!(max_asym / max_entry < 1e-10);
    }

    #[test]
    fn tangent_matches_finite_differences() {
        let (mesh, dm, params) = setup(2, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let u: Vec<f64> = (0..dm.n_free())
            .map(|_| 0.02 * (rng.random::<f64>() - 0.5))
            .collect();
        let w: Vec<f64> = (0..dm.n_free())
            .map(|_| rng.random::<f64>() - 0.5)
            .collect();
        let jw = jacobian(&mesh, &dm, &params, &u).unwrap().matvec(&w).unwrap();
        let eps = 1e-6;
        let up: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a + eps * b).collect();
        let um: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a - eps * b).collect();
        let rp = residual(&mesh, &dm, &params, &up).unwrap();
        let rm = residual(&mesh, &dm, &params, &um).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..w.len() {
            let fd = (rp[i] - rm[i]) / (2.0 * eps);
            num += (jw[i] - fd) * (jw[i] - fd);
            den += jw[i] * jw[i];
        }
        assert!((num / den).sqrt() < 1e-6, "rel err {}", (num / den).sqrt());
    }

    #[test]
    fn zero_displacement_tangent_is_linear_elasticity() {
        // Independent oracle: assemble the plane-strain linear elasticity
        // stiffness C_iJkL = lam d_iJ d_kL + mu (d_ik d_JL + d_iL d_Jk).
        let (mesh, dm, params) = setup(2, 0.0);
        let u = vec![0.0; dm.n_free()];
        let jac = jacobian(&mesh, &dm, &params, &u).unwrap();
        let dense = jac.to_dense();

        let quad = element_quadrature(mesh.elem_kind);
        let nfree = dm.n_free();
        let mut oracle = vec![vec![0.0; nfree]; nfree];
        let dlt = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        for elem in mesh.elements() {
            let coords: Vec<[f64; 2]> = elem.iter().map(|&v| mesh.nodes[v]).collect();
            for qp in &quad {
                let geo = element_geometry(mesh.elem_kind, &coords, qp.xi).unwrap();
                let w = qp.weight * geo.det_j;
                for (a, &va) in elem.iter().enumerate() {
                    for i in 0..2 {
                        let Some(row) = dm.free_slot(2 * va + i) else { continue };
                        for (b, &vb) in elem.iter().enumerate() {
                            for kk in 0..2 {
                                let Some(col) = dm.free_slot(2 * vb + kk) else { continue };
                                let mut s = 0.0;
                                for jj in 0..2 {
                                    for ll in 0..2 {
                                        let c = params.lame_lambda * dlt(i, jj) * dlt(kk, ll)
                                            + params.mu
                                                * (dlt(i, kk) * dlt(jj, ll)
                                                    + dlt(i, ll) * dlt(jj, kk));
                                        s += geo.grad[a][jj] * c * geo.grad[b][ll];
                                    }
                                }
                                oracle[row][col] += w * s;
                            }
                        }
                    }
                }
            }
        }
        for i in 0..nfree {
            for j in 0..nfree {
                assert!(
                    (dense[i][j] - oracle[i][j]).abs() < 1e-12,
                    "entry ({i},{j}): {} vs {}",
                    dense[i][j],
                    oracle[i][j]
                );
            }
        }
    }

    #[test]
    fn element_inversion_is_an_error_not_a_nan() {
        let (mesh, dm, params) = setup(2, 0.0);
        // Push one interior node far enough to flip its elements.
        let mut u = vec![0.0; dm.n_free()];
        let interior = dm
            .free_dofs
            .iter()
            .position(|&dof| {
                let node = dof / 2;
                let p = mesh.nodes[node];
                p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 1.0 && dof % 2 == 0
            })
            .unwrap();
        u[interior] = -10.0;
        assert!(matches!(
            energy(&mesh, &dm, &params, &u),
            Err(Error::ElementInversion { .. })
        ));
        assert!(matches!(
            residual(&mesh, &dm, &params, &u),
            Err(Error::ElementInversion { .. })
        ));
        assert!(matches!(
            jacobian(&mesh, &dm, &params, &u),
            Err(Error::ElementInversion { .. })
        ));
    }
}
