//! Inter-mesh transfer: nodal prolongation (linear / bilinear interpolation)
//! and injection restriction between nested structured grids.

use crate::error::{Error, Result};
use crate::mesh::{ElemKind, Mesh};
use crate::sparse::CsrMatrix;

/// Prolongation and restriction between a coarse and a fine mesh.
///
/// Both operators are stored nodally; [`TransferOps::prolong`] and
/// [`TransferOps::restrict`] apply them componentwise to interleaved
/// d-component nodal vectors.
#[derive(Debug, Clone)]
pub struct TransferOps {
    /// (n_fine_nodes x n_coarse_nodes) interpolation weights.
    pub prolongation: CsrMatrix,
    /// (n_coarse_nodes x n_fine_nodes) injection at coincident nodes.
    pub restriction: CsrMatrix,
}

impl TransferOps {
    pub fn identity(n_nodes: usize) -> Self {
        let trip: Vec<_> = (0..n_nodes).map(|i| (i, i, 1.0)).collect();
        let eye = CsrMatrix::from_triplets(&trip, n_nodes, n_nodes).unwrap();
        TransferOps {
            prolongation: eye.clone(),
            restriction: eye,
        }
    }

    fn apply(m: &CsrMatrix, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() % m.ncols != 0 || v.is_empty() {
            return Err(Error::Dimension {
                expected: m.ncols,
                got: v.len(),
            });
        }
        let d = v.len() / m.ncols;
        if d == 1 {
            return m.matvec(v);
        }
        let mut out = vec![0.0; m.nrows * d];
        for i in 0..m.nrows {
            for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                let j = m.col_idx[k];
                let w = m.values[k];
                for c in 0..d {
                    out[i * d + c] += w * v[j * d + c];
                }
            }
        }
        Ok(out)
    }

    /// Coarse nodal vector (d components interleaved) -> fine.
    pub fn prolong(&self, coarse: &[f64]) -> Result<Vec<f64>> {
        Self::apply(&self.prolongation, coarse)
    }

    /// Fine nodal vector (d components interleaved) -> coarse.
    pub fn restrict(&self, fine: &[f64]) -> Result<Vec<f64>> {
        Self::apply(&self.restriction, fine)
    }
}

/// Builds transfer operators from a coarse mesh to a nested fine refinement.
///
/// Identical meshes yield identity maps. Otherwise the fine grid must be a
/// `k`-fold refinement with the same element kind and hole spec; prolongation
/// interpolates within the containing coarse element (piecewise linear on the
/// triangle split, bilinear on quads) and restriction injects at coincident
/// nodes.
pub fn build_transfer(coarse: &Mesh, fine: &Mesh) -> Result<TransferOps> {
    if coarse.same_spec(fine) {
        return Ok(TransferOps::identity(coarse.n_nodes()));
    }
    if coarse.elem_kind != fine.elem_kind {
        return Err(Error::Transfer("meshes have different element kinds".into()));
    }
    if coarse.hole != fine.hole {
        return Err(Error::Transfer("meshes have different hole specs".into()));
    }
    if fine.n < coarse.n || fine.n % coarse.n != 0 {
        return Err(Error::Transfer(format!(
            "fine grid ({}) is not a nested refinement of the coarse grid ({})",
            fine.n, coarse.n
        )));
    }
    let k = fine.n / coarse.n;
    let npc = coarse.n + 1;
    let npf = fine.n + 1;

    // Reverse maps: structured grid id -> compact node id.
    let mut coarse_of_grid = vec![usize::MAX; npc * npc];
    for (node, &gid) in coarse.grid_ids.iter().enumerate() {
        coarse_of_grid[gid] = node;
    }
    let mut fine_of_grid = vec![usize::MAX; npf * npf];
    for (node, &gid) in fine.grid_ids.iter().enumerate() {
        fine_of_grid[gid] = node;
    }

    // Restriction: coarse node (i, j) <- fine node (k i, k j).
    let mut r_trip = Vec::with_capacity(coarse.n_nodes());
    for (cn, &gid) in coarse.grid_ids.iter().enumerate() {
        let (ci, cj) = (gid % npc, gid / npc);
        let fid = (cj * k) * npf + ci * k;
        let fnode = fine_of_grid[fid];
        if fnode == usize::MAX {
            return Err(Error::Transfer(format!(
                "coarse node ({ci}, {cj}) has no coincident fine node"
            )));
        }
        r_trip.push((cn, fnode, 1.0));
    }

    // Prolongation: interpolate each fine node inside its coarse cell.
    let mut p_trip = Vec::new();
    for (fnode, &gid) in fine.grid_ids.iter().enumerate() {
        let (fi, fj) = (gid % npf, gid / npf);
        let ci = (fi / k).min(coarse.n - 1);
        let cj = (fj / k).min(coarse.n - 1);
        let s = (fi - ci * k) as f64 / k as f64;
        let t = (fj - cj * k) as f64 / k as f64;
        let corner = |di: usize, dj: usize| -> Result<usize> {
            let node = coarse_of_grid[(cj + dj) * npc + (ci + di)];
            if node == usize::MAX {
                return Err(Error::Transfer(format!(
                    "fine node ({fi}, {fj}) interpolates from a removed coarse node"
                )));
            }
            Ok(node)
        };
        let weights: Vec<(usize, f64)> = match coarse.elem_kind {
            ElemKind::Q1Quad => vec![
                (corner(0, 0)?, (1.0 - s) * (1.0 - t)),
                (corner(1, 0)?, s * (1.0 - t)),
                (corner(1, 1)?, s * t),
                (corner(0, 1)?, (1.0 - s) * t),
            ],
            ElemKind::P1Tri => {
                // Cells split along the lower-left to upper-right diagonal.
                if t <= s {
                    vec![
                        (corner(0, 0)?, 1.0 - s),
                        (corner(1, 0)?, s - t),
                        (corner(1, 1)?, t),
                    ]
                } else {
                    vec![
                        (corner(0, 0)?, 1.0 - t),
                        (corner(1, 1)?, s),
                        (corner(0, 1)?, t - s),
                    ]
                }
            }
        };
        for (cn, w) in weights {
            if w != 0.0 {
                p_trip.push((fnode, cn, w));
            }
        }
    }

    Ok(TransferOps {
        prolongation: CsrMatrix::from_triplets(&p_trip, fine.n_nodes(), coarse.n_nodes())?,
        restriction: CsrMatrix::from_triplets(&r_trip, coarse.n_nodes(), fine.n_nodes())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_unit_square_mesh, ElemKind, TagConvention};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn mesh(n: usize, kind: ElemKind) -> Mesh {
        build_unit_square_mesh(n, kind, None, TagConvention::Poisson).unwrap()
    }

    #[test]
    fn identical_meshes_give_identity() {
        let m = mesh(4, ElemKind::P1Tri);
        let ops = build_transfer(&m, &m).unwrap();
        let v: Vec<f64> = (0..m.n_nodes()).map(|i| i as f64).collect();
        assert_eq!(ops.prolong(&v).unwrap(), v);
        assert_eq!(ops.restrict(&v).unwrap(), v);
    }

    #[test]
    fn edge_midpoint_interpolates_linearly() {
        let coarse = mesh(2, ElemKind::P1Tri);
        let fine = mesh(4, ElemKind::P1Tri);
        let ops = build_transfer(&coarse, &fine).unwrap();
        // Coarse field = x; fine midpoints on the bottom edge get 0.25, 0.75.
        let vc: Vec<f64> = coarse.nodes.iter().map(|p| p[0]).collect();
        let vf = ops.prolong(&vc).unwrap();
        for (node, p) in fine.nodes.iter().enumerate() {
            assert!(
                (vf[node] - p[0]).abs() < 1e-14,
                "x is linear and must be reproduced exactly"
            );
        }
    }

    #[test]
    fn restriction_after_prolongation_is_identity() {
        for kind in [ElemKind::P1Tri, ElemKind::Q1Quad] {
            let coarse = mesh(4, kind);
            let fine = mesh(8, kind);
            let ops = build_transfer(&coarse, &fine).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let v: Vec<f64> = (0..coarse.n_nodes())
                .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                .collect();
            let back = ops.restrict(&ops.prolong(&v).unwrap()).unwrap();
            // Injection at coincident nodes reproduces coarse values bit-exact.
            assert_eq!(back, v);

            // Oracle: dense product R * P equals the identity.
            let p = ops.prolongation.to_dense();
            let r = ops.restriction.to_dense();
            for i in 0..coarse.n_nodes() {
                for j in 0..coarse.n_nodes() {
                    let mut s = 0.0;
                    for l in 0..fine.n_nodes() {
                        s += r[i][l] * p[l][j];
                    }
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((s - expect).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn vector_fields_transfer_componentwise() {
        let coarse = mesh(2, ElemKind::Q1Quad);
        let fine = mesh(4, ElemKind::Q1Quad);
        let ops = build_transfer(&coarse, &fine).unwrap();
        // Interleaved (x, y) field: u = (x, 2y) is bilinear, reproduced exactly.
        let mut vc = Vec::new();
        for p in &coarse.nodes {
            vc.push(p[0]);
            vc.push(2.0 * p[1]);
        }
        let vf = ops.prolong(&vc).unwrap();
        for (node, p) in fine.nodes.iter().enumerate() {
            assert!((vf[2 * node] - p[0]).abs() < 1e-14);
            assert!((vf[2 * node + 1] - 2.0 * p[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn non_nested_meshes_are_rejected() {
        let coarse = mesh(3, ElemKind::P1Tri);
        let fine = mesh(4, ElemKind::P1Tri);
        assert!(matches!(
            build_transfer(&coarse, &fine),
            Err(Error::Transfer(_))
        ));
        let quad = mesh(6, ElemKind::Q1Quad);
        assert!(matches!(
            build_transfer(&coarse, &quad),
            Err(Error::Transfer(_))
        ));
    }
}
