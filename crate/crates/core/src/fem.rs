//! Reference elements: quadrature rules, shape functions, and the
//! isoparametric map used by the assembly loops.

use crate::error::{Error, Result};
use crate::mesh::ElemKind;

/// One quadrature point in reference coordinates with its weight.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub xi: [f64; 2],
    pub weight: f64,
}

/// Quadrature rule for the reference element.
///
/// P1 triangles use the degree-2 three-point rule on the unit triangle;
/// Q1 quads use 2x2 Gauss on [-1,1]^2.
pub fn element_quadrature(kind: ElemKind) -> Vec<QuadPoint> {
    match kind {
        ElemKind::P1Tri => {
            let w = 1.0 / 6.0;
            vec![
                QuadPoint { xi: [1.0 / 6.0, 1.0 / 6.0], weight: w },
                QuadPoint { xi: [2.0 / 3.0, 1.0 / 6.0], weight: w },
                QuadPoint { xi: [1.0 / 6.0, 2.0 / 3.0], weight: w },
            ]
        }
        ElemKind::Q1Quad => {
            let g = 1.0 / 3.0f64.sqrt();
            let mut pts = Vec::with_capacity(4);
            for &b in &[-g, g] {
                for &a in &[-g, g] {
                    pts.push(QuadPoint { xi: [a, b], weight: 1.0 });
                }
            }
            pts
        }
    }
}

/// Shape function values at a reference point, one per element node.
pub fn shape_values(kind: ElemKind, xi: [f64; 2]) -> Vec<f64> {
    let [x, y] = xi;
    match kind {
        ElemKind::P1Tri => vec![1.0 - x - y, x, y],
        ElemKind::Q1Quad => vec![
            0.25 * (1.0 - x) * (1.0 - y),
            0.25 * (1.0 + x) * (1.0 - y),
            0.25 * (1.0 + x) * (1.0 + y),
            0.25 * (1.0 - x) * (1.0 + y),
        ],
    }
}

/// Reference-coordinate gradients of the shape functions.
pub fn shape_gradients(kind: ElemKind, xi: [f64; 2]) -> Vec<[f64; 2]> {
    let [x, y] = xi;
    match kind {
        ElemKind::P1Tri => vec![[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]],
        ElemKind::Q1Quad => vec![
            [-0.25 * (1.0 - y), -0.25 * (1.0 - x)],
            [0.25 * (1.0 - y), -0.25 * (1.0 + x)],
            [0.25 * (1.0 + y), 0.25 * (1.0 + x)],
            [-0.25 * (1.0 + y), 0.25 * (1.0 - x)],
        ],
    }
}

/// Geometry of one element at one quadrature point: physical shape-function
/// gradients and the Jacobian determinant of the reference map.
pub struct ElementGeometry {
    pub shape: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    pub det_j: f64,
}

/// Evaluates the isoparametric map of an element at a reference point.
pub fn element_geometry(
    kind: ElemKind,
    coords: &[[f64; 2]],
    xi: [f64; 2],
) -> Result<ElementGeometry> {
    let shape = shape_values(kind, xi);
    let ref_grad = shape_gradients(kind, xi);
    // J[r][c] = d x_r / d xi_c
    let mut j = [[0.0f64; 2]; 2];
    for (a, g) in ref_grad.iter().enumerate() {
        for r in 0..2 {
            for c in 0..2 {
                j[r][c] += coords[a][r] * g[c];
            }
        }
    }
    let det_j = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if det_j <= 0.0 {
        return Err(Error::InvalidMesh(
            "non-positive reference-map determinant".into(),
        ));
    }
    let inv = [
        [j[1][1] / det_j, -j[0][1] / det_j],
        [-j[1][0] / det_j, j[0][0] / det_j],
    ];
    // Physical gradient: grad N = J^-T * ref_grad.
    let grad = ref_grad
        .iter()
        .map(|g| {
            [
                inv[0][0] * g[0] + inv[1][0] * g[1],
                inv[0][1] * g[0] + inv[1][1] * g[1],
            ]
        })
        .collect();
    Ok(ElementGeometry { shape, grad, det_j })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tri_weights_sum_to_reference_area() {
        let total: f64 = element_quadrature(ElemKind::P1Tri)
            .iter()
            .map(|q| q.weight)
            .sum();
        assert!((total - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quad_weights_sum_to_four() {
        let total: f64 = element_quadrature(ElemKind::Q1Quad)
            .iter()
            .map(|q| q.weight)
            .sum();
        assert!((total - 4.0).abs() < 1e-15);
    }

    #[test]
    fn integral_of_x_over_reference_triangle() {
        // Closed form: int_T x dA = 1/6 on the unit triangle.
        let val: f64 = element_quadrature(ElemKind::P1Tri)
            .iter()
            .map(|q| q.weight * q.xi[0])
            .sum();
        assert!((val - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn partition_of_unity_at_quadrature_points() {
        for kind in [ElemKind::P1Tri, ElemKind::Q1Quad] {
            for q in element_quadrature(kind) {
                let s: f64 = shape_values(kind, q.xi).iter().sum();
                assert!((s - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn geometry_of_unit_cells() {
        // Right triangle with legs h: det J = h^2.
        let h = 0.25;
        let tri = [[0.0, 0.0], [h, 0.0], [h, h]];
        let g = element_geometry(ElemKind::P1Tri, &tri, [1.0 / 6.0, 1.0 / 6.0]).unwrap();
        assert!((g.det_j - h * h).abs() < 1e-15);
        // Axis-aligned square cell with side h: det J = (h/2)^2.
        let quad = [[0.0, 0.0], [h, 0.0], [h, h], [0.0, h]];
        let g = element_geometry(ElemKind::Q1Quad, &quad, [0.3, -0.2]).unwrap();
        assert!((g.det_j - h * h / 4.0).abs() < 1e-15);
        // Gradient of the linear function x on the quad is (1, 0).
        let nodal_x = [0.0, h, h, 0.0];
        let mut gx = [0.0, 0.0];
        for (a, v) in nodal_x.iter().enumerate() {
            gx[0] += v * g.grad[a][0];
            gx[1] += v * g.grad[a][1];
        }
        assert!((gx[0] - 1.0).abs() < 1e-12 && gx[1].abs() < 1e-12);
    }

    #[test]
    fn flipped_element_is_rejected() {
        let tri = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        assert!(element_geometry(ElemKind::P1Tri, &tri, [0.2, 0.2]).is_err());
    }
}
