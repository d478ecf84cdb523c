//! Structured 2D meshes on the unit square with problem-specific boundary
//! tagging and optional elliptical hole masking.
//!
//! Grids are n x n cells over (0,1)^2. Triangular meshes split each cell
//! along the diagonal from the lower-left to the upper-right corner; both
//! triangles and quads are numbered counterclockwise.

use crate::error::{Error, Result};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemKind {
    P1Tri,
    Q1Quad,
}

impl ElemKind {
    pub fn nodes_per_elem(self) -> usize {
        match self {
            ElemKind::P1Tri => 3,
            ElemKind::Q1Quad => 4,
        }
    }
}

/// Per-node boundary classification. Every node carries exactly one tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Interior,
    /// Dirichlet boundary of the scalar problem (the x = 1 edge).
    GammaDirichlet,
    /// Natural (zero-flux) boundary of the scalar problem.
    GammaNeumann,
    /// Clamped bottom edge of the elasticity problem.
    GammaBottom,
    /// Displaced top edge of the elasticity problem.
    GammaTop,
    /// Traction-free boundary (elasticity sides and any hole rim).
    GammaOther,
}

/// Which tagging convention to apply to the exterior boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagConvention {
    /// x = 1 edge is Dirichlet, the rest of the exterior is Neumann.
    Poisson,
    /// Bottom and top edges are constrained, sides are traction-free.
    Elasticity,
}

/// Elliptical hole specification: elements whose centroid falls inside the
/// ellipse are removed from the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoleSpec {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
}

impl HoleSpec {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let dx = (p[0] - self.center[0]) / self.semi_axes[0];
        let dy = (p[1] - self.center[1]) / self.semi_axes[1];
        dx * dx + dy * dy < 1.0
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub elem_kind: ElemKind,
    pub boundary_tags: Vec<BoundaryTag>,
    /// Flattened connectivity, `nodes_per_elem` entries per element.
    conn: Vec<usize>,
    /// Subdivisions per side of the generating grid.
    pub n: usize,
    pub hole: Option<HoleSpec>,
    /// Element ids (in the unmasked grid numbering) removed by the hole.
    pub hole_mask: Option<Vec<usize>>,
    /// Structured grid node id for each compact node id; identity without a
    /// hole. Grid id of node (i, j) is j * (n + 1) + i.
    pub grid_ids: Vec<usize>,
    pub convention: TagConvention,
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elems(&self) -> usize {
        self.conn.len() / self.elem_kind.nodes_per_elem()
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let k = self.elem_kind.nodes_per_elem();
        &self.conn[e * k..(e + 1) * k]
    }

    pub fn elements(&self) -> impl Iterator<Item = &[usize]> {
        self.conn.chunks(self.elem_kind.nodes_per_elem())
    }

    /// True when two meshes describe the same grid (kind, resolution, hole).
    pub fn same_spec(&self, other: &Mesh) -> bool {
        self.elem_kind == other.elem_kind
            && self.n == other.n
            && self.hole == other.hole
            && self.convention == other.convention
    }

    /// Text summary used by the `mesh-info` command.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes: {}", self.n_nodes());
        let _ = writeln!(s, "elements: {}", self.n_elems());
        let kind = match self.elem_kind {
            ElemKind::P1Tri => "P1 triangles",
            ElemKind::Q1Quad => "Q1 quadrilaterals",
        };
        let _ = writeln!(s, "element kind: {kind}");
        if let Some(mask) = &self.hole_mask {
            let _ = writeln!(s, "hole-masked elements: {}", mask.len());
        }
        let tags = [
            (BoundaryTag::Interior, "interior"),
            (BoundaryTag::GammaDirichlet, "gamma_dirichlet"),
            (BoundaryTag::GammaNeumann, "gamma_neumann"),
            (BoundaryTag::GammaBottom, "gamma_bottom"),
            (BoundaryTag::GammaTop, "gamma_top"),
            (BoundaryTag::GammaOther, "gamma_other"),
        ];
        for (tag, name) in tags {
            let count = self.boundary_tags.iter().filter(|&&t| t == tag).count();
            if count > 0 {
                let _ = writeln!(s, "tag {name}: {count}");
            }
        }
        s
    }
}

/// Compact descriptor from which a structured mesh can be rebuilt; stored in
/// model and dataset containers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSpec {
    pub n: usize,
    pub kind: ElemKind,
    pub hole: Option<HoleSpec>,
    pub convention: TagConvention,
}

impl MeshSpec {
    pub fn of(mesh: &Mesh) -> Self {
        MeshSpec {
            n: mesh.n,
            kind: mesh.elem_kind,
            hole: mesh.hole,
            convention: mesh.convention,
        }
    }

    pub fn build(&self) -> Result<Mesh> {
        build_unit_square_mesh(self.n, self.kind, self.hole, self.convention)
    }
}

/// Builds a structured mesh of the unit square.
///
/// With a hole spec, elements whose centroid lies inside the ellipse are
/// removed, orphaned nodes are dropped, and interior nodes left on the new
/// rim are tagged [`BoundaryTag::GammaOther`].
pub fn build_unit_square_mesh(
    n: usize,
    kind: ElemKind,
    hole: Option<HoleSpec>,
    convention: TagConvention,
) -> Result<Mesh> {
    if n < 2 {
        return Err(Error::InvalidMesh(format!(
            "need at least 2 subdivisions per side, got {n}"
        )));
    }
    if let Some(h) = &hole {
        let [cx, cy] = h.center;
        let [rx, ry] = h.semi_axes;
        if rx <= 0.0 || ry <= 0.0 || cx - rx <= 0.0 || cx + rx >= 1.0 || cy - ry <= 0.0 || cy + ry >= 1.0
        {
            return Err(Error::InvalidMesh(
                "hole ellipse must lie strictly inside the unit square".into(),
            ));
        }
    }
    let np = n + 1;
    let h = 1.0 / n as f64;
    let grid_node = |i: usize, j: usize| j * np + i;
    let mut nodes = Vec::with_capacity(np * np);
    let mut tags = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            nodes.push([i as f64 * h, j as f64 * h]);
            tags.push(tag_for(i, j, n, convention));
        }
    }

    // All elements of the full grid, cell by cell.
    let mut conn: Vec<usize> = Vec::new();
    let mut centroids: Vec<[f64; 2]> = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let a = grid_node(i, j);
            let b = grid_node(i + 1, j);
            let c = grid_node(i + 1, j + 1);
            let d = grid_node(i, j + 1);
            match kind {
                ElemKind::P1Tri => {
                    conn.extend_from_slice(&[a, b, c]);
                    conn.extend_from_slice(&[a, c, d]);
                    let pa = nodes[a];
                    let pb = nodes[b];
                    let pc = nodes[c];
                    let pd = nodes[d];
                    centroids.push(centroid(&[pa, pb, pc]));
                    centroids.push(centroid(&[pa, pc, pd]));
                }
                ElemKind::Q1Quad => {
                    conn.extend_from_slice(&[a, b, c, d]);
                    centroids.push(centroid(&[nodes[a], nodes[b], nodes[c], nodes[d]]));
                }
            }
        }
    }
    let k = kind.nodes_per_elem();
    let n_elems_full = conn.len() / k;

    let (kept, removed): (Vec<usize>, Vec<usize>) = match &hole {
        None => ((0..n_elems_full).collect(), Vec::new()),
        Some(spec) => {
            let mut kept = Vec::new();
            let mut removed = Vec::new();
            for e in 0..n_elems_full {
                if spec.contains(centroids[e]) {
                    removed.push(e);
                } else {
                    kept.push(e);
                }
            }
            (kept, removed)
        }
    };
    if kept.is_empty() {
        return Err(Error::InvalidMesh("hole removes every element".into()));
    }

    if removed.is_empty() {
        let mesh = Mesh {
            grid_ids: (0..nodes.len()).collect(),
            nodes,
            elem_kind: kind,
            boundary_tags: tags,
            conn,
            n,
            hole,
            hole_mask: None,
            convention,
        };
        check_orientation(&mesh)?;
        return Ok(mesh);
    }

    // Retag rim nodes: interior nodes touching a removed element but still
    // referenced by a kept one sit on the new hole boundary.
    let mut touches_removed = vec![false; nodes.len()];
    for &e in &removed {
        for &v in &conn[e * k..(e + 1) * k] {
            touches_removed[v] = true;
        }
    }
    let mut referenced = vec![false; nodes.len()];
    for &e in &kept {
        for &v in &conn[e * k..(e + 1) * k] {
            referenced[v] = true;
        }
    }
    for v in 0..nodes.len() {
        if referenced[v] && touches_removed[v] && tags[v] == BoundaryTag::Interior {
            tags[v] = BoundaryTag::GammaOther;
        }
    }

    // Compact node numbering.
    let mut remap = vec![usize::MAX; nodes.len()];
    let mut new_nodes = Vec::new();
    let mut new_tags = Vec::new();
    let mut grid_ids = Vec::new();
    for v in 0..nodes.len() {
        if referenced[v] {
            remap[v] = new_nodes.len();
            new_nodes.push(nodes[v]);
            new_tags.push(tags[v]);
            grid_ids.push(v);
        }
    }
    let mut new_conn = Vec::with_capacity(kept.len() * k);
    for &e in &kept {
        for &v in &conn[e * k..(e + 1) * k] {
            new_conn.push(remap[v]);
        }
    }

    let mesh = Mesh {
        nodes: new_nodes,
        elem_kind: kind,
        boundary_tags: new_tags,
        conn: new_conn,
        n,
        hole,
        hole_mask: Some(removed),
        grid_ids,
        convention,
    };
    check_orientation(&mesh)?;
    Ok(mesh)
}

fn centroid(pts: &[[f64; 2]]) -> [f64; 2] {
    let n = pts.len() as f64;
    let mut c = [0.0, 0.0];
    for p in pts {
        c[0] += p[0];
        c[1] += p[1];
    }
    [c[0] / n, c[1] / n]
}

fn tag_for(i: usize, j: usize, n: usize, convention: TagConvention) -> BoundaryTag {
    let on_left = i == 0;
    let on_right = i == n;
    let on_bottom = j == 0;
    let on_top = j == n;
    if !(on_left || on_right || on_bottom || on_top) {
        return BoundaryTag::Interior;
    }
    match convention {
        TagConvention::Poisson => {
            if on_right {
                BoundaryTag::GammaDirichlet
            } else {
                BoundaryTag::GammaNeumann
            }
        }
        TagConvention::Elasticity => {
            if on_bottom {
                BoundaryTag::GammaBottom
            } else if on_top {
                BoundaryTag::GammaTop
            } else {
                BoundaryTag::GammaOther
            }
        }
    }
}

fn check_orientation(mesh: &Mesh) -> Result<()> {
    for (e, elem) in mesh.elements().enumerate() {
        let p: Vec<[f64; 2]> = elem.iter().map(|&v| mesh.nodes[v]).collect();
        // Signed area via the shoelace formula; positive means CCW.
        let mut area2 = 0.0;
        for i in 0..p.len() {
            let q = p[(i + 1) % p.len()];
            area2 += p[i][0] * q[1] - q[0] * p[i][1];
        }
        if area2 <= 0.0 {
            return Err(Error::InvalidMesh(format!(
                "element {e} is not counterclockwise"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_counts_match_hand_counts() {
        for n in [2usize, 4, 8] {
            let tri = build_unit_square_mesh(n, ElemKind::P1Tri, None, TagConvention::Poisson)
                .unwrap();
            assert_eq!(tri.n_nodes(), (n + 1) * (n + 1));
            assert_eq!(tri.n_elems(), 2 * n * n);
            let quad = build_unit_square_mesh(n, ElemKind::Q1Quad, None, TagConvention::Poisson)
                .unwrap();
            assert_eq!(quad.n_nodes(), (n + 1) * (n + 1));
            assert_eq!(quad.n_elems(), n * n);
        }
    }

    #[test]
    fn benchmark_grid_sizes() {
        let m32 = build_unit_square_mesh(32, ElemKind::P1Tri, None, TagConvention::Poisson)
            .unwrap();
        assert_eq!(m32.n_nodes(), 1_089);
        let m128 = build_unit_square_mesh(128, ElemKind::P1Tri, None, TagConvention::Poisson)
            .unwrap();
        assert_eq!(m128.n_nodes(), 16_641);
    }

    #[test]
    fn smallest_quad_grid() {
        let m = build_unit_square_mesh(2, ElemKind::Q1Quad, None, TagConvention::Poisson).unwrap();
        assert_eq!(m.n_nodes(), 9);
        assert_eq!(m.n_elems(), 4);
        let boundary = m
            .boundary_tags
            .iter()
            .filter(|&&t| t != BoundaryTag::Interior)
            .count();
        assert_eq!(boundary, 8);
    }

    #[test]
    fn rejects_tiny_grid() {
        assert!(matches!(
            build_unit_square_mesh(1, ElemKind::P1Tri, None, TagConvention::Poisson),
            Err(Error::InvalidMesh(_))
        ));
    }

    #[test]
    fn poisson_tags() {
        let m = build_unit_square_mesh(4, ElemKind::P1Tri, None, TagConvention::Poisson).unwrap();
        for (v, p) in m.nodes.iter().enumerate() {
            let tag = m.boundary_tags[v];
            if p[0] == 1.0 {
                assert_eq!(tag, BoundaryTag::GammaDirichlet);
            } else if p[0] == 0.0 || p[1] == 0.0 || p[1] == 1.0 {
                assert_eq!(tag, BoundaryTag::GammaNeumann);
            } else {
                assert_eq!(tag, BoundaryTag::Interior);
            }
        }
        // Dirichlet column of a 5x5 grid has 5 nodes.
        let nd = m
            .boundary_tags
            .iter()
            .filter(|&&t| t == BoundaryTag::GammaDirichlet)
            .count();
        assert_eq!(nd, 5);
    }

    #[test]
    fn elasticity_tags_give_bottom_and_top_priority() {
        let m =
            build_unit_square_mesh(2, ElemKind::Q1Quad, None, TagConvention::Elasticity).unwrap();
        let count = |t: BoundaryTag| m.boundary_tags.iter().filter(|&&x| x == t).count();
        assert_eq!(count(BoundaryTag::GammaBottom), 3);
        assert_eq!(count(BoundaryTag::GammaTop), 3);
        assert_eq!(count(BoundaryTag::GammaOther), 2);
        assert_eq!(count(BoundaryTag::Interior), 1);
    }

    #[test]
    fn every_element_references_valid_ccw_nodes() {
        let m = build_unit_square_mesh(5, ElemKind::P1Tri, None, TagConvention::Poisson).unwrap();
        for elem in m.elements() {
            for &v in elem {
                assert!(v < m.n_nodes());
            }
        }
    }

    #[test]
    fn hole_masks_elements_and_retags_rim() {
        let hole = HoleSpec {
            center: [0.5, 0.5],
            semi_axes: [0.3, 0.25],
        };
        let m = build_unit_square_mesh(8, ElemKind::Q1Quad, Some(hole), TagConvention::Elasticity)
            .unwrap();
        let removed = m.hole_mask.as_ref().unwrap().len();
        assert!(removed > 0);
        assert_eq!(m.n_elems() + removed, 64);
        // Rim nodes exist and are tagged free-boundary.
        assert!(m.boundary_tags.contains(&BoundaryTag::GammaOther));
        // No node inside the hole survives.
        for p in &m.nodes {
            let dx = (p[0] - 0.5) / 0.3;
            let dy = (p[1] - 0.5) / 0.25;
            // Nodes on the rim may sit inside the ellipse but must belong to
            // a kept element; just check nothing is deep inside.
            assert!(dx * dx + dy * dy > 0.3, "orphan node at {p:?}");
        }
    }

    #[test]
    fn hole_covering_everything_is_rejected() {
        let hole = HoleSpec {
            center: [0.5, 0.5],
            semi_axes: [0.49, 0.49],
        };
        // A 2x2 grid has all four centroids inside this ellipse.
        assert!(matches!(
            build_unit_square_mesh(2, ElemKind::Q1Quad, Some(hole), TagConvention::Elasticity),
            Err(Error::InvalidMesh(_))
        ));
    }

    #[test]
    fn summary_reports_counts() {
        let m = build_unit_square_mesh(32, ElemKind::P1Tri, None, TagConvention::Poisson).unwrap();
        let s = m.summary();
        assert!(s.contains("nodes: 1089"));
        assert!(s.contains("elements: 2048"));
    }
}
