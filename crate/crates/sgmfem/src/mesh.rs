//! Structured square meshes of the unit square with tagged boundary edges.

use crate::Error;

/// One side of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];
}

/// Boundary-condition tag carried by every boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

/// Which sides carry a homogeneous Neumann condition; all other boundary
/// edges are Dirichlet. The Dirichlet part must be nonempty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BcConfig {
    neumann: [bool; 4],
}

impl BcConfig {
    pub fn all_dirichlet() -> Self {
        Self { neumann: [false; 4] }
    }

    pub fn with_neumann(sides: &[Side]) -> Result<Self, Error> {
        let mut neumann = [false; 4];
        for s in sides {
            neumann[Self::slot(*s)] = true;
        }
        if neumann.iter().all(|&n| n) {
            return Err(Error::NoDirichletBoundary);
        }
        Ok(Self { neumann })
    }

    fn slot(side: Side) -> usize {
        match side {
            Side::Left => 0,
            Side::Right => 1,
            Side::Bottom => 2,
            Side::Top => 3,
        }
    }

    pub fn tag(&self, side: Side) -> BoundaryTag {
        if self.neumann[Self::slot(side)] {
            BoundaryTag::Neumann
        } else {
            BoundaryTag::Dirichlet
        }
    }

    pub fn is_neumann(&self, side: Side) -> bool {
        self.neumann[Self::slot(side)]
    }
}

/// Uniform `2^level x 2^level` grid of square elements on `(0,1)^2`.
///
/// Elements and vertices are numbered row-major, x fastest. Boundary tags
/// live on edges; a boundary vertex shared by a Dirichlet and a Neumann
/// edge counts as constrained (Dirichlet wins).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mesh {
    level: u32,
    bc: BcConfig,
}

/// Identifies one boundary edge: the side it lies on and its position
/// along that side (0-based, counting in the +x or +y direction).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub side: Side,
    pub position: usize,
    pub tag: BoundaryTag,
}

/// Builds the uniform square mesh at the given refinement level.
pub fn build_unit_square(level: u32, bc: BcConfig) -> Mesh {
    Mesh { level, bc }
}

/// Uniform refinement: each element splits into four congruent children;
/// boundary tags are inherited from the parent edge's side.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    Mesh { level: mesh.level + 1, bc: mesh.bc }
}

impl Mesh {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn bc(&self) -> BcConfig {
        self.bc
    }

    /// Elements per side.
    pub fn cells_per_side(&self) -> usize {
        1 << self.level
    }

    /// Element width h = 2^-level.
    pub fn h(&self) -> f64 {
        1.0 / self.cells_per_side() as f64
    }

    pub fn num_elements(&self) -> usize {
        let n = self.cells_per_side();
        n * n
    }

    pub fn num_vertices(&self) -> usize {
        let n = self.cells_per_side() + 1;
        n * n
    }

    /// Coordinates of vertex (i, j) on the (n+1) x (n+1) lattice.
    pub fn vertex(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.h();
        [i as f64 * h, j as f64 * h]
    }

    /// Grid coordinates (ex, ey) of element `e`.
    pub fn element_coords(&self, e: usize) -> (usize, usize) {
        let n = self.cells_per_side();
        (e % n, e / n)
    }

    /// Lower-left corner of element `e`.
    pub fn element_origin(&self, e: usize) -> [f64; 2] {
        let (ex, ey) = self.element_coords(e);
        let h = self.h();
        [ex as f64 * h, ey as f64 * h]
    }

    /// Center of element `e`.
    pub fn element_center(&self, e: usize) -> [f64; 2] {
        let [x0, y0] = self.element_origin(e);
        let h = self.h();
        [x0 + 0.5 * h, y0 + 0.5 * h]
    }

    /// All boundary edges with their tags; 4 * 2^level edges in total.
    pub fn boundary_edges(&self) -> Vec<BoundaryEdge> {
        let n = self.cells_per_side();
        let mut out = Vec::with_capacity(4 * n);
        for side in Side::ALL {
            for position in 0..n {
                out.push(BoundaryEdge { side, position, tag: self.bc.tag(side) });
            }
        }
        out
    }

    /// Dirichlet test for a point of the Q2 node lattice ((2n+1) per side).
    /// `i`, `j` index the half-step lattice.
    pub fn lattice_node_is_dirichlet(&self, i: usize, j: usize) -> bool {
        let m = 2 * self.cells_per_side();
        let on = |side: Side| -> bool {
            match side {
                Side::Left => i == 0,
                Side::Right => i == m,
                Side::Bottom => j == 0,
                Side::Top => j == m,
            }
        };
        Side::ALL
            .iter()
            .any(|&s| on(s) && self.bc.tag(s) == BoundaryTag::Dirichlet)
    }

    pub fn lattice_node_is_boundary(&self, i: usize, j: usize) -> bool {
        let m = 2 * self.cells_per_side();
        i == 0 || j == 0 || i == m || j == m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_zero_single_cell() {
        let m = build_unit_square(0, BcConfig::all_dirichlet());
        assert_eq!(m.num_elements(), 1);
        assert_eq!(m.num_vertices(), 4);
        let edges = m.boundary_edges();
        assert_eq!(edges.len(), 4);
        assert!(edges.iter().all(|e| e.tag == BoundaryTag::Dirichlet));
    }

    #[test]
    fn level_three_counts() {
        let m = build_unit_square(3, BcConfig::all_dirichlet());
        assert_eq!(m.num_elements(), 64);
        assert_eq!(m.num_vertices(), 81);
    }

    #[test]
    fn neumann_side_tags() {
        let m = build_unit_square(2, BcConfig::with_neumann(&[Side::Right]).unwrap());
        let edges = m.boundary_edges();
        assert_eq!(edges.len(), 16);
        let neumann: Vec<_> = edges.iter().filter(|e| e.tag == BoundaryTag::Neumann).collect();
        assert_eq!(neumann.len(), 4);
        assert!(neumann.iter().all(|e| e.side == Side::Right));
    }

    #[test]
    fn refinement_quadruples_elements_and_keeps_tags() {
        let m = build_unit_square(1, BcConfig::with_neumann(&[Side::Right]).unwrap());
        let r = refine_uniform(&m);
        assert_eq!(r.level(), 2);
        assert_eq!(r.num_elements(), 4 * m.num_elements());
        let count = r
            .boundary_edges()
            .iter()
            .filter(|e| e.tag == BoundaryTag::Neumann && e.side == Side::Right)
            .count();
        assert_eq!(count, 4);

        let m64 = build_unit_square(3, BcConfig::all_dirichlet());
        assert_eq!(refine_uniform(&m64).num_elements(), 256);
    }

    #[test]
    fn all_neumann_rejected() {
        assert!(BcConfig::with_neumann(&Side::ALL).is_err());
    }

    #[test]
    fn element_areas_sum_to_one() {
        for level in 0..6 {
            let m = build_unit_square(level, BcConfig::all_dirichlet());
            let area: f64 = (0..m.num_elements()).map(|_| m.h() * m.h()).sum();
            assert!((area - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn corner_nodes_dirichlet_wins() {
        // Right side Neumann: the corner (1,0) touches bottom (Dirichlet)
        // and right (Neumann) edges and must be constrained.
        let m = build_unit_square(1, BcConfig::with_neumann(&[Side::Right]).unwrap());
        let mm = 2 * m.cells_per_side();
        assert!(m.lattice_node_is_dirichlet(mm, 0));
        // A mid-side node on the right edge is not constrained.
        assert!(!m.lattice_node_is_dirichlet(mm, 1));
        assert!(m.lattice_node_is_boundary(mm, 1));
    }
}
