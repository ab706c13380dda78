//! Deterministic finite element spaces, assembly, and detail spaces.
//!
//! The displacement space is vector-valued continuous Q2 on the square
//! grid; the pressure space is either P-1 (discontinuous linear in the
//! element-centered frame {1, x - x_K, y - y_K}) or continuous bilinear
//! Q1. Both pairs are inf-sup stable on uniform square meshes.

pub mod assembly;
pub mod cbs;
pub mod coefficient;
pub mod detail;
pub mod shape;

pub use assembly::{assemble_blocks, assemble_blocks_with_rule, DeterministicBlocks};
pub use cbs::estimate_cbs_constants;
pub use coefficient::{cosine_frequencies, CoefficientField};
pub use detail::{assemble_detail_blocks, build_detail_space, DetailBlocks, DetailOption, DetailSpace};

use crate::mesh::Mesh;

/// Pressure discretisation choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PressureSpace {
    /// Discontinuous linear, 3 dofs per element.
    PMinusOne,
    /// Continuous bilinear, one dof per vertex.
    Q1,
}

/// The Q2 displacement / pressure pair on one mesh, with Dirichlet
/// elimination baked into the displacement dof numbering.
#[derive(Debug, Clone)]
pub struct FeSpacePair {
    mesh: Mesh,
    pressure: PressureSpace,
    /// (2n+1)^2 scalar lattice nodes; `free[2*node + comp]` maps a vector
    /// dof to its reduced index, None for constrained dofs.
    free: Vec<Option<usize>>,
    n_u: usize,
    n_p: usize,
}

impl FeSpacePair {
    pub fn new(mesh: Mesh, pressure: PressureSpace) -> Self {
        let n = mesh.cells_per_side();
        let m = 2 * n + 1;
        let mut free = vec![None; 2 * m * m];
        let mut n_u = 0;
        for j in 0..m {
            for i in 0..m {
                if !mesh.lattice_node_is_dirichlet(i, j) {
                    let node = i + m * j;
                    for comp in 0..2 {
                        free[2 * node + comp] = Some(n_u);
                        n_u += 1;
                    }
                }
            }
        }
        let n_p = match pressure {
            PressureSpace::PMinusOne => 3 * n * n,
            PressureSpace::Q1 => (n + 1) * (n + 1),
        };
        Self { mesh, pressure, free, n_u, n_p }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn pressure_space(&self) -> PressureSpace {
        self.pressure
    }

    /// Displacement dofs after Dirichlet elimination.
    pub fn n_u(&self) -> usize {
        self.n_u
    }

    /// Pressure dofs (one field).
    pub fn n_p(&self) -> usize {
        self.n_p
    }

    /// Scalar lattice points per side (2n + 1).
    pub fn lattice_size(&self) -> usize {
        2 * self.mesh.cells_per_side() + 1
    }

    pub fn num_nodes(&self) -> usize {
        let m = self.lattice_size();
        m * m
    }

    /// Reduced index of a vector dof, None when constrained.
    pub fn free_dof(&self, node: usize, comp: usize) -> Option<usize> {
        self.free[2 * node + comp]
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let m = self.lattice_size();
        let h2 = 0.5 * self.mesh.h();
        [(node % m) as f64 * h2, (node / m) as f64 * h2]
    }

    /// The nine lattice nodes of element `e` in local order (x fastest).
    pub fn element_nodes(&self, e: usize) -> [usize; 9] {
        let m = self.lattice_size();
        let (ex, ey) = self.mesh.element_coords(e);
        let (i0, j0) = (2 * ex, 2 * ey);
        let mut nodes = [0usize; 9];
        for b in 0..3 {
            for a in 0..3 {
                nodes[a + 3 * b] = (i0 + a) + m * (j0 + b);
            }
        }
        nodes
    }

    /// Pressure dofs of element `e` (3 for P-1, 4 vertex dofs for Q1).
    pub fn element_pressure_dofs(&self, e: usize) -> Vec<usize> {
        match self.pressure {
            PressureSpace::PMinusOne => vec![3 * e, 3 * e + 1, 3 * e + 2],
            PressureSpace::Q1 => {
                let n = self.mesh.cells_per_side();
                let (ex, ey) = self.mesh.element_coords(e);
                let v = |i: usize, j: usize| i + (n + 1) * j;
                vec![v(ex, ey), v(ex + 1, ey), v(ex, ey + 1), v(ex + 1, ey + 1)]
            }
        }
    }

    /// Values of the element pressure basis at a physical point of element `e`.
    pub fn pressure_basis_at(&self, e: usize, x: f64, y: f64) -> Vec<f64> {
        match self.pressure {
            PressureSpace::PMinusOne => {
                let [xc, yc] = self.mesh.element_center(e);
                vec![1.0, x - xc, y - yc]
            }
            PressureSpace::Q1 => {
                let [x0, y0] = self.mesh.element_origin(e);
                let h = self.mesh.h();
                let xi = 2.0 * (x - x0) / h - 1.0;
                let eta = 2.0 * (y - y0) / h - 1.0;
                shape::q1_at(xi, eta).to_vec()
            }
        }
    }

    /// Expand a reduced displacement vector to full nodal storage
    /// (constrained entries zero).
    pub fn scatter_to_full(&self, reduced: &[f64]) -> Vec<f64> {
        debug_assert_eq!(reduced.len(), self.n_u);
        let mut full = vec![0.0; 2 * self.num_nodes()];
        for (slot, &dst) in self.free.iter().enumerate() {
            if let Some(r) = dst {
                full[slot] = reduced[r];
            }
        }
        full
    }

    /// Restrict a full nodal vector to the free dofs.
    pub fn restrict_to_free(&self, full: &[f64]) -> Vec<f64> {
        debug_assert_eq!(full.len(), 2 * self.num_nodes());
        let mut reduced = vec![0.0; self.n_u];
        for (slot, &dst) in self.free.iter().enumerate() {
            if let Some(r) = dst {
                reduced[r] = full[slot];
            }
        }
        reduced
    }

    /// Nodal interpolant of a vector field, full storage.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
        let mut full = vec![0.0; 2 * self.num_nodes()];
        for node in 0..self.num_nodes() {
            let [x, y] = self.node_coords(node);
            let v = f(x, y);
            full[2 * node] = v[0];
            full[2 * node + 1] = v[1];
        }
        full
    }
}
