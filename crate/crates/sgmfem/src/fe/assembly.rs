//! Assembly of the per-term deterministic matrices.
//!
//! For the coefficient expansion `E = sum_k e_k y_k` (with `y_0 = 1`) the
//! Galerkin system needs, per term k: the strain stiffness
//! `[A_k]_{ij} = alpha int e_k eps(phi_i) : eps(phi_j)` and the weighted
//! pressure mass `[M_k]_{st} = int e_k phi^p_s phi^p_t`, together with the
//! gradient stiffness `[Abar]_{ij} = alpha int grad phi_i : grad phi_j`,
//! the divergence coupling `[B]_{sj} = -int phi^p_s div phi_j`, the plain
//! pressure mass `M`, and the load `f_j = int f . phi_j`. Displacement
//! rows/columns are eliminated symmetrically at the Dirichlet nodes.

use crate::linalg::{CooBuilder, CsrMatrix};
use crate::quadrature::SquareRule;
use crate::{Error, MaterialConstants};

use super::coefficient::CoefficientField;
use super::shape;
use super::{FeSpacePair, PressureSpace};

/// Q2 shape values and reference gradients tabulated at the points of a
/// tensor Gauss rule.
#[derive(Debug, Clone)]
pub struct Q2Tab {
    pub rule: SquareRule,
    pub points: Vec<(f64, f64, f64)>,
    pub val: Vec<[f64; 9]>,
    pub dxi: Vec<[f64; 9]>,
    pub deta: Vec<[f64; 9]>,
}

impl Q2Tab {
    pub fn new(points_per_direction: usize) -> Self {
        let rule = SquareRule::new(points_per_direction);
        let points: Vec<_> = rule.reference_points().collect();
        Self::at_points(rule, points)
    }

    /// Tabulate at explicit reference points (used for evaluating parent
    /// shapes at child quadrature points).
    pub fn at_points(rule: SquareRule, points: Vec<(f64, f64, f64)>) -> Self {
        let mut val = Vec::with_capacity(points.len());
        let mut dxi = Vec::with_capacity(points.len());
        let mut deta = Vec::with_capacity(points.len());
        for &(xi, eta, _) in &points {
            let (v, dx, dy) = shape::q2_at(xi, eta);
            val.push(v);
            dxi.push(dx);
            deta.push(dy);
        }
        Self { rule, points, val, dxi, deta }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Strain contraction eps(phi_i e_ci) : eps(phi_j e_cj) from the scalar
/// physical gradients.
#[inline]
pub(crate) fn strain_term(ci: usize, cj: usize, gi: [f64; 2], gj: [f64; 2]) -> f64 {
    match (ci, cj) {
        (0, 0) => gi[0] * gj[0] + 0.5 * gi[1] * gj[1],
        (0, 1) => 0.5 * gi[1] * gj[0],
        (1, 0) => 0.5 * gi[0] * gj[1],
        _ => gi[1] * gj[1] + 0.5 * gi[0] * gj[0],
    }
}

/// All per-term matrices for one space pair and coefficient expansion.
#[derive(Debug, Clone)]
pub struct DeterministicBlocks {
    pub spaces: FeSpacePair,
    pub constants: MaterialConstants,
    pub coeff: CoefficientField,
    /// A_k, k = 0..=M: alpha int e_k eps:eps on free displacement dofs.
    pub strain: Vec<CsrMatrix>,
    /// Abar: alpha int grad:grad.
    pub grad: CsrMatrix,
    /// B: n_p x n_u, -int phi^p div phi.
    pub div: CsrMatrix,
    /// M_k, k = 0..=M: int e_k phi^p phi^p.
    pub mass_weighted: Vec<CsrMatrix>,
    /// Plain pressure mass.
    pub mass: CsrMatrix,
    /// Load vector int f . phi on free dofs.
    pub load: Vec<f64>,
}

/// Assemble with the default 3x3 Gauss rule.
pub fn assemble_blocks(
    spaces: &FeSpacePair,
    coeff: &CoefficientField,
    nu: f64,
    body_force: impl Fn(f64, f64) -> [f64; 2],
) -> Result<DeterministicBlocks, Error> {
    assemble_blocks_with_rule(spaces, coeff, nu, body_force, 3)
}

/// Assemble with an explicit tensor Gauss rule (5 enables over-integration
/// for the quadrature oracles).
pub fn assemble_blocks_with_rule(
    spaces: &FeSpacePair,
    coeff: &CoefficientField,
    nu: f64,
    body_force: impl Fn(f64, f64) -> [f64; 2],
    points_per_direction: usize,
) -> Result<DeterministicBlocks, Error> {
    let constants = MaterialConstants::new(nu)?;
    let alpha = constants.alpha;
    let n_terms = coeff.truncation() + 1;
    let tab = Q2Tab::new(points_per_direction);
    let mesh = *spaces.mesh();
    let h = mesh.h();
    let jac = 0.25 * h * h;
    let grad_scale = 2.0 / h;
    let n_u = spaces.n_u();
    let n_p = spaces.n_p();
    let npress = match spaces.pressure_space() {
        PressureSpace::PMinusOne => 3,
        PressureSpace::Q1 => 4,
    };

    let nnz_u = 18 * 18 * mesh.num_elements();
    let mut strain_coo: Vec<CooBuilder> = (0..n_terms)
        .map(|_| CooBuilder::with_capacity(n_u, n_u, nnz_u))
        .collect();
    let mut grad_coo = CooBuilder::with_capacity(n_u, n_u, nnz_u);
    let mut div_coo = CooBuilder::with_capacity(n_p, n_u, npress * 18 * mesh.num_elements());
    let mut mass_coo: Vec<CooBuilder> = (0..n_terms)
        .map(|_| CooBuilder::with_capacity(n_p, n_p, npress * npress * mesh.num_elements()))
        .collect();
    let mut plain_mass_coo =
        CooBuilder::with_capacity(n_p, n_p, npress * npress * mesh.num_elements());
    let mut load = vec![0.0; n_u];

    let mut ek = vec![0.0; n_terms];
    for e in 0..mesh.num_elements() {
        let nodes = spaces.element_nodes(e);
        let pdofs = spaces.element_pressure_dofs(e);
        let [x0, y0] = mesh.element_origin(e);
        // free vector dofs of the element, None when constrained
        let mut udofs = [[None; 2]; 9];
        for (l, &node) in nodes.iter().enumerate() {
            for c in 0..2 {
                udofs[l][c] = spaces.free_dof(node, c);
            }
        }
        for (q, &(xi, eta, wref)) in tab.points.iter().enumerate() {
            let x = x0 + 0.5 * (xi + 1.0) * h;
            let y = y0 + 0.5 * (eta + 1.0) * h;
            let w = wref * jac;
            for (k, v) in ek.iter_mut().enumerate() {
                *v = coeff.eval_unchecked(k, x, y);
            }
            let pv = spaces.pressure_basis_at(e, x, y);
            let fval = body_force(x, y);
            // physical gradients of the 9 scalar shapes
            let mut g = [[0.0f64; 2]; 9];
            for l in 0..9 {
                g[l][0] = tab.dxi[q][l] * grad_scale;
                g[l][1] = tab.deta[q][l] * grad_scale;
            }
            for li in 0..9 {
                for ci in 0..2 {
                    let Some(i) = udofs[li][ci] else { continue };
                    load[i] += w * fval[ci] * tab.val[q][li];
                    for lj in 0..9 {
                        for cj in 0..2 {
                            let Some(j) = udofs[lj][cj] else { continue };
                            let st = strain_term(ci, cj, g[li], g[lj]);
                            for (k, coo) in strain_coo.iter_mut().enumerate() {
                                coo.push(i, j, w * alpha * ek[k] * st);
                            }
                            if ci == cj {
                                let gg = g[li][0] * g[lj][0] + g[li][1] * g[lj][1];
                                grad_coo.push(i, j, w * alpha * gg);
                            }
                        }
                    }
                    for (s, &ps) in pdofs.iter().enumerate() {
                        div_coo.push(ps, i, -w * pv[s] * g[li][ci]);
                    }
                }
            }
            for (s, &ps) in pdofs.iter().enumerate() {
                for (t, &pt) in pdofs.iter().enumerate() {
                    let m = w * pv[s] * pv[t];
                    for (k, coo) in mass_coo.iter_mut().enumerate() {
                        coo.push(ps, pt, ek[k] * m);
                    }
                    plain_mass_coo.push(ps, pt, m);
                }
            }
        }
    }

    Ok(DeterministicBlocks {
        spaces: spaces.clone(),
        constants,
        coeff: coeff.clone(),
        strain: strain_coo.into_iter().map(CooBuilder::build).collect(),
        grad: grad_coo.build(),
        div: div_coo.build(),
        mass_weighted: mass_coo.into_iter().map(CooBuilder::build).collect(),
        mass: plain_mass_coo.build(),
        load,
    })
}

impl DeterministicBlocks {
    /// Number of coefficient terms M (mean excluded).
    pub fn truncation(&self) -> usize {
        self.strain.len() - 1
    }

    /// Extends the per-term matrices after the coefficient truncation grew;
    /// cheaper than reassembling the k-independent blocks.
    pub fn extend_truncation(
        &mut self,
        coeff: &CoefficientField,
        points_per_direction: usize,
    ) -> Result<(), Error> {
        let old = self.truncation();
        let new = coeff.truncation();
        if new <= old {
            self.coeff = coeff.clone();
            return Ok(());
        }
        let tab = Q2Tab::new(points_per_direction);
        let mesh = *self.spaces.mesh();
        let h = mesh.h();
        let jac = 0.25 * h * h;
        let grad_scale = 2.0 / h;
        let alpha = self.constants.alpha;
        let n_u = self.spaces.n_u();
        let n_p = self.spaces.n_p();
        let n_new = new - old;
        let mut strain_coo: Vec<CooBuilder> =
            (0..n_new).map(|_| CooBuilder::new(n_u, n_u)).collect();
        let mut mass_coo: Vec<CooBuilder> =
            (0..n_new).map(|_| CooBuilder::new(n_p, n_p)).collect();
        let mut ek = vec![0.0; n_new];
        for e in 0..mesh.num_elements() {
            let nodes = self.spaces.element_nodes(e);
            let pdofs = self.spaces.element_pressure_dofs(e);
            let [x0, y0] = mesh.element_origin(e);
            let mut udofs = [[None; 2]; 9];
            for (l, &node) in nodes.iter().enumerate() {
                for c in 0..2 {
                    udofs[l][c] = self.spaces.free_dof(node, c);
                }
            }
            for (q, &(xi, eta, wref)) in tab.points.iter().enumerate() {
                let x = x0 + 0.5 * (xi + 1.0) * h;
                let y = y0 + 0.5 * (eta + 1.0) * h;
                let w = wref * jac;
                for (t, v) in ek.iter_mut().enumerate() {
                    *v = coeff.eval_unchecked(old + 1 + t, x, y);
                }
                let pv = self.spaces.pressure_basis_at(e, x, y);
                let mut g = [[0.0f64; 2]; 9];
                for l in 0..9 {
                    g[l][0] = tab.dxi[q][l] * grad_scale;
                    g[l][1] = tab.deta[q][l] * grad_scale;
                }
                for li in 0..9 {
                    for ci in 0..2 {
                        let Some(i) = udofs[li][ci] else { continue };
                        for lj in 0..9 {
                            for cj in 0..2 {
                                let Some(j) = udofs[lj][cj] else { continue };
                                let st = strain_term(ci, cj, g[li], g[lj]);
                                for (t, coo) in strain_coo.iter_mut().enumerate() {
                                    coo.push(i, j, w * alpha * ek[t] * st);
                                }
                            }
                        }
                    }
                }
                for (s, &ps) in pdofs.iter().enumerate() {
                    for (tt, &pt) in pdofs.iter().enumerate() {
                        let m = w * pv[s] * pv[tt];
                        for (t, coo) in mass_coo.iter_mut().enumerate() {
                            coo.push(ps, pt, ek[t] * m);
                        }
                    }
                }
            }
        }
        self.strain.extend(strain_coo.into_iter().map(CooBuilder::build));
        self.mass_weighted.extend(mass_coo.into_iter().map(CooBuilder::build));
        self.coeff = coeff.clone();
        Ok(())
    }
}
