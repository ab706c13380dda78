//! A posteriori error estimation.
//!
//! The total estimate combines three parts:
//!
//! * `eta_1`, `eta_3`: norms of Riesz representers of the displacement and
//!   scaled-pressure residuals, computed on the detail spaces (spatial
//!   part, per solution index) and on the coarse spaces tensorised with
//!   the detail index set (parametric part, per detail index). The
//!   weighted inner products decouple per chaos index, so each block is an
//!   independent SPD solve against a shared factorization or Gram.
//! * `eta_2`: the pressure residual is an explicit function of the
//!   discrete solution, `e_0^p = (1/alpha + 1/(alpha beta))^-1
//!   (div u + p~/(alpha beta))`, and its norm is evaluated directly by
//!   element quadrature.
//!
//! `eta^2 = eta_1^2 + eta_2^2 + eta_3^2`, and the same pieces regroup into
//! the error-reduction proxies used by the adaptive loop: the spatial
//! proxy (all three detail-space estimators) and the parametric proxy
//! (per-index contributions over the detail index set).

use serde::Serialize;

use crate::chaos::{coupling_matrix, CouplingMatrix, IndexSet, MultiIndex};
use crate::fe::assembly::Q2Tab;
use crate::fe::{DetailBlocks, DetailSpace, DeterministicBlocks};
use crate::linalg::{dot, jacobi_pcg, BandedCholesky};
use crate::system::{MassSolver, SgSolution};
use crate::{Error, MaterialConstants};

/// Relative tolerance of the inner PCG used for the detail-space solves.
const DETAIL_SOLVE_TOL: f64 = 1e-12;
const DETAIL_SOLVE_MAXIT: usize = 4000;

/// Shared factorizations for the parametric estimator solves: the
/// gradient stiffness (a0-bar inner product) and the pressure mass.
pub struct EstimatorFactors {
    pub grad_chol: BandedCholesky,
    pub mass: MassSolver,
}

impl EstimatorFactors {
    pub fn new(blocks: &DeterministicBlocks) -> Result<Self, Error> {
        Ok(Self {
            grad_chol: BandedCholesky::new(&blocks.grad)?,
            mass: MassSolver::new(&blocks.mass, blocks.spaces.pressure_space())?,
        })
    }
}

/// Assembles residual right-hand sides against the detail and coarse
/// bases for one solved SG system.
pub struct ResidualAssembler<'a> {
    pub blocks: &'a DeterministicBlocks,
    pub detail: &'a DetailSpace,
    pub detail_blocks: &'a DetailBlocks,
    pub factors: &'a EstimatorFactors,
    pub sol: &'a SgSolution,
    couplings: Vec<CouplingMatrix>,
}

impl<'a> ResidualAssembler<'a> {
    pub fn new(
        blocks: &'a DeterministicBlocks,
        detail: &'a DetailSpace,
        detail_blocks: &'a DetailBlocks,
        factors: &'a EstimatorFactors,
        sol: &'a SgSolution,
    ) -> Self {
        let couplings = (0..=blocks.truncation() as u32)
            .map(|k| coupling_matrix(k, &sol.lambda, &sol.lambda))
            .collect();
        Self { blocks, detail, detail_blocks, factors, sol, couplings }
    }

    fn constants(&self) -> MaterialConstants {
        self.blocks.constants
    }

    /// Residual functional of the first equation on the displacement
    /// detail basis, for solution block `b`:
    /// `R^u(v~ psi_b) = delta_{b,0} f~ - sum_k G_k[b,b'] a_k(u^b', v~)
    ///  - b(v~, p^b)`.
    pub fn detail_u_rhs(&self, b: usize) -> Vec<f64> {
        let alpha = self.constants().alpha;
        let mut r = vec![0.0; self.detail.n_det_u()];
        if self.sol.lambda.get(b).is_zero() {
            r.copy_from_slice(&self.detail_blocks.load);
        }
        for (k, g) in self.couplings.iter().enumerate() {
            let s_k = &self.detail_blocks.strain_cross[k];
            if s_k.nnz() == 0 {
                continue;
            }
            for &(a, bp, val) in &g.triplets {
                if a == b {
                    s_k.axpy(-alpha * val, &self.sol.u[bp], &mut r);
                }
            }
        }
        self.detail_blocks
            .div_coarse_p
            .axpy_transpose(-1.0, &self.sol.p[b], &mut r);
        r
    }

    /// Residual of the second equation on the pressure detail basis:
    /// `R^p(q~ psi_b) = -b(u^b, q~) + c(p~^b, q~)`.
    pub fn detail_p_rhs(&self, b: usize) -> Vec<f64> {
        let w = self.constants().dbar_weight();
        let mut r = vec![0.0; self.detail.n_det_p()];
        self.detail_blocks.div_detail_p.axpy(-1.0, &self.sol.u[b], &mut r);
        self.detail_blocks.cross_mass.axpy(w, &self.sol.pt[b], &mut r);
        r
    }

    /// Residual of the third equation on the pressure detail basis:
    /// `R^p~(q~ psi_b) = c(p^b, q~) - d(p~, q~ psi_b)`.
    pub fn detail_pt_rhs(&self, b: usize) -> Vec<f64> {
        let w = self.constants().dbar_weight();
        let mut r = vec![0.0; self.detail.n_det_p()];
        self.detail_blocks.cross_mass.axpy(w, &self.sol.p[b], &mut r);
        for (k, g) in self.couplings.iter().enumerate() {
            let m_k = &self.detail_blocks.cross_mass_weighted[k];
            if m_k.nnz() == 0 {
                continue;
            }
            for &(a, bp, val) in &g.triplets {
                if a == b {
                    m_k.axpy(-w * val, &self.sol.pt[bp], &mut r);
                }
            }
        }
        r
    }

    /// Residual of the first equation on the coarse basis tensorised with
    /// detail index number `q`: only the strain terms couple into Lambda.
    pub fn parametric_u_rhs(&self, g_rows: &[CouplingMatrix], q: usize) -> Vec<f64> {
        let mut r = vec![0.0; self.blocks.spaces.n_u()];
        for (k, g) in g_rows.iter().enumerate() {
            let a_k = &self.blocks.strain[k];
            if a_k.nnz() == 0 {
                continue;
            }
            for &(row, b, val) in &g.triplets {
                if row == q {
                    a_k.axpy(-val, &self.sol.u[b], &mut r);
                }
            }
        }
        r
    }

    /// Residual of the third equation on the coarse pressure basis
    /// tensorised with detail index number `q`.
    pub fn parametric_pt_rhs(&self, g_rows: &[CouplingMatrix], q: usize) -> Vec<f64> {
        let w = self.constants().dbar_weight();
        let mut r = vec![0.0; self.blocks.spaces.n_p()];
        for (k, g) in g_rows.iter().enumerate() {
            let m_k = &self.blocks.mass_weighted[k];
            if m_k.nnz() == 0 {
                continue;
            }
            for &(row, b, val) in &g.triplets {
                if row == q {
                    m_k.axpy(-w * val, &self.sol.pt[b], &mut r);
                }
            }
        }
        r
    }
}

/// Spatial estimator solves: one detail-space problem per solution index
/// and field.
#[derive(Debug, Clone)]
pub struct SpatialEstimates {
    /// |e~^u|^2 in the a0-bar norm.
    pub u_norm_sq: f64,
    /// |e~^p|^2 in the c-bar norm (third spatial estimator).
    pub p_norm_sq: f64,
    /// |e~^p~|^2 in the d0-bar norm.
    pub pt_norm_sq: f64,
    /// Detail coefficients per solution index.
    pub u_coeff: Vec<Vec<f64>>,
    pub p_coeff: Vec<Vec<f64>>,
    pub pt_coeff: Vec<Vec<f64>>,
}

/// Parametric estimator solves: one coarse-space problem per detail index.
#[derive(Debug, Clone)]
pub struct ParametricEstimates {
    pub entries: Vec<ParametricEntry>,
}

#[derive(Debug, Clone)]
pub struct ParametricEntry {
    pub index: MultiIndex,
    pub u_norm_sq: f64,
    pub pt_norm_sq: f64,
    pub u_coeff: Vec<f64>,
    pub pt_coeff: Vec<f64>,
}

impl ParametricEntry {
    /// eta_{h,alpha} = sqrt(|e^u_alpha|^2 + |e^p~_alpha|^2).
    pub fn eta(&self) -> f64 {
        (self.u_norm_sq + self.pt_norm_sq).sqrt()
    }
}

impl ParametricEstimates {
    pub fn eta_sq(&self) -> f64 {
        self.entries.iter().map(|e| e.u_norm_sq + e.pt_norm_sq).sum()
    }

    /// Same quantity through the Gram matrices of the assembled
    /// representers; equals `eta_sq` up to solver tolerances.
    pub fn eta_sq_by_gram(&self, blocks: &DeterministicBlocks) -> f64 {
        let w = blocks.constants.dbar_weight();
        self.entries
            .iter()
            .map(|e| {
                blocks.grad.bilinear(&e.u_coeff, &e.u_coeff)
                    + w * blocks.mass.bilinear(&e.pt_coeff, &e.pt_coeff)
            })
            .sum()
    }
}

/// Solves the three decoupled detail-space problems per solution index.
pub fn solve_spatial_estimators(
    assembler: &ResidualAssembler<'_>,
) -> Result<SpatialEstimates, Error> {
    let c = assembler.constants();
    let alpha = c.alpha;
    let cw = c.cbar_weight();
    let dw = c.dbar_weight();
    let n_blocks = assembler.sol.lambda.len();
    let mut est = SpatialEstimates {
        u_norm_sq: 0.0,
        p_norm_sq: 0.0,
        pt_norm_sq: 0.0,
        u_coeff: Vec::with_capacity(n_blocks),
        p_coeff: Vec::with_capacity(n_blocks),
        pt_coeff: Vec::with_capacity(n_blocks),
    };
    for b in 0..n_blocks {
        // a0-bar problem: (alpha * G~) e = r
        let r_u = assembler.detail_u_rhs(b);
        let scaled: Vec<f64> = r_u.iter().map(|v| v / alpha).collect();
        let e_u = jacobi_pcg(
            &assembler.detail_blocks.grad_gram,
            &scaled,
            DETAIL_SOLVE_TOL,
            DETAIL_SOLVE_MAXIT,
        )?;
        est.u_norm_sq += dot(&e_u, &r_u);
        est.u_coeff.push(e_u);

        // c-bar problem: (cw * M~) e = r
        let r_p = assembler.detail_p_rhs(b);
        let scaled: Vec<f64> = r_p.iter().map(|v| v / cw).collect();
        let e_p = jacobi_pcg(
            &assembler.detail_blocks.mass_gram,
            &scaled,
            DETAIL_SOLVE_TOL,
            DETAIL_SOLVE_MAXIT,
        )?;
        est.p_norm_sq += dot(&e_p, &r_p);
        est.p_coeff.push(e_p);

        // d0-bar problem: (dw * M~) e = r
        let r_pt = assembler.detail_pt_rhs(b);
        let scaled: Vec<f64> = r_pt.iter().map(|v| v / dw).collect();
        let e_pt = jacobi_pcg(
            &assembler.detail_blocks.mass_gram,
            &scaled,
            DETAIL_SOLVE_TOL,
            DETAIL_SOLVE_MAXIT,
        )?;
        est.pt_norm_sq += dot(&e_pt, &r_pt);
        est.pt_coeff.push(e_pt);
    }
    Ok(est)
}

/// Solves the coarse-space Riesz problems for every index of the detail
/// index set; the gradient factorization and the mass solver are reused
/// across indices.
pub fn solve_parametric_estimators(
    assembler: &ResidualAssembler<'_>,
    detail_set: &IndexSet,
) -> Result<ParametricEstimates, Error> {
    for idx in detail_set.iter() {
        if assembler.sol.lambda.contains(idx) {
            return Err(Error::IndexInSolutionSet(idx.to_string()));
        }
    }
    let c = assembler.constants();
    let dw = c.dbar_weight();
    let max_param = detail_set
        .max_active_param()
        .max(assembler.sol.lambda.max_active_param())
        .min(assembler.blocks.truncation() as u32);
    let g_rows: Vec<CouplingMatrix> = (0..=max_param)
        .map(|k| coupling_matrix(k, detail_set, &assembler.sol.lambda))
        .collect();
    let mut entries = Vec::with_capacity(detail_set.len());
    for (q, idx) in detail_set.iter().enumerate() {
        let r_u = assembler.parametric_u_rhs(&g_rows, q);
        let e_u = assembler.factors.grad_chol.solve(&r_u);
        let u_norm_sq = dot(&e_u, &r_u);

        let r_pt = assembler.parametric_pt_rhs(&g_rows, q);
        let mut e_pt = r_pt.clone();
        assembler.factors.mass.solve_in_place(&mut e_pt);
        e_pt.iter_mut().for_each(|v| *v /= dw);
        let pt_norm_sq = dot(&e_pt, &r_pt);

        entries.push(ParametricEntry {
            index: idx.clone(),
            u_norm_sq,
            pt_norm_sq,
            u_coeff: e_u,
            pt_coeff: e_pt,
        });
    }
    Ok(ParametricEstimates { entries })
}

/// eta_2 with the default 3x3 rule.
pub fn eta2_direct(sol: &SgSolution, blocks: &DeterministicBlocks) -> f64 {
    eta2_direct_with_rule(sol, blocks, 3)
}

/// `eta_2 = |e_0^p|_cbar` with
/// `e_0^p = cbar_weight^-1 (div u + dbar_weight p~)` evaluated by element
/// quadrature; the squared norm is `cbar_weight^-1 || div u + w p~ ||^2`.
pub fn eta2_direct_with_rule(
    sol: &SgSolution,
    blocks: &DeterministicBlocks,
    points_per_direction: usize,
) -> f64 {
    let spaces = &blocks.spaces;
    let full: Vec<Vec<f64>> = sol.u.iter().map(|u| spaces.scatter_to_full(u)).collect();
    eta2_from_full_fields(blocks, &full, &sol.pt, points_per_direction)
}

/// Same computation on full nodal displacement blocks; test seams build
/// manufactured fields directly.
pub fn eta2_from_full_fields(
    blocks: &DeterministicBlocks,
    u_full: &[Vec<f64>],
    pt: &[Vec<f64>],
    points_per_direction: usize,
) -> f64 {
    let spaces = &blocks.spaces;
    let mesh = spaces.mesh();
    let c = blocks.constants;
    let w = c.dbar_weight();
    let tab = Q2Tab::new(points_per_direction);
    let h = mesh.h();
    let gs = 2.0 / h;
    let jac = 0.25 * h * h;
    let mut acc = 0.0;
    for e in 0..mesh.num_elements() {
        let nodes = spaces.element_nodes(e);
        let pdofs = spaces.element_pressure_dofs(e);
        let [x0, y0] = mesh.element_origin(e);
        for (q, &(xi, eta, wref)) in tab.points.iter().enumerate() {
            let x = x0 + 0.5 * (xi + 1.0) * h;
            let y = y0 + 0.5 * (eta + 1.0) * h;
            let pv = spaces.pressure_basis_at(e, x, y);
            let wq = wref * jac;
            for b in 0..u_full.len() {
                let mut div = 0.0;
                for (l, &node) in nodes.iter().enumerate() {
                    div += u_full[b][2 * node] * tab.dxi[q][l] * gs
                        + u_full[b][2 * node + 1] * tab.deta[q][l] * gs;
                }
                let ptv: f64 = pdofs.iter().zip(&pv).map(|(&s, &phi)| pt[b][s] * phi).sum();
                let val = div + w * ptv;
                acc += wq * val * val;
            }
        }
    }
    (acc / c.cbar_weight()).sqrt()
}

/// Per-index parametric indicator in serialisable form.
#[derive(Debug, Clone, Serialize)]
pub struct ParametricIndicator {
    pub index: String,
    pub eta: f64,
    pub u_part: f64,
    pub pt_part: f64,
}

/// Every estimator quantity of one adaptive step.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub eta: f64,
    /// |e~^u|, |e~^p|, |e~^p~|: the three spatial estimator norms.
    pub spatial_u: f64,
    pub spatial_p: f64,
    pub spatial_pt: f64,
    /// eta_{h*,Lambda}: spatial error-reduction proxy.
    pub eta_spatial_proxy: f64,
    /// eta_{h,Q}: parametric error-reduction proxy.
    pub eta_param_proxy: f64,
    /// delta_h: spatial contribution to eta (uses eta_2, not |e~^p|).
    pub delta_h: f64,
    pub parametric: Vec<ParametricIndicator>,
}

/// Combines the spatial and parametric parts into the total estimate and
/// the error-reduction proxies.
pub fn aggregate(
    spatial: &SpatialEstimates,
    parametric: &ParametricEstimates,
    eta2: f64,
) -> EstimateReport {
    let par_u_sq: f64 = parametric.entries.iter().map(|e| e.u_norm_sq).sum();
    let par_pt_sq: f64 = parametric.entries.iter().map(|e| e.pt_norm_sq).sum();
    let eta1 = (spatial.u_norm_sq + par_u_sq).sqrt();
    let eta3 = (spatial.pt_norm_sq + par_pt_sq).sqrt();
    let eta = (eta1 * eta1 + eta2 * eta2 + eta3 * eta3).sqrt();
    let delta_h = (spatial.u_norm_sq + eta2 * eta2 + spatial.pt_norm_sq).sqrt();
    let eta_spatial_proxy = (spatial.u_norm_sq + spatial.p_norm_sq + spatial.pt_norm_sq).sqrt();
    let eta_param_proxy = parametric.eta_sq().sqrt();
    EstimateReport {
        eta1,
        eta2,
        eta3,
        eta,
        spatial_u: spatial.u_norm_sq.sqrt(),
        spatial_p: spatial.p_norm_sq.sqrt(),
        spatial_pt: spatial.pt_norm_sq.sqrt(),
        eta_spatial_proxy,
        eta_param_proxy,
        delta_h,
        parametric: parametric
            .entries
            .iter()
            .map(|e| ParametricIndicator {
                index: e.index.to_string(),
                eta: e.eta(),
                u_part: e.u_norm_sq.sqrt(),
                pt_part: e.pt_norm_sq.sqrt(),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::detail_index_set;
    use crate::fe::{
        assemble_blocks, assemble_detail_blocks, build_detail_space, CoefficientField,
        DetailOption, FeSpacePair, PressureSpace,
    };
    use crate::mesh::{build_unit_square, BcConfig, Side};
    use crate::system::{build_operator, solve_minres};

    struct Setup {
        blocks: DeterministicBlocks,
        detail: DetailSpace,
        detail_blocks: DetailBlocks,
        factors: EstimatorFactors,
        sol: SgSolution,
    }

    fn solve_problem(
        level: u32,
        nu: f64,
        e1: f64,
        lambda: IndexSet,
        option: DetailOption,
        force: impl Fn(f64, f64) -> [f64; 2] + Copy,
    ) -> Setup {
        let mesh = build_unit_square(level, BcConfig::all_dirichlet());
        let spaces = FeSpacePair::new(mesh, PressureSpace::PMinusOne);
        let coeff = CoefficientField::affine_scalar(1.0, e1).unwrap();
        let blocks = assemble_blocks(&spaces, &coeff, nu, force).unwrap();
        let detail = build_detail_space(&spaces, option);
        let detail_blocks = assemble_detail_blocks(&spaces, &detail, &coeff, force).unwrap();
        let factors = EstimatorFactors::new(&blocks).unwrap();
        let op = build_operator(&blocks, &lambda);
        let (sol, _) = solve_minres(&op, &op.rhs(), 1e-11, 800).unwrap();
        Setup { blocks, detail, detail_blocks, factors, sol }
    }

    fn tp1_force(alpha: f64) -> impl Fn(f64, f64) -> [f64; 2] + Copy {
        move |x: f64, y: f64| {
            let pi = std::f64::consts::PI;
            [
                -2.0 * alpha
                    * pi.powi(3)
                    * (pi * y).cos()
                    * (pi * y).sin()
                    * (2.0 * (2.0 * pi * x).cos() - 1.0),
                2.0 * alpha
                    * pi.powi(3)
                    * (pi * x).cos()
                    * (pi * x).sin()
                    * (2.0 * (2.0 * pi * y).cos() - 1.0),
            ]
        }
    }

    #[test]
    fn eta2_closed_form_manufactured_field() {
        // div u = 1 with p~ = 0 gives eta_2 = cbar_weight^{-1/2}
        let mesh = build_unit_square(2, BcConfig::all_dirichlet());
        let spaces = FeSpacePair::new(mesh, PressureSpace::PMinusOne);
        let coeff = CoefficientField::affine_scalar(1.0, 0.0).unwrap();
        let blocks = assemble_blocks(&spaces, &coeff, 0.4, |_, _| [0.0, 0.0]).unwrap();
        let full = spaces.interpolate(|x, _| [x, 0.0]);
        let pt = vec![vec![0.0; spaces.n_p()]];
        let eta2 = eta2_from_full_fields(&blocks, &[full], &pt, 3);
        let expect = (1.4f64 + 0.7).powf(-0.5);
        assert!((eta2 - expect).abs() < 1e-13, "eta2 = {eta2}, expect {expect}");
        assert!((expect - 0.6900655593423542).abs() < 1e-15);
    }

    #[test]
    fn eta2_zero_for_zero_fields() {
        let mesh = build_unit_square(1, BcConfig::all_dirichlet());
        let spaces = FeSpacePair::new(mesh, PressureSpace::PMinusOne);
        let coeff = CoefficientField::affine_scalar(1.0, 0.0).unwrap();
        let blocks = assemble_blocks(&spaces, &coeff, 0.3, |_, _| [0.0, 0.0]).unwrap();
        let lambda = IndexSet::mean_only();
        let sol = SgSolution::zero(&lambda, spaces.n_u(), spaces.n_p());
        assert_eq!(eta2_direct(&sol, &blocks), 0.0);
    }

    #[test]
    fn eta2_over_integration_oracle() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mesh = build_unit_square(2, BcConfig::all_dirichlet());
        let spaces = FeSpacePair::new(mesh, PressureSpace::PMinusOne);
        let coeff = CoefficientField::affine_scalar(1.0, 0.1).unwrap();
        let blocks = assemble_blocks(&spaces, &coeff, 0.45, |_, _| [0.0, 0.0]).unwrap();
        let lambda = IndexSet::single_parameter_degree(1, 1);
        let mut sol = SgSolution::zero(&lambda, spaces.n_u(), spaces.n_p());
        for b in 0..2 {
            sol.u[b].iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
            sol.pt[b].iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        }
        let e3 = eta2_direct_with_rule(&sol, &blocks, 3);
        let e5 = eta2_direct_with_rule(&sol, &blocks, 5);
        assert!((e3 - e5).abs() / e5 < 1e-12, "eta2 3x3 {e3} vs 5x5 {e5}");
    }

    #[test]
    fn zero_force_all_estimators_vanish() {
        // the exact solution (0,0,0) lies in every discrete space: the
        // solved system is zero and every estimator must vanish
        let lambda = IndexSet::single_parameter_degree(1, 2);
        let s = solve_problem(2, 0.4, 0.1, lambda, DetailOption::I, |_, _| [0.0, 0.0]);
        let assembler =
            ResidualAssembler::new(&s.blocks, &s.detail, &s.detail_blocks, &s.factors, &s.sol);
        let spatial = solve_spatial_estimators(&assembler).unwrap();
        let q = detail_index_set(&s.sol.lambda);
        let parametric = solve_parametric_estimators(&assembler, &q).unwrap();
        let eta2 = eta2_direct(&s.sol, &s.blocks);
        let report = aggregate(&spatial, &parametric, eta2);
        assert!(report.eta < 1e-10, "eta = {}", report.eta);
        assert!(report.eta_spatial_proxy < 1e-10);
        assert!(report.eta_param_proxy < 1e-10);
    }

    #[test]
    fn deterministic_coefficient_kills_parametric_estimators() {
        let lambda = IndexSet::single_parameter_degree(1, 1);
        let s = solve_problem(2, 0.4, 0.0, lambda, DetailOption::I, tp1_force(1.0 / 1.4));
        let assembler =
            ResidualAssembler::new(&s.blocks, &s.detail, &s.detail_blocks, &s.factors, &s.sol);
        let q = detail_index_set(&s.sol.lambda);
        let parametric = solve_parametric_estimators(&assembler, &q).unwrap();
        let spatial = solve_spatial_estimators(&assembler).unwrap();
        assert!(spatial.u_norm_sq > 0.0);
        for e in &parametric.entries {
            assert!(e.eta() < 1e-12, "index {}: eta {}", e.index, e.eta());
        }
    }

    #[test]
    fn distance_two_indices_vanish() {
        // estimators vanish identically outside the boundary index set
        let lambda = IndexSet::mean_only();
        let s = solve_problem(1, 0.4, 0.1, lambda, DetailOption::I, tp1_force(1.0 / 1.4));
        let assembler =
            ResidualAssembler::new(&s.blocks, &s.detail, &s.detail_blocks, &s.factors, &s.sol);
        let far = IndexSet::from_indices(vec![
            MultiIndex::from_pairs(&[(1, 1), (2, 1)]),
            MultiIndex::from_pairs(&[(1, 2)]),
            MultiIndex::from_pairs(&[(3, 2)]),
        ]);
        let parametric = solve_parametric_estimators(&assembler, &far).unwrap();
        for e in &parametric.entries {
            assert!(e.eta() < 1e-13, "index {}: eta {}", e.index, e.eta());
        }
    }

    #[test]
    fn parametric_rejects_index_inside_lambda() {
        let lambda = IndexSet::single_parameter_degree(1, 1);
        let s = solve_problem(1, 0.4, 0.1, lambda, DetailOption::I, |_, _| [1.0, 0.0]);
        let assembler =
            ResidualAssembler::new(&s.blocks, &s.detail, &s.detail_blocks, &s.factors, &s.sol);
        let bad = IndexSet::from_indices(vec![MultiIndex::unit(1)]);
        assert!(matches!(
            solve_parametric_estimators(&assembler, &bad),
            Err(Error::IndexInSolutionSet(_))
        ));
    }

    #[test]
    fn riesz_norms_match_gram_quadratic_form() {
        // |e|^2 computed as e^T rhs must agree with the Gram quadratic
        // form of the representer
        let lambda = IndexSet::single_parameter_degree(1, 2);
        for option in [DetailOption::I, DetailOption::II] {
            let s = solve_problem(2, 0.35, 0.1, lambda.clone(), option, tp1_force(1.0 / 1.35));
            let assembler = ResidualAssembler::new(
                &s.blocks,
                &s.detail,
                &s.detail_blocks,
                &s.factors,
                &s.sol,
            );
            let spatial = solve_spatial_estimators(&assembler).unwrap();
            let alpha = s.blocks.constants.alpha;
            let mut gram = 0.0;
            for e in &spatial.u_coeff {
                gram += alpha * s.detail_blocks.grad_gram.bilinear(e, e);
            }
            let rel = (gram - spatial.u_norm_sq).abs() / spatial.u_norm_sq.max(1e-300);
            assert!(rel < 1e-9, "option {option}: rel {rel}");

            let q = detail_index_set(&s.sol.lambda);
            let parametric = solve_parametric_estimators(&assembler, &q).unwrap();
            let direct = parametric.eta_sq();
            let via_gram = parametric.eta_sq_by_gram(&s.blocks);
            let rel = (direct - via_gram).abs() / direct.max(1e-300);
            assert!(rel < 1e-9, "option {option}: parametric rel {rel}");
        }
    }

    #[test]
    fn aggregate_combines_euclidean() {
        let spatial = SpatialEstimates {
            u_norm_sq: 1.0,
            p_norm_sq: 0.0,
            pt_norm_sq: 0.0,
            u_coeff: vec![],
            p_coeff: vec![],
            pt_coeff: vec![],
        };
        let parametric = ParametricEstimates {
            entries: vec![ParametricEntry {
                index: MultiIndex::unit(1),
                u_norm_sq: 0.0,
                pt_norm_sq: 4.0,
                u_coeff: vec![],
                pt_coeff: vec![],
            }],
        };
        let report = aggregate(&spatial, &parametric, 2.0);
        // parts (eta1, eta2, eta3) = (1, 2, 2) -> eta = 3
        assert!((report.eta1 - 1.0).abs() < 1e-15);
        assert!((report.eta3 - 2.0).abs() < 1e-15);
        assert!((report.eta - 3.0).abs() < 1e-15);
        // eta^2 = delta_h^2 + eta_param^2 consistency
        let total = (report.delta_h.powi(2) + report.eta_param_proxy.powi(2)).sqrt();
        assert!((total - report.eta).abs() < 1e-15);
    }

    #[test]
    fn neumann_problem_runs() {
        // mixed boundary: right side traction-free
        let mesh = build_unit_square(2, BcConfig::with_neumann(&[Side::Right]).unwrap());
        let spaces = FeSpacePair::new(mesh, PressureSpace::PMinusOne);
        let coeff = CoefficientField::cosine(0.5, 2.0, 2).unwrap();
        let blocks = assemble_blocks(&spaces, &coeff, 0.4, |_, _| [0.1, 0.0]).unwrap();
        let lambda = IndexSet::from_indices(vec![MultiIndex::zero(), MultiIndex::unit(1)]);
        let op = build_operator(&blocks, &lambda);
        let (sol, rep) = solve_minres(&op, &op.rhs(), 1e-10, 600).unwrap();
        assert!(rep.relative_residual <= 1e-10);
        let detail = build_detail_space(&spaces, DetailOption::I);
        let detail_blocks =
            assemble_detail_blocks(&spaces, &detail, &coeff, |_, _| [0.1, 0.0]).unwrap();
        let factors = EstimatorFactors::new(&blocks).unwrap();
        let assembler = ResidualAssembler::new(&blocks, &detail, &detail_blocks, &factors, &sol);
        let spatial = solve_spatial_estimators(&assembler).unwrap();
        let q = detail_index_set(&sol.lambda);
        let parametric = solve_parametric_estimators(&assembler, &q).unwrap();
        let report = aggregate(&spatial, &parametric, eta2_direct(&sol, &blocks));
        assert!(report.eta.is_finite() && report.eta > 0.0);
        assert!(report.eta_param_proxy > 0.0);
    }
}
