//! Matrix-free assembly and iterative solution of the coupled
//! saddle-point system.
//!
//! With the Legendre coupling matrices G_k, the Galerkin matrix is the
//! symmetric 3x3 block operator
//!
//! ```text
//! [ sum_k G_k (x) A_k      I (x) B^T              0                    ]
//! [ I (x) B                0                     -w I (x) M            ]
//! [ 0                     -w I (x) M              w sum_k G_k (x) M_k  ]
//! ```
//!
//! with `w = 1/(alpha beta)`. It is applied blockwise through the
//! Kronecker structure and solved with preconditioned MINRES; the
//! block-diagonal preconditioner pairs a factorization of the mean strain
//! stiffness with the pressure mass scaled by the norm weights, which
//! keeps the preconditioned spectrum bounded uniformly in the Poisson
//! ratio.

use std::time::Instant;

use serde::Serialize;

use crate::chaos::{coupling_matrix, CouplingMatrix, IndexSet};
use crate::fe::{DeterministicBlocks, PressureSpace};
use crate::linalg::{dot, BandedCholesky, BlockDiagonalSolver, CsrMatrix};
use crate::Error;

/// Offsets of the chaos-indexed field blocks inside a flat vector:
/// all displacement blocks, then all pressure blocks, then all scaled
/// pressure blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub n_u: usize,
    pub n_p: usize,
    pub n_blocks: usize,
}

impl BlockLayout {
    pub fn total(&self) -> usize {
        self.n_blocks * (self.n_u + 2 * self.n_p)
    }

    pub fn u_range(&self, b: usize) -> std::ops::Range<usize> {
        b * self.n_u..(b + 1) * self.n_u
    }

    pub fn p_range(&self, b: usize) -> std::ops::Range<usize> {
        let base = self.n_blocks * self.n_u;
        base + b * self.n_p..base + (b + 1) * self.n_p
    }

    pub fn pt_range(&self, b: usize) -> std::ops::Range<usize> {
        let base = self.n_blocks * (self.n_u + self.n_p);
        base + b * self.n_p..base + (b + 1) * self.n_p
    }
}

/// Matrix-free SG-MFEM operator.
pub struct SgOperator<'a> {
    blocks: &'a DeterministicBlocks,
    lambda: &'a IndexSet,
    couplings: Vec<CouplingMatrix>,
    layout: BlockLayout,
}

/// Builds the operator for the given solution index set. Coefficient terms
/// beyond the truncation contribute nothing; terms whose coupling pattern
/// is empty on Lambda are skipped during application.
pub fn build_operator<'a>(blocks: &'a DeterministicBlocks, lambda: &'a IndexSet) -> SgOperator<'a> {
    let couplings = (0..=blocks.truncation() as u32)
        .map(|k| coupling_matrix(k, lambda, lambda))
        .collect();
    let layout = BlockLayout {
        n_u: blocks.spaces.n_u(),
        n_p: blocks.spaces.n_p(),
        n_blocks: lambda.len(),
    };
    SgOperator { blocks, lambda, couplings, layout }
}

impl SgOperator<'_> {
    pub fn layout(&self) -> BlockLayout {
        self.layout
    }

    pub fn lambda(&self) -> &IndexSet {
        self.lambda
    }

    pub fn blocks(&self) -> &DeterministicBlocks {
        self.blocks
    }

    /// y = K x
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let l = self.layout;
        debug_assert_eq!(x.len(), l.total());
        debug_assert_eq!(y.len(), l.total());
        y.iter_mut().for_each(|v| *v = 0.0);
        let w = self.blocks.constants.dbar_weight();
        let mut tmp_u = vec![0.0; l.n_u];
        let mut tmp_p = vec![0.0; l.n_p];
        for (k, g) in self.couplings.iter().enumerate() {
            let a_k = &self.blocks.strain[k];
            let m_k = &self.blocks.mass_weighted[k];
            if a_k.nnz() == 0 && m_k.nnz() == 0 {
                continue;
            }
            for &(a, b, val) in &g.triplets {
                tmp_u.iter_mut().for_each(|v| *v = 0.0);
                a_k.axpy(val, &x[l.u_range(b)], &mut tmp_u);
                add_into(&mut y[l.u_range(a)], &tmp_u);
                tmp_p.iter_mut().for_each(|v| *v = 0.0);
                m_k.axpy(w * val, &x[l.pt_range(b)], &mut tmp_p);
                add_into(&mut y[l.pt_range(a)], &tmp_p);
            }
        }
        let div = &self.blocks.div;
        let mass = &self.blocks.mass;
        for b in 0..l.n_blocks {
            tmp_u.iter_mut().for_each(|v| *v = 0.0);
            div.axpy_transpose(1.0, &x[l.p_range(b)], &mut tmp_u);
            add_into(&mut y[l.u_range(b)], &tmp_u);

            tmp_p.iter_mut().for_each(|v| *v = 0.0);
            div.axpy(1.0, &x[l.u_range(b)], &mut tmp_p);
            mass.axpy(-w, &x[l.pt_range(b)], &mut tmp_p);
            add_into(&mut y[l.p_range(b)], &tmp_p);

            tmp_p.iter_mut().for_each(|v| *v = 0.0);
            mass.axpy(-w, &x[l.p_range(b)], &mut tmp_p);
            add_into(&mut y[l.pt_range(b)], &tmp_p);
        }
    }

    /// Load vector: the body-force functional acts on the mean
    /// displacement block only (psi_0 = 1 and E[psi_a] = delta_{a,0}).
    pub fn rhs(&self) -> Vec<f64> {
        let l = self.layout;
        let mut b = vec![0.0; l.total()];
        let mean = self
            .lambda
            .position(&crate::chaos::MultiIndex::zero())
            .expect("solution index set contains the mean index");
        b[l.u_range(mean)].copy_from_slice(&self.blocks.load);
        b
    }
}

#[inline]
fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Solver for one pressure-mass system; block-diagonal for the
/// discontinuous space, banded Cholesky for the bilinear one.
pub enum MassSolver {
    BlockDiagonal(BlockDiagonalSolver),
    Banded(BandedCholesky),
}

impl MassSolver {
    pub fn new(mass: &CsrMatrix, pressure: PressureSpace) -> Result<Self, Error> {
        Ok(match pressure {
            PressureSpace::PMinusOne => {
                MassSolver::BlockDiagonal(BlockDiagonalSolver::new(mass, 3)?)
            }
            PressureSpace::Q1 => MassSolver::Banded(BandedCholesky::new(mass)?),
        })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        match self {
            MassSolver::BlockDiagonal(s) => s.solve_in_place(x),
            MassSolver::Banded(s) => s.solve_in_place(x),
        }
    }
}

/// Symmetric positive definite block-diagonal preconditioner: the mean
/// strain stiffness per displacement block and the pressure mass scaled by
/// the weights of the stability norm per pressure block.
pub struct BlockPreconditioner {
    a0: BandedCholesky,
    mass: MassSolver,
    w_p: f64,
    w_pt: f64,
    layout: BlockLayout,
}

impl BlockPreconditioner {
    pub fn new(blocks: &DeterministicBlocks, lambda: &IndexSet) -> Result<Self, Error> {
        let layout = BlockLayout {
            n_u: blocks.spaces.n_u(),
            n_p: blocks.spaces.n_p(),
            n_blocks: lambda.len(),
        };
        Ok(Self {
            a0: BandedCholesky::new(&blocks.strain[0])?,
            mass: MassSolver::new(&blocks.mass, blocks.spaces.pressure_space())?,
            w_p: blocks.constants.cbar_weight(),
            w_pt: blocks.constants.dbar_weight(),
            layout,
        })
    }

    /// z = P^-1 r
    pub fn apply_inverse(&self, r: &[f64], z: &mut [f64]) {
        let l = self.layout;
        z.copy_from_slice(r);
        for b in 0..l.n_blocks {
            self.a0.solve_in_place(&mut z[l.u_range(b)]);
            let zp = &mut z[l.p_range(b)];
            self.mass.solve_in_place(zp);
            zp.iter_mut().for_each(|v| *v /= self.w_p);
            let zpt = &mut z[l.pt_range(b)];
            self.mass.solve_in_place(zpt);
            zpt.iter_mut().for_each(|v| *v /= self.w_pt);
        }
    }
}

/// Chaos-indexed solution coefficients.
#[derive(Debug, Clone)]
pub struct SgSolution {
    pub lambda: IndexSet,
    /// Displacement blocks, one reduced coefficient vector per index.
    pub u: Vec<Vec<f64>>,
    /// Herrmann pressure blocks.
    pub p: Vec<Vec<f64>>,
    /// Scaled pressure blocks.
    pub pt: Vec<Vec<f64>>,
}

impl SgSolution {
    pub fn from_flat(lambda: &IndexSet, layout: BlockLayout, x: &[f64]) -> Self {
        Self {
            lambda: lambda.clone(),
            u: (0..layout.n_blocks).map(|b| x[layout.u_range(b)].to_vec()).collect(),
            p: (0..layout.n_blocks).map(|b| x[layout.p_range(b)].to_vec()).collect(),
            pt: (0..layout.n_blocks).map(|b| x[layout.pt_range(b)].to_vec()).collect(),
        }
    }

    pub fn zero(lambda: &IndexSet, n_u: usize, n_p: usize) -> Self {
        Self {
            lambda: lambda.clone(),
            u: vec![vec![0.0; n_u]; lambda.len()],
            p: vec![vec![0.0; n_p]; lambda.len()],
            pt: vec![vec![0.0; n_p]; lambda.len()],
        }
    }
}

/// Iteration record of one MINRES solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub seconds: f64,
}

/// Preconditioned MINRES on the SG operator; the residual is measured in
/// the P^-1 norm relative to the right-hand side.
pub fn solve_minres(
    op: &SgOperator<'_>,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(SgSolution, SolverReport), Error> {
    let precon = BlockPreconditioner::new(op.blocks(), op.lambda())?;
    let start = Instant::now();
    let (x, iterations, relative_residual) =
        minres(|x, y| op.apply(x, y), |r, z| precon.apply_inverse(r, z), rhs, tol, max_iter)?;
    let report = SolverReport {
        iterations,
        relative_residual,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((SgSolution::from_flat(op.lambda(), op.layout(), &x), report))
}

/// Generic preconditioned MINRES; `apply` must be symmetric and
/// `precondition` symmetric positive definite.
pub fn minres(
    apply: impl Fn(&[f64], &mut [f64]),
    precondition: impl Fn(&[f64], &mut [f64]),
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize, f64), Error> {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut r1 = rhs.to_vec();
    let mut y = vec![0.0; n];
    precondition(&r1, &mut y);
    let beta1_sq = dot(&r1, &y);
    if beta1_sq < 0.0 {
        return Err(Error::IndefinitePreconditioner);
    }
    let beta1 = beta1_sq.sqrt();
    if beta1 == 0.0 {
        return Ok((x, 0, 0.0));
    }

    let mut history = Vec::new();
    let mut r2 = r1.clone();
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut av = vec![0.0; n];

    let mut oldb = 0.0f64;
    let mut beta = beta1;
    let mut dbar = 0.0f64;
    let mut epsln = 0.0f64;
    let mut phibar = beta1;
    let mut cs = -1.0f64;
    let mut sn = 0.0f64;

    for itn in 1..=max_iter {
        // Lanczos step
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = s * y[i];
        }
        apply(&v, &mut av);
        if itn >= 2 {
            let c = beta / oldb;
            for i in 0..n {
                av[i] -= c * r1[i];
            }
        }
        let alfa = dot(&v, &av);
        let c = alfa / beta;
        for i in 0..n {
            av[i] -= c * r2[i];
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&av);
        precondition(&r2, &mut y);
        oldb = beta;
        let beta_sq = dot(&r2, &y);
        if beta_sq < 0.0 {
            return Err(Error::IndefinitePreconditioner);
        }
        beta = beta_sq.sqrt();

        // previous rotation applied to the new column
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;

        // current rotation
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::MIN_POSITIVE);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        // update direction and iterate
        for i in 0..n {
            let wi = (v[i] - oldeps * w2[i] - delta * w[i]) / gamma;
            w2[i] = w[i];
            w[i] = wi;
            x[i] += phi * wi;
        }

        let rel = phibar / beta1;
        history.push(rel);
        if rel <= tol {
            return Ok((x, itn, rel));
        }
    }
    Err(Error::SolverDidNotConverge {
        iterations: max_iter,
        residual: phibar / beta1,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::MultiIndex;
    use crate::fe::{assemble_blocks, CoefficientField, FeSpacePair};
    use crate::mesh::{build_unit_square, BcConfig};

    fn trivial_precondition(r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }

    #[test]
    fn minres_solves_small_indefinite_system() {
        // symmetric indefinite 4x4
        let a = [
            [2.0, 1.0, 0.0, 0.0],
            [1.0, -1.0, 0.5, 0.0],
            [0.0, 0.5, 3.0, -1.0],
            [0.0, 0.0, -1.0, -2.0],
        ];
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..4 {
                y[i] = (0..4).map(|j| a[i][j] * x[j]).sum();
            }
        };
        let x_true = [1.0, -2.0, 0.5, 3.0];
        let mut b = vec![0.0; 4];
        apply(&x_true, &mut b);
        let (x, _it, rel) = minres(apply, trivial_precondition, &b, 1e-12, 100).unwrap();
        assert!(rel <= 1e-12);
        for i in 0..4 {
            assert!((x[i] - x_true[i]).abs() < 1e-9, "x[{i}] = {}", x[i]);
        }
    }

    #[test]
    fn minres_zero_rhs_returns_zero_in_zero_iterations() {
        let apply = |x: &[f64], y: &mut [f64]| y.copy_from_slice(x);
        let b = vec![0.0; 5];
        let (x, it, rel) = minres(apply, trivial_precondition, &b, 1e-10, 10).unwrap();
        assert_eq!(it, 0);
        assert_eq!(rel, 0.0);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn minres_reports_nonconvergence() {
        let apply = |x: &[f64], y: &mut [f64]| {
            let n = x.len();
            for i in 0..n {
                y[i] = (i as f64 + 1.0) * x[i]
                    + if i > 0 { 0.3 * x[i - 1] } else { 0.0 }
                    + if i + 1 < n { 0.3 * x[i + 1] } else { 0.0 };
            }
        };
        let b = vec![1.0; 40];
        match minres(apply, trivial_precondition, &b, 1e-14, 2) {
            Err(Error::SolverDidNotConverge { iterations, history, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(history.len(), 2);
            }
            other => panic!("expected nonconvergence, got {other:?}"),
        }
    }

    fn tp_blocks(level: u32, nu: f64, e1: f64) -> DeterministicBlocks {
        let mesh = build_unit_square(level, BcConfig::all_dirichlet());
        let spaces = FeSpacePair::new(mesh, crate::fe::PressureSpace::PMinusOne);
        let coeff = CoefficientField::affine_scalar(1.0, e1).unwrap();
        assemble_blocks(&spaces, &coeff, nu, |x, y| [x * y + 0.3, (1.0 - x) * y]).unwrap()
    }

    #[test]
    fn operator_is_symmetric() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let blocks = tp_blocks(1, 0.4, 0.1);
        let lambda = IndexSet::from_indices(vec![
            MultiIndex::zero(),
            MultiIndex::unit(1),
            MultiIndex::from_pairs(&[(1, 2)]),
        ]);
        let op = build_operator(&blocks, &lambda);
        let n = op.layout().total();
        let mut kx = vec![0.0; n];
        let mut kz = vec![0.0; n];
        for _ in 0..5 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            op.apply(&x, &mut kx);
            op.apply(&z, &mut kz);
            let s1 = dot(&kx, &z);
            let s2 = dot(&x, &kz);
            let scale = s1.abs().max(s2.abs()).max(1e-30);
            assert!((s1 - s2).abs() / scale < 1e-12);
        }
    }

    #[test]
    fn deterministic_blocks_decouple() {
        // all e_k = 0 for k >= 1: applying K to a vector supported on one
        // chaos block stays on that block
        let blocks = tp_blocks(1, 0.4, 0.0);
        let lambda = IndexSet::from_indices(vec![MultiIndex::zero(), MultiIndex::unit(1)]);
        let op = build_operator(&blocks, &lambda);
        let l = op.layout();
        let mut x = vec![0.0; l.total()];
        x[l.u_range(0)].iter_mut().for_each(|v| *v = 1.0);
        x[l.p_range(0)].iter_mut().for_each(|v| *v = -0.5);
        x[l.pt_range(0)].iter_mut().for_each(|v| *v = 0.25);
        let mut y = vec![0.0; l.total()];
        op.apply(&x, &mut y);
        assert!(y[l.u_range(1)].iter().all(|&v| v == 0.0));
        assert!(y[l.p_range(1)].iter().all(|&v| v == 0.0));
        assert!(y[l.pt_range(1)].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sg_solve_consistent_with_residual() {
        let blocks = tp_blocks(2, 0.4, 0.1);
        let lambda = IndexSet::single_parameter_degree(1, 3);
        let op = build_operator(&blocks, &lambda);
        let rhs = op.rhs();
        let (sol, report) = solve_minres(&op, &rhs, 1e-10, 500).unwrap();
        assert!(report.relative_residual <= 1e-10);
        let l = op.layout();
        let mut x = vec![0.0; l.total()];
        for b in 0..l.n_blocks {
            x[l.u_range(b)].copy_from_slice(&sol.u[b]);
            x[l.p_range(b)].copy_from_slice(&sol.p[b]);
            x[l.pt_range(b)].copy_from_slice(&sol.pt[b]);
        }
        let mut kx = vec![0.0; l.total()];
        op.apply(&x, &mut kx);
        let r: Vec<f64> = kx.iter().zip(&rhs).map(|(a, b)| b - a).collect();
        let rel = crate::linalg::norm(&r) / crate::linalg::norm(&rhs);
        assert!(rel < 1e-8, "true residual {rel}");
    }

    #[test]
    fn solution_blocks_permute_with_index_order() {
        let blocks = tp_blocks(1, 0.45, 0.1);
        let l1 = IndexSet::from_indices(vec![
            MultiIndex::zero(),
            MultiIndex::unit(1),
            MultiIndex::from_pairs(&[(1, 2)]),
        ]);
        let l2 = IndexSet::from_indices(vec![
            MultiIndex::zero(),
            MultiIndex::from_pairs(&[(1, 2)]),
            MultiIndex::unit(1),
        ]);
        let op1 = build_operator(&blocks, &l1);
        let op2 = build_operator(&blocks, &l2);
        let (s1, _) = solve_minres(&op1, &op1.rhs(), 1e-12, 500).unwrap();
        let (s2, _) = solve_minres(&op2, &op2.rhs(), 1e-12, 500).unwrap();
        for idx in l1.iter() {
            let b1 = l1.position(idx).unwrap();
            let b2 = l2.position(idx).unwrap();
            let diff: f64 = s1.u[b1]
                .iter()
                .zip(&s2.u[b2])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-9, "index {idx}: diff {diff}");
        }
    }
}
