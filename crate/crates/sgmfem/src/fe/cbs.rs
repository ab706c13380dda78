//! Numerical estimate of the strengthened Cauchy-Schwarz constants between
//! the coarse spaces and their detail complements, computed on a small
//! patch. Both constants must come out strictly below one for the
//! two-sided estimator bounds to be meaningful.

use nalgebra::DMatrix;

use crate::mesh::{build_unit_square, BcConfig};
use crate::quadrature::SquareRule;

use super::detail::{build_detail_space, DetailOption};
use super::shape;
use super::{FeSpacePair, PressureSpace};

/// Largest generalized singular value of the pairing `C` between two
/// SPD Grams: gamma^2 = lambda_max(Kc^-1 C Kd^-1 C^T).
fn cbs_gamma(kc: &DMatrix<f64>, kd: &DMatrix<f64>, cross: &DMatrix<f64>) -> f64 {
    let lc = kc.clone().cholesky().expect("coarse Gram SPD");
    let ld = kd.clone().cholesky().expect("detail Gram SPD");
    // S = Lc^-1 C Ld^-T; gamma = sigma_max(S)
    let mut s = cross.clone();
    // solve Lc * X = C  (column-wise forward substitution)
    s = lc.l().solve_lower_triangular(&s).expect("triangular solve");
    // right-solve against Ld^T: S Ld^-T = (Ld^-1 S^T)^T
    let st = ld.l().solve_lower_triangular(&s.transpose()).expect("triangular solve");
    let m = &st.transpose() * &st;
    m.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, f64::max)
        .sqrt()
}

/// Estimates (gamma_1, gamma_2) for the displacement-gradient and pressure
/// pairings on a 2 x 2 all-Dirichlet patch.
pub fn estimate_cbs_constants(option: DetailOption, pressure: PressureSpace) -> (f64, f64) {
    let mesh = build_unit_square(1, BcConfig::all_dirichlet());
    let spaces = FeSpacePair::new(mesh, pressure);
    let detail = build_detail_space(&spaces, option);

    let rule = SquareRule::new(4);
    let pts: Vec<_> = rule.reference_points().collect();

    // coarse gradient Gram (unweighted) on free dofs
    let n_c = spaces.n_u();
    let mut kc = DMatrix::zeros(n_c, n_c);
    {
        let h = mesh.h();
        let s = 2.0 / h;
        for e in 0..mesh.num_elements() {
            let nodes = spaces.element_nodes(e);
            for &(xi, eta, wref) in &pts {
                let w = wref * 0.25 * h * h;
                let (_, dxi, deta) = shape::q2_at(xi, eta);
                for (li, &ni) in nodes.iter().enumerate() {
                    for (lj, &nj) in nodes.iter().enumerate() {
                        let gg = (dxi[li] * dxi[lj] + deta[li] * deta[lj]) * s * s;
                        for c in 0..2 {
                            if let (Some(i), Some(j)) =
                                (spaces.free_dof(ni, c), spaces.free_dof(nj, c))
                            {
                                kc[(i, j)] += w * gg;
                            }
                        }
                    }
                }
            }
        }
    }

    // detail gradient Gram and coarse-detail cross pairing
    let n_d = detail.n_det_u();
    let mut kd = DMatrix::zeros(n_d, n_d);
    let mut cross = DMatrix::zeros(n_c, n_d);
    {
        let am = detail.assembly_mesh();
        let h = am.h();
        let cs = 2.0 / detail.coarse_mesh().h();
        for e in 0..am.num_elements() {
            let parent = detail.parent_element(e);
            let det = detail.disp_dofs(e);
            let nodes = spaces.element_nodes(parent);
            for &(xi, eta, wref) in &pts {
                let w = wref * 0.25 * h * h;
                let (_, dgrad) = detail.disp_eval(e, xi, eta);
                let (pxi, peta) = detail.parent_reference(e, xi, eta);
                let (_, cdxi, cdeta) = shape::q2_at(pxi, peta);
                for &(si, di) in &det {
                    for &(sj, dj) in &det {
                        let gg = dgrad[si][0] * dgrad[sj][0] + dgrad[si][1] * dgrad[sj][1];
                        for c in 0..2 {
                            kd[(2 * di + c, 2 * dj + c)] += w * gg;
                        }
                    }
                    for (lj, &nj) in nodes.iter().enumerate() {
                        let gg = dgrad[si][0] * cdxi[lj] * cs + dgrad[si][1] * cdeta[lj] * cs;
                        for c in 0..2 {
                            if let Some(j) = spaces.free_dof(nj, c) {
                                cross[(j, 2 * di + c)] += w * gg;
                            }
                        }
                    }
                }
            }
        }
    }
    let gamma1 = cbs_gamma(&kc, &kd, &cross);

    // pressure mass Grams and cross pairing
    let n_cp = spaces.n_p();
    let n_dp = detail.n_det_p();
    let mut mc = DMatrix::zeros(n_cp, n_cp);
    let mut md = DMatrix::zeros(n_dp, n_dp);
    let mut crossp = DMatrix::zeros(n_cp, n_dp);
    {
        let am = detail.assembly_mesh();
        let h = am.h();
        for e in 0..am.num_elements() {
            let parent = detail.parent_element(e);
            let detp = detail.pres_dofs(e);
            let pdofs = spaces.element_pressure_dofs(parent);
            let [x0, y0] = am.element_origin(e);
            for &(xi, eta, wref) in &pts {
                let w = wref * 0.25 * h * h;
                let x = x0 + 0.5 * (xi + 1.0) * h;
                let y = y0 + 0.5 * (eta + 1.0) * h;
                let dpv = detail.pres_eval(e, x, y);
                let cpv = spaces.pressure_basis_at(parent, x, y);
                for (s, &ps) in pdofs.iter().enumerate() {
                    for (t, &pt) in pdofs.iter().enumerate() {
                        mc[(ps, pt)] += w * cpv[s] * cpv[t];
                    }
                }
                for &(si, pi) in &detp {
                    for &(sj, pj) in &detp {
                        md[(pi, pj)] += w * dpv[si] * dpv[sj];
                    }
                    for (s, &ps) in pdofs.iter().enumerate() {
                        crossp[(ps, pi)] += w * cpv[s] * dpv[si];
                    }
                }
            }
        }
    }
    let gamma2 = cbs_gamma(&mc, &md, &crossp);

    (gamma1, gamma2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cbs_constants_below_one() {
        for option in [DetailOption::I, DetailOption::II] {
            let (g1, g2) = estimate_cbs_constants(option, PressureSpace::PMinusOne);
            assert!(g1 > 0.0 && g1 < 1.0, "option {option}: gamma1 = {g1}");
            assert!((0.0..1.0).contains(&g2), "option {option}: gamma2 = {g2}");
        }
    }

    #[test]
    fn orthogonal_complement_pressure_has_zero_cbs() {
        let (_, g2) = estimate_cbs_constants(DetailOption::I, PressureSpace::PMinusOne);
        assert!(g2 < 1e-7, "gamma2 = {g2}");
    }
}
