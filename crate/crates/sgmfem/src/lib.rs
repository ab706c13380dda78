//! Stochastic Galerkin mixed finite elements for planar linear elasticity
//! with a parameter-dependent Young's modulus.
//!
//! The displacement/pressure/scaled-pressure system is discretised with
//! Q2 elements for the displacement and either discontinuous linear (P-1)
//! or continuous bilinear (Q1) elements for the two pressures, tensorised
//! with an orthonormal Legendre polynomial basis over the parameter domain.
//! The coupled saddle-point system is applied matrix-free through its
//! Kronecker-product structure and solved with preconditioned MINRES.
//!
//! On top of the solver sit a hierarchical a posteriori error estimator
//! (spatial and parametric contributions computed from detail-space
//! residual problems), error-reduction proxies, and an adaptive loop that
//! alternates uniform mesh refinement with enrichment of the multi-index
//! set.

pub mod adaptor;
pub mod chaos;
mod error;
pub mod estimator;
pub mod fe;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod system;

pub use error::Error;

/// Material constants derived from the Poisson ratio.
///
/// `alpha = 1/(1+nu)` scales the strain form, `beta = nu/(1-2nu)` enters
/// the pressure coupling; their product `alpha*beta` is the scaled Lame
/// ratio that weights the two pressure mass forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialConstants {
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl MaterialConstants {
    pub fn new(nu: f64) -> Result<Self, Error> {
        if !(nu > 0.0 && nu < 0.5) {
            return Err(Error::InvalidPoissonRatio(nu));
        }
        Ok(Self {
            nu,
            alpha: 1.0 / (1.0 + nu),
            beta: nu / (1.0 - 2.0 * nu),
        })
    }

    /// Weight of the pressure inner product `c-bar`: `1/alpha + 1/(alpha*beta)`.
    pub fn cbar_weight(&self) -> f64 {
        1.0 / self.alpha + 1.0 / (self.alpha * self.beta)
    }

    /// Weight of the scaled-pressure inner product `d-bar`: `1/(alpha*beta)`.
    pub fn dbar_weight(&self) -> f64 {
        1.0 / (self.alpha * self.beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn material_constants_nu_04() {
        let m = MaterialConstants::new(0.4).unwrap();
        assert!((m.alpha - 1.0 / 1.4).abs() < 1e-15);
        assert!((m.beta - 2.0).abs() < 1e-15);
        assert!((m.alpha * m.beta - 10.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn material_constants_rejects_out_of_range() {
        assert!(MaterialConstants::new(0.5).is_err());
        assert!(MaterialConstants::new(0.0).is_err());
        assert!(MaterialConstants::new(-0.1).is_err());
    }
}
