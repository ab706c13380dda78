use thiserror::Error;

/// Errors raised across the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Poisson ratio nu = {0}: require 0 < nu < 1/2")]
    InvalidPoissonRatio(f64),

    #[error(
        "coefficient field violates uniform ellipticity: sum_k sup|e_k| = {perturbation:.6e} \
         >= inf e_0 = {mean_min:.6e}"
    )]
    CoefficientNotElliptic { perturbation: f64, mean_min: f64 },

    #[error("coefficient term {index} exceeds truncation M = {truncation}")]
    CoefficientIndexOutOfRange { index: usize, truncation: usize },

    #[error("all four sides are Neumann: the Dirichlet boundary must be nonempty")]
    NoDirichletBoundary,

    #[error("MINRES did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    SolverDidNotConverge {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("preconditioner is not symmetric positive definite")]
    IndefinitePreconditioner,

    #[error("multi-index {0} already belongs to the solution index set")]
    IndexInSolutionSet(String),

    #[error("detail-space Gram matrix is singular")]
    SingularDetailGram,

    #[error("inner solve for a detail-space problem stagnated (residual {0:.3e})")]
    DetailSolveStagnated(f64),
}
