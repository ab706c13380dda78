//! Adaptive refinement loop: solve, estimate, enrich, repeat.
//!
//! Each step solves the current SG system, computes the spatial
//! contribution `delta_h` and the spatial proxy, builds the detail index
//! set, computes the per-index parametric proxies, and then either stops
//! (estimate below tolerance), refines the mesh uniformly (spatial proxy
//! dominates by the weighting factor tau), or enriches the index set with
//! the dominant detail index plus any index whose proxy clears the
//! spatial proxy.

use std::time::Instant;

use serde::Serialize;

use crate::chaos::{detail_index_set, IndexSet, MultiIndex};
use crate::estimator::{
    aggregate, eta2_direct, solve_parametric_estimators, solve_spatial_estimators,
    EstimateReport, EstimatorFactors, ResidualAssembler,
};
use crate::fe::{
    assemble_blocks, assemble_detail_blocks, build_detail_space, CoefficientField, DetailBlocks,
    DetailOption, DeterministicBlocks, FeSpacePair, PressureSpace,
};
use crate::mesh::{build_unit_square, refine_uniform, BcConfig, Mesh};
use crate::system::{build_operator, solve_minres, SgSolution, SolverReport};
use crate::Error;

/// Configuration of the adaptive loop.
#[derive(Debug, Clone)]
pub struct AdaptiveConfig {
    /// Target estimate; the loop stops when eta < tol.
    pub tol: f64,
    /// Cap on total (spatial x parametric) degrees of freedom.
    pub max_dofs: usize,
    /// Refinement weighting factor between the spatial and parametric
    /// proxies.
    pub tau: f64,
    pub option: DetailOption,
    pub pressure: PressureSpace,
    pub initial_level: u32,
    pub minres_tol: f64,
    pub minres_max_iter: usize,
    /// Hard cap on adaptive steps.
    pub max_steps: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_dofs: 100_000,
            tau: std::f64::consts::SQRT_2,
            option: DetailOption::I,
            pressure: PressureSpace::PMinusOne,
            initial_level: 2,
            minres_tol: 1e-8,
            minres_max_iter: 2000,
            max_steps: 60,
        }
    }
}

/// What a step decided to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Spatial,
    Parametric,
    Stop,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Decision::Spatial => write!(f, "spatial"),
            Decision::Parametric => write!(f, "parametric"),
            Decision::Stop => write!(f, "stop"),
        }
    }
}

/// One row of the adaptive trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub mesh_level: u32,
    pub n_spatial: usize,
    pub n_indices: usize,
    pub n_total: usize,
    pub eta: f64,
    pub delta_h: f64,
    pub eta_spatial_proxy: f64,
    pub eta_param_proxy: f64,
    pub decision: Decision,
    pub seconds: f64,
    /// Indices added to Lambda on a parametric step, serialised.
    pub indices_added: Vec<String>,
    /// Number of active parameters after the step.
    pub active_parameters: u32,
    #[serde(skip)]
    pub estimate: EstimateReport,
    #[serde(skip)]
    pub solver: SolverReport,
}

/// Mutable state of the loop.
pub struct AdaptiveState {
    pub mesh: Mesh,
    pub lambda: IndexSet,
    pub coeff: CoefficientField,
    workspace: Option<Workspace>,
}

struct Workspace {
    spaces: FeSpacePair,
    blocks: DeterministicBlocks,
    detail: crate::fe::DetailSpace,
    detail_blocks: DetailBlocks,
    factors: EstimatorFactors,
}

/// The problem fed to the loop: boundary conditions, coefficient family,
/// body force and Poisson ratio.
pub struct AdaptiveProblem<F: Fn(f64, f64) -> [f64; 2]> {
    pub bc: BcConfig,
    pub coeff: CoefficientField,
    pub body_force: F,
    pub nu: f64,
}

impl AdaptiveState {
    fn dofs_per_block(&self, config: &AdaptiveConfig) -> usize {
        let spaces = FeSpacePair::new(self.mesh, config.pressure);
        spaces.n_u() + 2 * spaces.n_p()
    }

    pub fn total_dofs(&self, config: &AdaptiveConfig) -> usize {
        self.dofs_per_block(config) * self.lambda.len()
    }
}

/// Runs one step of the adaptive algorithm, mutating the state according
/// to the decision taken. Returns the trace row and the solution of this
/// step.
pub fn adaptive_step<F: Fn(f64, f64) -> [f64; 2]>(
    state: &mut AdaptiveState,
    problem: &AdaptiveProblem<F>,
    config: &AdaptiveConfig,
    step: usize,
) -> Result<(TraceRow, SgSolution), Error> {
    let start = Instant::now();
    // lazily grow the coefficient truncation so every detail index sees a
    // nonzero expansion term
    let wanted = (state.lambda.max_active_param() + 1) as usize;
    if state.coeff.truncation() < wanted {
        state.coeff = state.coeff.with_truncation(wanted)?;
        if let Some(ws) = state.workspace.as_mut() {
            ws.blocks.extend_truncation(&state.coeff, 3)?;
            ws.detail_blocks
                .extend_truncation(&ws.spaces, &ws.detail, &state.coeff)?;
        }
    }
    if state.workspace.is_none() {
        let spaces = FeSpacePair::new(state.mesh, config.pressure);
        let blocks = assemble_blocks(&spaces, &state.coeff, problem.nu(), &problem.body_force)?;
        let detail = build_detail_space(&spaces, config.option);
        let detail_blocks =
            assemble_detail_blocks(&spaces, &detail, &state.coeff, &problem.body_force)?;
        let factors = EstimatorFactors::new(&blocks)?;
        state.workspace = Some(Workspace { spaces, blocks, detail, detail_blocks, factors });
    }
    let ws = state.workspace.as_ref().unwrap();

    let op = build_operator(&ws.blocks, &state.lambda);
    let rhs = op.rhs();
    let (sol, solver) = solve_minres(&op, &rhs, config.minres_tol, config.minres_max_iter)?;

    let assembler =
        ResidualAssembler::new(&ws.blocks, &ws.detail, &ws.detail_blocks, &ws.factors, &sol);
    let spatial = solve_spatial_estimators(&assembler)?;
    let eta2 = eta2_direct(&sol, &ws.blocks);
    let detail_set = detail_index_set(&state.lambda);
    let parametric = solve_parametric_estimators(&assembler, &detail_set)?;
    let estimate = aggregate(&spatial, &parametric, eta2);

    let n_spatial = ws.spaces.n_u() + 2 * ws.spaces.n_p();
    let n_indices = state.lambda.len();
    let n_total = n_spatial * n_indices;

    let mut indices_added = Vec::new();
    let decision = if estimate.eta < config.tol {
        Decision::Stop
    } else if estimate.eta_spatial_proxy >= config.tau * estimate.eta_param_proxy {
        Decision::Spatial
    } else {
        Decision::Parametric
    };

    match decision {
        Decision::Stop => {}
        Decision::Spatial => {
            state.mesh = refine_uniform(&state.mesh);
            state.workspace = None;
        }
        Decision::Parametric => {
            // the dominant index always enters; ties break toward the
            // canonical order of the detail set
            let best = parametric
                .entries
                .iter()
                .enumerate()
                .max_by(|(ia, a), (ib, b)| {
                    a.eta()
                        .partial_cmp(&b.eta())
                        .unwrap()
                        .then(ib.cmp(ia))
                })
                .map(|(_, e)| e.index.clone())
                .expect("detail index set is nonempty");
            let mut additions: Vec<MultiIndex> = vec![best];
            for e in &parametric.entries {
                if e.eta() >= estimate.eta_spatial_proxy && !additions.contains(&e.index) {
                    additions.push(e.index.clone());
                }
            }
            state.lambda = state.lambda.extended_with(&additions);
            indices_added = additions.iter().map(|i| i.to_string()).collect();
        }
    }

    let row = TraceRow {
        step,
        mesh_level: ws.spaces.mesh().level(),
        n_spatial,
        n_indices,
        n_total,
        eta: estimate.eta,
        delta_h: estimate.delta_h,
        eta_spatial_proxy: estimate.eta_spatial_proxy,
        eta_param_proxy: estimate.eta_param_proxy,
        decision,
        seconds: start.elapsed().as_secs_f64(),
        indices_added,
        active_parameters: state.lambda.max_active_param(),
        estimate,
        solver,
    };
    Ok((row, sol))
}

/// Runs the loop until the estimate drops below tolerance or the next
/// discretisation would exceed the dof cap. Returns the last solution and
/// the full trace.
pub fn run<F: Fn(f64, f64) -> [f64; 2]>(
    problem: &AdaptiveProblem<F>,
    config: &AdaptiveConfig,
) -> Result<(SgSolution, Vec<TraceRow>), Error> {
    let mut state = AdaptiveState {
        mesh: build_unit_square(config.initial_level, problem.bc),
        lambda: IndexSet::mean_only(),
        coeff: problem.coeff.clone(),
        workspace: None,
    };
    let mut trace = Vec::new();
    let mut last_sol = None;
    for step in 0..config.max_steps {
        if state.total_dofs(config) > config.max_dofs {
            break;
        }
        let (row, sol) = adaptive_step(&mut state, problem, config, step)?;
        let stop = row.decision == Decision::Stop;
        trace.push(row);
        last_sol = Some(sol);
        if stop {
            break;
        }
    }
    let sol = last_sol.expect("at least one adaptive step before the dof cap");
    Ok((sol, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huge_tolerance_stops_after_one_solve() {
        let problem = AdaptiveProblem {
            bc: BcConfig::all_dirichlet(),
            coeff: CoefficientField::affine_scalar(1.0, 0.1).unwrap(),
            body_force: |_x: f64, _y: f64| [1.0, 0.0],
            nu: 0.4,
        };
        let config = AdaptiveConfig { tol: 1e9, initial_level: 1, ..Default::default() };
        let (_, trace) = run(&problem, &config).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace[0].decision, Decision::Stop);
    }

    #[test]
    fn deterministic_coefficient_always_refines_mesh() {
        let problem = AdaptiveProblem {
            bc: BcConfig::all_dirichlet(),
            coeff: CoefficientField::affine_scalar(1.0, 0.0).unwrap(),
            body_force: |_x: f64, _y: f64| [0.5, -0.25],
            nu: 0.4,
        };
        let config = AdaptiveConfig {
            tol: 1e-12,
            max_dofs: 30_000,
            initial_level: 1,
            ..Default::default()
        };
        let (_, trace) = run(&problem, &config).unwrap();
        assert!(trace.len() >= 2);
        for row in &trace {
            assert_eq!(row.decision, Decision::Spatial);
            assert!(row.eta_param_proxy < 1e-12);
        }
        // mesh levels nondecreasing
        for w in trace.windows(2) {
            assert!(w[1].mesh_level > w[0].mesh_level);
        }
    }

    #[test]
    fn parametric_enrichment_grows_lambda_lazily() {
        // strong parametric content: slow decay, moderate amplitude
        let problem = AdaptiveProblem {
            bc: BcConfig::all_dirichlet(),
            coeff: CoefficientField::cosine(0.55, 2.0, 1).unwrap(),
            body_force: |_x: f64, _y: f64| [0.1, 0.0],
            nu: 0.3,
        };
        let config = AdaptiveConfig {
            tol: 1e-12,
            max_dofs: 20_000,
            initial_level: 2,
            ..Default::default()
        };
        let (sol, trace) = run(&problem, &config).unwrap();
        let parametric_steps: Vec<_> =
            trace.iter().filter(|r| r.decision == Decision::Parametric).collect();
        assert!(
            !parametric_steps.is_empty(),
            "expected at least one parametric step: {:?}",
            trace.iter().map(|r| (r.decision, r.eta)).collect::<Vec<_>>()
        );
        for row in &parametric_steps {
            assert!(!row.indices_added.is_empty());
        }
        assert!(sol.lambda.len() > 1);
    }
}
