//! Solver options and results shared by every allocator.

use serde::{Deserialize, Serialize};

use crate::allocation::AllocationDecision;
use crate::config::DualState;
use crate::report::EvaluationReport;
use crate::suboptimal::SuboptimalState;

/// How the dual multipliers are searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DualMethod {
    /// Nested monotone searches: the power price by bisection, each SU
    /// multiplier by bisection at that price.
    #[default]
    Bisection,
    /// Projected subgradient with step `step_scale / sqrt(t)`.
    Subgradient,
    /// Central-cut ellipsoid method.
    Ellipsoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub method: DualMethod,
    /// `a` in the diminishing step `a / sqrt(t)`.
    pub step_scale: f64,
    /// Relative tolerance on the secrecy and power constraints.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// A secrecy multiplier above this with its constraint still violated
    /// marks the problem infeasible.
    pub multiplier_ceiling: f64,
    pub lambda_floor: f64,
    /// Relative tolerance of the per-realization power price search in peak mode.
    pub frame_tolerance: f64,
    /// Re-solve powers with the final owners fixed so the secrecy targets
    /// are met exactly; kept only when it does not lower the objective.
    pub refine_powers: bool,
    /// Peak mode on ensembles of at most this many realizations also tries
    /// single owner changes and pairwise owner swaps after refinement. `0`
    /// disables it.
    pub owner_search_frames: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: DualMethod::Bisection,
            step_scale: 1.0,
            epsilon: 1e-2,
            max_iterations: 5000,
            multiplier_ceiling: 1e6,
            lambda_floor: 1e-12,
            frame_tolerance: 1e-6,
            refine_powers: true,
            owner_search_frames: 4,
        }
    }
}

impl SolverOptions {
    pub fn with_method(mut self, method: DualMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.epsilon = eps;
        self
    }
}

/// Outcome of one solver run over an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub duals: DualState,
    pub report: EvaluationReport,
    pub iterations: usize,
    pub converged: bool,
    pub infeasible: bool,
    pub diagnostics: Option<String>,
    /// One decision per realization, in ensemble order.
    pub decisions: Vec<AllocationDecision>,
    /// Dual function value at the returned multipliers, when defined.
    pub dual_objective: Option<f64>,
    /// Best dual value seen after each iteration.
    pub dual_trace: Vec<f64>,
    /// Per-realization power price (peak mode only).
    pub frame_lambdas: Vec<f64>,
    /// Thresholds and water level of the two-phase allocators.
    pub thresholds: Option<SuboptimalState>,
}

impl SolveResult {
    /// Weighted NU rate, the primal objective.
    pub fn primal_objective(&self) -> f64 {
        self.report.r_nu_total
    }

    pub(crate) fn infeasible(duals: DualState, iterations: usize, why: String) -> Self {
        SolveResult {
            duals,
            report: EvaluationReport::default(),
            iterations,
            converged: false,
            infeasible: true,
            diagnostics: Some(why),
            decisions: Vec::new(),
            dual_objective: None,
            dual_trace: Vec::new(),
            frame_lambdas: Vec::new(),
            thresholds: None,
        }
    }
}
