//! Joint power and subcarrier allocation for OFDMA downlinks where secure
//! users need a long-term average secrecy rate and normal users maximize a
//! weighted information rate.
//!
//! Users `0..K1` are secure (SU), `K1..K` normal (NU). Rates are in nats,
//! power is linear with unit noise.
//!
//! Allocators:
//! - [`solve_optimal`]: dual decomposition with per-subcarrier bids, under an
//!   average ([`solve_average`]) or per-realization ([`solve_peak`]) power
//!   constraint.
//! - [`solve_suboptimal`]: threshold search for SUs, then water-filling for NUs.
//! - [`solve_fsa`]: fixed subcarrier blocks with adaptive power.
//!
//! [`secrecy_rate_upper_bound`] gives the infinite-power ceiling on any SU's
//! average secrecy rate; [`run_experiment`] drives parameter sweeps.

pub mod allocation;
pub mod baselines;
pub mod channel;
pub mod config;
mod ellipsoid;
pub mod ensemble_file;
pub mod error;
pub mod experiment;
pub mod feasibility;
pub mod math;
pub mod optimal;
pub mod quadrature;
mod recovery;
pub mod report;
pub mod solution;
pub mod suboptimal;

pub use allocation::AllocationDecision;
pub use baselines::{
    fsa_frontier, fsa_partition, max_feasible_target, solve_fsa, FrontierSearch, FsaScheme,
};
pub use channel::{
    generate_ensemble, order_stats, ChannelEnsemble, ChannelRealization, ColumnStats,
};
pub use config::{db_to_linear, DualState, PowerMode, ProblemConfig};
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentSpec, RunConfig, SolverKind};
pub use feasibility::{
    check_feasibility, secrecy_rate_upper_bound, BoundMethod, BoundOptions, FeasibilityCheck,
};
pub use math::{
    assign_subcarrier, h_nu, h_su, info_rate, nu_power, secrecy_rate, su_power, Assignment,
};
pub use optimal::{
    allocate_realization_avg, allocate_realization_peak, dual_evaluation, solve_average,
    solve_optimal, solve_peak, DualEvaluation,
};
pub use report::{evaluate, EvaluationReport};
pub use solution::{DualMethod, SolveResult, SolverOptions};
pub use suboptimal::{nu_phase, solve_suboptimal, su_phase, SuboptimalState};
