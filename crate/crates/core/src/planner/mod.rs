//! Offline planning: history aggregation, bootstrap demand estimation, the
//! plan LP and its decomposition into templates.

mod aggregate;
mod bootstrap;
mod decompose;
mod lp;
mod plan;
mod pvne;
mod solver;

pub use aggregate::{aggregate_history, AggregateKey, AggregateSeries};
pub use bootstrap::{bootstrap_expected_demand, percentile_sorted, BootstrapEstimate};
pub use decompose::{decompose_aggregate, extract_templates, template_loads, Decomposition, Template};
pub use lp::{Constraint, LpModel, RowId, VarId, Variable, Violation};
pub use plan::{make_plan, plan_for_demands, Plan, PlanAggregate, PlanConfig, PlanOutcome};
pub use pvne::{build_pvne, default_psi, AggregateVars, DemandInput, PvneModel};
pub use solver::{HighsSolver, LpSolution, LpSolver};

#[derive(Debug, thiserror::Error)]
pub enum PlannerError {
    #[error("LP solver failed: {0}")]
    Solver(String),
    #[error("template extraction failed: {0}")]
    Decomposition(String),
    #[error("invalid plan config: {0}")]
    Config(String),
}
