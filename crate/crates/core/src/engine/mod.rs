//! Online slot-by-slot simulation and the OLIVE embedding algorithm.

mod greedy;
mod olive;
mod sim;

pub use greedy::{greedy_embed, Candidate};
pub use olive::{run_olive, run_quickg, Olive, PlanChoice};
pub use sim::{
    write_events_csv, Decision, EngineOptions, Event, RejectReason, RequestRecord, RunOutput,
    Simulation,
};

pub(crate) use greedy::{dijkstra, path_to};

#[cfg(test)]
pub(crate) use greedy::tests as greedy_fixtures;

use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invariant violated at slot {slot}: {detail}")]
    Invariant { slot: u32, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Planner(#[from] crate::planner::PlannerError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
