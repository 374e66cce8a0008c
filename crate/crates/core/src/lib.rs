//! Plan-based online virtual network embedding.

pub mod model;
pub mod workload;
pub mod planner;
pub mod engine;
pub mod metrics;
pub mod baselines;
pub mod experiment;
