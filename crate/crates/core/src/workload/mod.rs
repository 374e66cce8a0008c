//! Substrates, application sets and request traces for experiments.

mod apps;
mod topology;
mod trace;

pub use apps::{gen_applications, AppSpec};
pub use topology::{build_topology, BaseGraph, Preset, TierParams, TierTable, TopologySpec};
pub use trace::{gen_mmpp_trace, scale_to_utilization, zipf_weights, MmppSpec, Trace, TraceSpec};

use crate::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("invalid workload spec: {0}")]
    InvalidSpec(String),
    #[error("unknown topology preset {0:?}")]
    UnknownPreset(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("trace csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
