//! Domain types and the load, cost and residual arithmetic shared by every
//! other module.

mod app;
mod embedding;
mod ledger;
mod request;
mod substrate;

pub use app::{
    AppId, AppKind, Application, EfficiencyMap, Eta, EtaEntry, VLinkId, VNodeId, VirtualLink,
};
pub use embedding::{element_load, merge_loads, Embedding, LoadVector};
pub use ledger::{check_substrate_fit, ActiveAllocation, LoadLedger};
pub use request::{Request, RequestId, RequestStatus};
pub use substrate::{
    ArcId, Element, ElementId, LinkId, NodeId, SubstrateLink, SubstrateNetwork, SubstrateNode,
    Tier,
};

#[cfg(test)]
pub(crate) use substrate::tests as fixtures;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid substrate: {0}")]
    InvalidSubstrate(String),
    #[error("substrate graph is not connected")]
    Disconnected,
    #[error("invalid application {0}: {1}")]
    InvalidApplication(AppId, String),
    #[error("invalid embedding for request {0}: {1}")]
    InvalidEmbedding(RequestId, String),
    #[error("request {0} is already allocated")]
    DoubleAllocation(RequestId),
    #[error("request {0} is not allocated")]
    NotAllocated(RequestId),
    #[error("capacity violated on element {element}: load {load} > capacity {capacity}")]
    CapacityViolation {
        element: ElementId,
        load: f64,
        capacity: f64,
    },
    #[error("negative residual {residual} on element {element}")]
    NegativeResidual { element: ElementId, residual: f64 },
}
