//! Collocating greedy embedding.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::model::{
    Application, ArcId, Embedding, LoadLedger, LoadVector, NodeId, Request, SubstrateNetwork,
    VLinkId, VNodeId,
};

/// A feasible embedding with its loads and per-slot cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub embedding: Embedding,
    pub loads: LoadVector,
    pub cost: f64,
}

impl Candidate {
    pub fn new(
        embedding: Embedding,
        request: &Request,
        app: &Application,
        substrate: &SubstrateNetwork,
    ) -> Option<Candidate> {
        let loads = embedding.loads(request.size, app, substrate).ok()?;
        let cost = Embedding::cost_of(&loads, substrate);
        Some(Candidate {
            embedding,
            loads,
            cost,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: NodeId,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (dist, node).
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cheapest paths from `source` over arcs accepted by `arc_cost`
/// (`None` = inadmissible). Returns the predecessor arc per node.
pub(crate) fn dijkstra(
    substrate: &SubstrateNetwork,
    source: NodeId,
    arc_cost: impl Fn(ArcId) -> Option<f64>,
) -> (Vec<f64>, Vec<Option<ArcId>>) {
    let n = substrate.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source.index()] = 0.0;
    heap.push(HeapItem {
        dist: 0.0,
        node: source,
    });
    while let Some(HeapItem { dist: d, node: v }) = heap.pop() {
        if done[v.index()] {
            continue;
        }
        done[v.index()] = true;
        for &arc in substrate.out_arcs(v) {
            let Some(c) = arc_cost(arc) else { continue };
            let (_, w) = substrate.arc_endpoints(arc);
            let nd = d + c;
            if !done[w.index()] && nd < dist[w.index()] {
                dist[w.index()] = nd;
                pred[w.index()] = Some(arc);
                heap.push(HeapItem { dist: nd, node: w });
            }
        }
    }
    (dist, pred)
}

pub(crate) fn path_to(pred: &[Option<ArcId>], substrate: &SubstrateNetwork, target: NodeId) -> Vec<ArcId> {
    let mut path = Vec::new();
    let mut at = target;
    while let Some(arc) = pred[at.index()] {
        path.push(arc);
        at = substrate.arc_endpoints(arc).0;
    }
    path.reverse();
    path
}

/// Places every VNF of `request` on one substrate node `w` and routes the
/// root's links along one cheapest admissible path from the origin to `w`.
/// Returns the cheapest feasible choice over all `w` (lowest id on ties).
pub fn greedy_embed(
    request: &Request,
    app: &Application,
    substrate: &SubstrateNetwork,
    ledger: &LoadLedger,
) -> Option<Candidate> {
    let root_links: Vec<VLinkId> = app.child_links(VNodeId::ROOT).to_vec();
    // Combined per-link demand of the root's links, in the same summation
    // order as `Embedding::loads`.
    let arc_demand = |arc: ArcId| -> Option<f64> {
        let link = arc.link();
        let mut total = None::<f64>;
        for &l in &root_links {
            let eta = app.link_eta(l, link);
            if eta.is_forbidden() {
                return None;
            }
            let v = request.size * app.link(l).size * eta.0;
            if v != 0.0 {
                total = Some(total.map_or(v, |t| t + v));
            }
        }
        Some(total.unwrap_or(0.0))
    };
    let (_, pred) = dijkstra(substrate, request.origin, |arc| {
        let demand = arc_demand(arc)?;
        let e = substrate.link_element(arc.link());
        if demand != 0.0 && ledger.load(e) + demand > ledger.capacity(e) {
            return None;
        }
        Some(demand * substrate.unit_cost(e))
    });

    let mut best: Option<Candidate> = None;
    for w in substrate.nodes().iter().map(|n| n.id) {
        if w != request.origin && pred[w.index()].is_none() {
            continue;
        }
        if app.vnfs().any(|q| app.node_eta(q, w).is_forbidden()) {
            continue;
        }
        let path = path_to(&pred, substrate, w);
        let mut node_map = vec![w; app.node_count()];
        node_map[0] = request.origin;
        let paths = (0..app.link_count())
            .map(|l| {
                if app.link(VLinkId(l as u16)).parent == VNodeId::ROOT {
                    path.clone()
                } else {
                    Vec::new()
                }
            })
            .collect();
        let Some(c) = Candidate::new(Embedding { node_map, paths }, request, app, substrate) else {
            continue;
        };
        if !ledger.fits(&c.loads) {
            continue;
        }
        if best.as_ref().is_none_or(|b| c.cost < b.cost) {
            best = Some(c);
        }
    }
    best
}
