use serde::{Deserialize, Serialize};

use super::app::{Application, Eta, VLinkId, VNodeId};
use super::request::Request;
use super::substrate::{ArcId, ElementId, NodeId, SubstrateNetwork};
use super::ModelError;

/// Per-element loads, sorted by element id with no duplicates.
pub type LoadVector = Vec<(ElementId, f64)>;

/// `x * d * D * eta`. A forbidden placement is only an error when it is used.
pub fn element_load(x: bool, size: f64, element_size: f64, eta: Eta) -> Result<f64, String> {
    if !x {
        return Ok(0.0);
    }
    if eta.is_forbidden() {
        return Err("forbidden placement used".into());
    }
    Ok(size * element_size * eta.0)
}

/// Sorts by element and sums duplicates in their original order.
pub fn merge_loads(mut raw: Vec<(ElementId, f64)>) -> LoadVector {
    raw.sort_by_key(|(e, _)| *e);
    let mut out: LoadVector = Vec::with_capacity(raw.len());
    for (e, v) in raw {
        match out.last_mut() {
            Some((last, acc)) if *last == e => *acc += v,
            _ => out.push((e, v)),
        }
    }
    out
}

/// Unsplittable mapping of one request: a substrate node per virtual node and
/// a (possibly empty) substrate path per virtual link.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Embedding {
    pub node_map: Vec<NodeId>,
    pub paths: Vec<Vec<ArcId>>,
}

impl Embedding {
    pub fn node(&self, q: VNodeId) -> NodeId {
        self.node_map[q.index()]
    }

    pub fn path(&self, l: VLinkId) -> &[ArcId] {
        &self.paths[l.index()]
    }

    /// Structural validity for `request` on `app`: shape, root pinning, path
    /// continuity, simple paths and no forbidden placements.
    pub fn validate(
        &self,
        request: &Request,
        app: &Application,
        substrate: &SubstrateNetwork,
    ) -> Result<(), ModelError> {
        let bad = |msg: String| ModelError::InvalidEmbedding(request.id, msg);
        if self.node_map.len() != app.node_count() || self.paths.len() != app.link_count() {
            return Err(bad("shape does not match the application".into()));
        }
        if self.node_map[0] != request.origin {
            return Err(bad(format!(
                "root mapped to {} instead of origin {}",
                self.node_map[0], request.origin
            )));
        }
        for (i, &s) in self.node_map.iter().enumerate() {
            if s.index() >= substrate.node_count() {
                return Err(bad(format!("virtual node {i} mapped to missing node {s}")));
            }
            if app.node_eta(VNodeId(i as u16), s).is_forbidden() {
                return Err(bad(format!("virtual node {i} on forbidden node {s}")));
            }
        }
        for (i, path) in self.paths.iter().enumerate() {
            let l = VLinkId(i as u16);
            let vl = app.link(l);
            let mut at = self.node(vl.parent);
            let mut visited = vec![at];
            for &arc in path {
                if arc.index() >= substrate.arc_count() {
                    return Err(bad(format!("virtual link {i} uses missing arc {}", arc.0)));
                }
                let (from, to) = substrate.arc_endpoints(arc);
                if from != at {
                    return Err(bad(format!("virtual link {i} path is not contiguous")));
                }
                if visited.contains(&to) {
                    return Err(bad(format!("virtual link {i} path is not simple")));
                }
                if app.link_eta(l, arc.link()).is_forbidden() {
                    return Err(bad(format!("virtual link {i} on forbidden link {}", arc.link().0)));
                }
                visited.push(to);
                at = to;
            }
            if at != self.node(vl.child) {
                return Err(bad(format!("virtual link {i} path does not reach its child")));
            }
        }
        Ok(())
    }

    /// Loads this embedding puts on the substrate for a request of `size`.
    /// Zero loads are omitted.
    pub fn loads(
        &self,
        size: f64,
        app: &Application,
        substrate: &SubstrateNetwork,
    ) -> Result<LoadVector, String> {
        let mut raw = Vec::with_capacity(self.node_map.len() + self.paths.len() * 2);
        for (i, &s) in self.node_map.iter().enumerate() {
            let q = VNodeId(i as u16);
            let load = element_load(true, size, app.node_size(q), app.node_eta(q, s))?;
            if load != 0.0 {
                raw.push((substrate.node_element(s), load));
            }
        }
        for (i, path) in self.paths.iter().enumerate() {
            let l = VLinkId(i as u16);
            let d = app.link(l).size;
            for arc in path {
                let load = element_load(true, size, d, app.link_eta(l, arc.link()))?;
                if load != 0.0 {
                    raw.push((substrate.link_element(arc.link()), load));
                }
            }
        }
        Ok(merge_loads(raw))
    }

    /// Per-slot resource cost of a load vector.
    pub fn cost_of(loads: &LoadVector, substrate: &SubstrateNetwork) -> f64 {
        loads.iter().map(|&(e, v)| v * substrate.unit_cost(e)).sum()
    }

    /// `node_map` as `a;b;c` and paths as `0-2|` style strings for logs.
    pub fn format_node_map(&self) -> String {
        self.node_map
            .iter()
            .map(|n| n.0.to_string())
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn format_paths(&self) -> String {
        self.paths
            .iter()
            .map(|p| p.iter().map(|a| a.0.to_string()).collect::<Vec<_>>().join("-"))
            .collect::<Vec<_>>()
            .join("|")
    }
}
