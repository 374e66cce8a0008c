//! Physical substrate: datacenters (nodes) joined by undirected capacitated links.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u32);

impl LinkId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One traversal direction of an undirected link. Even ids run `a -> b`,
/// odd ids run `b -> a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArcId(pub u32);

impl ArcId {
    pub fn new(link: LinkId, reverse: bool) -> Self {
        ArcId(link.0 * 2 + reverse as u32)
    }

    pub fn link(self) -> LinkId {
        LinkId(self.0 / 2)
    }

    pub fn is_reverse(self) -> bool {
        self.0 % 2 == 1
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Flat index over all substrate elements: nodes first, then links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementId(pub u32);

impl ElementId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Element {
    Node(NodeId),
    Link(LinkId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Edge,
    Transport,
    Core,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Edge, Tier::Transport, Tier::Core];

    /// 0 for edge, 2 for core.
    pub fn level(self) -> usize {
        match self {
            Tier::Edge => 0,
            Tier::Transport => 1,
            Tier::Core => 2,
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tier::Edge => "edge",
            Tier::Transport => "transport",
            Tier::Core => "core",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstrateNode {
    pub id: NodeId,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub tier: Tier,
    pub capacity: f64,
    #[serde(rename = "cost")]
    pub unit_cost: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub gpu: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstrateLink {
    pub id: LinkId,
    pub a: NodeId,
    pub b: NodeId,
    pub tier: Tier,
    pub capacity: f64,
    #[serde(rename = "cost")]
    pub unit_cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SubstrateDoc {
    nodes: Vec<SubstrateNode>,
    links: Vec<SubstrateLink>,
}

/// The physical network. Node and link ids are dense (`id == position`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SubstrateDoc", into = "SubstrateDoc")]
pub struct SubstrateNetwork {
    nodes: Vec<SubstrateNode>,
    links: Vec<SubstrateLink>,
    /// Outgoing arcs per node, ordered by arc id.
    adjacency: Vec<Vec<ArcId>>,
    capacity: Vec<f64>,
    unit_cost: Vec<f64>,
}

impl TryFrom<SubstrateDoc> for SubstrateNetwork {
    type Error = ModelError;

    fn try_from(doc: SubstrateDoc) -> Result<Self, Self::Error> {
        SubstrateNetwork::new(doc.nodes, doc.links)
    }
}

impl From<SubstrateNetwork> for SubstrateDoc {
    fn from(net: SubstrateNetwork) -> Self {
        SubstrateDoc {
            nodes: net.nodes,
            links: net.links,
        }
    }
}

fn check_quantity(what: &str, id: u32, value: f64) -> Result<(), ModelError> {
    if !value.is_finite() || value < 0.0 {
        return Err(ModelError::InvalidSubstrate(format!(
            "{what} of element {id} must be finite and >= 0, got {value}"
        )));
    }
    Ok(())
}

impl SubstrateNetwork {
    /// Validates and indexes a substrate. Nodes and links may be given in any
    /// order but their ids must cover `0..n` exactly once.
    pub fn new(
        mut nodes: Vec<SubstrateNode>,
        mut links: Vec<SubstrateLink>,
    ) -> Result<Self, ModelError> {
        nodes.sort_by_key(|n| n.id);
        links.sort_by_key(|l| l.id);
        if nodes.is_empty() {
            return Err(ModelError::InvalidSubstrate("no nodes".into()));
        }
        for (i, n) in nodes.iter().enumerate() {
            if n.id.index() != i {
                return Err(ModelError::InvalidSubstrate(format!(
                    "node ids must be unique and dense, found {} at position {i}",
                    n.id
                )));
            }
            check_quantity("capacity", n.id.0, n.capacity)?;
            check_quantity("cost", n.id.0, n.unit_cost)?;
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (i, l) in links.iter().enumerate() {
            if l.id.index() != i {
                return Err(ModelError::InvalidSubstrate(format!(
                    "link ids must be unique and dense, found {} at position {i}",
                    l.id.0
                )));
            }
            if l.a.index() >= nodes.len() || l.b.index() >= nodes.len() {
                return Err(ModelError::InvalidSubstrate(format!(
                    "link {} references a missing node",
                    l.id.0
                )));
            }
            if l.a == l.b {
                return Err(ModelError::InvalidSubstrate(format!(
                    "link {} is a self loop",
                    l.id.0
                )));
            }
            check_quantity("capacity", l.id.0, l.capacity)?;
            check_quantity("cost", l.id.0, l.unit_cost)?;
            adjacency[l.a.index()].push(ArcId::new(l.id, false));
            adjacency[l.b.index()].push(ArcId::new(l.id, true));
        }
        let capacity = nodes
            .iter()
            .map(|n| n.capacity)
            .chain(links.iter().map(|l| l.capacity))
            .collect();
        let unit_cost = nodes
            .iter()
            .map(|n| n.unit_cost)
            .chain(links.iter().map(|l| l.unit_cost))
            .collect();
        let net = SubstrateNetwork {
            nodes,
            links,
            adjacency,
            capacity,
            unit_cost,
        };
        if !net.is_connected() {
            return Err(ModelError::Disconnected);
        }
        Ok(net)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([NodeId(0)]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &arc in &self.adjacency[v.index()] {
                let (_, w) = self.arc_endpoints(arc);
                if !seen[w.index()] {
                    seen[w.index()] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn nodes(&self) -> &[SubstrateNode] {
        &self.nodes
    }

    pub fn links(&self) -> &[SubstrateLink] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> &SubstrateNode {
        &self.nodes[id.index()]
    }

    pub fn link(&self, id: LinkId) -> &SubstrateLink {
        &self.links[id.index()]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn arc_count(&self) -> usize {
        self.links.len() * 2
    }

    pub fn element_count(&self) -> usize {
        self.nodes.len() + self.links.len()
    }

    pub fn node_element(&self, id: NodeId) -> ElementId {
        ElementId(id.0)
    }

    pub fn link_element(&self, id: LinkId) -> ElementId {
        ElementId(self.nodes.len() as u32 + id.0)
    }

    pub fn element(&self, id: ElementId) -> Element {
        let n = self.nodes.len() as u32;
        if id.0 < n {
            Element::Node(NodeId(id.0))
        } else {
            Element::Link(LinkId(id.0 - n))
        }
    }

    /// Capacity per flat element index.
    pub fn capacities(&self) -> &[f64] {
        &self.capacity
    }

    /// Unit cost per flat element index.
    pub fn unit_costs(&self) -> &[f64] {
        &self.unit_cost
    }

    pub fn capacity(&self, e: ElementId) -> f64 {
        self.capacity[e.index()]
    }

    pub fn unit_cost(&self, e: ElementId) -> f64 {
        self.unit_cost[e.index()]
    }

    /// Arcs leaving `v`.
    pub fn out_arcs(&self, v: NodeId) -> &[ArcId] {
        &self.adjacency[v.index()]
    }

    /// `(from, to)` of a directed arc.
    pub fn arc_endpoints(&self, arc: ArcId) -> (NodeId, NodeId) {
        let l = &self.links[arc.link().index()];
        if arc.is_reverse() {
            (l.b, l.a)
        } else {
            (l.a, l.b)
        }
    }

    pub fn nodes_in_tier(&self, tier: Tier) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(move |n| n.tier == tier).map(|n| n.id)
    }

    pub fn edge_nodes(&self) -> Vec<NodeId> {
        self.nodes_in_tier(Tier::Edge).collect()
    }
}
