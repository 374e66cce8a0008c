//! Applications: rooted virtual networks whose root stands for the user.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::substrate::{LinkId, NodeId, SubstrateNetwork};
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AppId(pub u32);

impl AppId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for AppId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Virtual node index within one application. `VNodeId(0)` is the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VNodeId(pub u16);

impl VNodeId {
    pub const ROOT: VNodeId = VNodeId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VLinkId(pub u16);

impl VLinkId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AppKind {
    Chain,
    Tree,
    Accelerator,
    Gpu,
    Custom,
}

/// Directed parent -> child edge of the application tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualLink {
    pub parent: VNodeId,
    pub child: VNodeId,
    pub size: f64,
}

/// (In)efficiency coefficient. `Eta::FORBIDDEN` bans a placement outright.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Eta(pub f64);

impl Eta {
    pub const ONE: Eta = Eta(1.0);
    pub const FORBIDDEN: Eta = Eta(f64::INFINITY);

    pub fn is_forbidden(self) -> bool {
        self.0.is_infinite()
    }
}

impl Serialize for Eta {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.is_forbidden() {
            s.serialize_str("forbidden")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Eta {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v >= 0.0 => Ok(Eta(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(format!("negative eta {v}"))),
            Raw::Word(w) if w == "forbidden" => Ok(Eta::FORBIDDEN),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("unknown eta {w:?}"))),
        }
    }
}

/// One sparse override, serialized as
/// `{"vnode": 1, "snode": 4, "eta": 0.5}` or `{"vlink": 0, "slink": 2, "eta": "forbidden"}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaEntry {
    Node { vnode: VNodeId, snode: NodeId, eta: Eta },
    Link { vlink: VLinkId, slink: LinkId, eta: Eta },
}

/// Sparse eta table; unlisted pairs default to 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<EtaEntry>", into = "Vec<EtaEntry>")]
pub struct EfficiencyMap {
    nodes: BTreeMap<(VNodeId, NodeId), Eta>,
    links: BTreeMap<(VLinkId, LinkId), Eta>,
}

impl From<Vec<EtaEntry>> for EfficiencyMap {
    fn from(entries: Vec<EtaEntry>) -> Self {
        let mut map = EfficiencyMap::default();
        for e in entries {
            match e {
                EtaEntry::Node { vnode, snode, eta } => map.set_node(vnode, snode, eta),
                EtaEntry::Link { vlink, slink, eta } => map.set_link(vlink, slink, eta),
            }
        }
        map
    }
}

impl From<EfficiencyMap> for Vec<EtaEntry> {
    fn from(map: EfficiencyMap) -> Self {
        let nodes = map
            .nodes
            .into_iter()
            .map(|((vnode, snode), eta)| EtaEntry::Node { vnode, snode, eta });
        let links = map
            .links
            .into_iter()
            .map(|((vlink, slink), eta)| EtaEntry::Link { vlink, slink, eta });
        nodes.chain(links).collect()
    }
}

impl EfficiencyMap {
    pub fn set_node(&mut self, q: VNodeId, s: NodeId, eta: Eta) {
        self.nodes.insert((q, s), eta);
    }

    pub fn set_link(&mut self, q: VLinkId, s: LinkId, eta: Eta) {
        self.links.insert((q, s), eta);
    }

    pub fn node(&self, q: VNodeId, s: NodeId) -> Eta {
        if self.nodes.is_empty() {
            return Eta::ONE;
        }
        self.nodes.get(&(q, s)).copied().unwrap_or(Eta::ONE)
    }

    pub fn link(&self, q: VLinkId, s: LinkId) -> Eta {
        if self.links.is_empty() {
            return Eta::ONE;
        }
        self.links.get(&(q, s)).copied().unwrap_or(Eta::ONE)
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.links.is_empty()
    }

    pub fn len(&self) -> usize {
        self.nodes.len() + self.links.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ApplicationDoc {
    id: AppId,
    #[serde(default)]
    name: String,
    kind: AppKind,
    node_sizes: Vec<f64>,
    links: Vec<VirtualLink>,
    #[serde(default)]
    efficiency: EfficiencyMap,
}

/// A rooted tree of VNFs. Node 0 is the zero-size user root; every other node
/// has exactly one incoming virtual link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ApplicationDoc", into = "ApplicationDoc")]
pub struct Application {
    pub id: AppId,
    pub name: String,
    pub kind: AppKind,
    node_sizes: Vec<f64>,
    links: Vec<VirtualLink>,
    efficiency: EfficiencyMap,
    /// Links ordered so that every parent is placed before its children.
    link_order: Vec<VLinkId>,
    children: Vec<Vec<VLinkId>>,
}

impl TryFrom<ApplicationDoc> for Application {
    type Error = ModelError;

    fn try_from(doc: ApplicationDoc) -> Result<Self, Self::Error> {
        Application::new(doc.id, doc.name, doc.kind, doc.node_sizes, doc.links, doc.efficiency)
    }
}

impl From<Application> for ApplicationDoc {
    fn from(app: Application) -> Self {
        ApplicationDoc {
            id: app.id,
            name: app.name,
            kind: app.kind,
            node_sizes: app.node_sizes,
            links: app.links,
            efficiency: app.efficiency,
        }
    }
}

impl Application {
    pub fn new(
        id: AppId,
        name: String,
        kind: AppKind,
        node_sizes: Vec<f64>,
        links: Vec<VirtualLink>,
        efficiency: EfficiencyMap,
    ) -> Result<Self, ModelError> {
        let bad = |msg: String| ModelError::InvalidApplication(id, msg);
        if node_sizes.len() < 2 {
            return Err(bad("needs a root and at least one VNF".into()));
        }
        if node_sizes[0] != 0.0 {
            return Err(bad("root size must be 0".into()));
        }
        if node_sizes.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(bad("node sizes must be finite and >= 0".into()));
        }
        if links.len() != node_sizes.len() - 1 {
            return Err(bad("a tree over n nodes has n-1 links".into()));
        }
        let n = node_sizes.len();
        let mut has_parent = vec![false; n];
        let mut children = vec![Vec::new(); n];
        for (i, l) in links.iter().enumerate() {
            if l.parent.index() >= n || l.child.index() >= n || l.parent == l.child {
                return Err(bad(format!("link {i} has invalid endpoints")));
            }
            if !l.size.is_finite() || l.size < 0.0 {
                return Err(bad(format!("link {i} size must be finite and >= 0")));
            }
            if l.child == VNodeId::ROOT || has_parent[l.child.index()] {
                return Err(bad(format!("node {} has two parents", l.child.0)));
            }
            has_parent[l.child.index()] = true;
            children[l.parent.index()].push(VLinkId(i as u16));
        }
        // BFS from the root; every node must be reached.
        let mut link_order = Vec::with_capacity(links.len());
        let mut frontier = vec![VNodeId::ROOT];
        let mut reached = 1;
        while let Some(v) = frontier.pop() {
            for &l in &children[v.index()] {
                link_order.push(l);
                frontier.push(links[l.index()].child);
                reached += 1;
            }
        }
        if reached != n {
            return Err(bad("not every node is reachable from the root".into()));
        }
        for (vnode, _) in efficiency.nodes.keys() {
            if vnode.index() >= n {
                return Err(bad(format!("eta override for missing node {}", vnode.0)));
            }
        }
        for (vlink, _) in efficiency.links.keys() {
            if vlink.index() >= links.len() {
                return Err(bad(format!("eta override for missing link {}", vlink.0)));
            }
        }
        Ok(Application {
            id,
            name,
            kind,
            node_sizes,
            links,
            efficiency,
            link_order,
            children,
        })
    }

    /// Chain `root -> v1 -> ... -> vk` with the given VNF and link sizes.
    pub fn chain(id: AppId, vnf_sizes: &[f64], link_sizes: &[f64]) -> Result<Self, ModelError> {
        assert_eq!(vnf_sizes.len(), link_sizes.len());
        let node_sizes = std::iter::once(0.0).chain(vnf_sizes.iter().copied()).collect();
        let links = link_sizes
            .iter()
            .enumerate()
            .map(|(i, &size)| VirtualLink {
                parent: VNodeId(i as u16),
                child: VNodeId(i as u16 + 1),
                size,
            })
            .collect();
        Application::new(
            id,
            format!("chain-{}", id.0),
            AppKind::Chain,
            node_sizes,
            links,
            EfficiencyMap::default(),
        )
    }

    pub fn node_count(&self) -> usize {
        self.node_sizes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn node_size(&self, q: VNodeId) -> f64 {
        self.node_sizes[q.index()]
    }

    pub fn node_sizes(&self) -> &[f64] {
        &self.node_sizes
    }

    pub fn link(&self, l: VLinkId) -> &VirtualLink {
        &self.links[l.index()]
    }

    pub fn links(&self) -> &[VirtualLink] {
        &self.links
    }

    /// Links in an order where each parent endpoint is already placed.
    pub fn link_order(&self) -> &[VLinkId] {
        &self.link_order
    }

    pub fn child_links(&self, q: VNodeId) -> &[VLinkId] {
        &self.children[q.index()]
    }

    /// Non-root nodes.
    pub fn vnfs(&self) -> impl Iterator<Item = VNodeId> + '_ {
        (1..self.node_sizes.len()).map(|i| VNodeId(i as u16))
    }

    pub fn efficiency(&self) -> &EfficiencyMap {
        &self.efficiency
    }

    pub fn efficiency_mut(&mut self) -> &mut EfficiencyMap {
        &mut self.efficiency
    }

    pub fn node_eta(&self, q: VNodeId, s: NodeId) -> Eta {
        self.efficiency.node(q, s)
    }

    pub fn link_eta(&self, q: VLinkId, s: LinkId) -> Eta {
        self.efficiency.link(q, s)
    }

    /// Sum of VNF sizes, i.e. node load per unit of request demand at eta 1.
    pub fn node_footprint(&self) -> f64 {
        self.node_sizes.iter().sum()
    }

    /// Checks that eta overrides reference existing substrate elements.
    pub fn check_against(&self, substrate: &SubstrateNetwork) -> Result<(), ModelError> {
        for (_, s) in self.efficiency.nodes.keys() {
            if s.index() >= substrate.node_count() {
                return Err(ModelError::InvalidApplication(
                    self.id,
                    format!("eta override for missing substrate node {s}"),
                ));
            }
        }
        for (_, s) in self.efficiency.links.keys() {
            if s.index() >= substrate.link_count() {
                return Err(ModelError::InvalidApplication(
                    self.id,
                    format!("eta override for missing substrate link {}", s.0),
                ));
            }
        }
        Ok(())
    }
}
