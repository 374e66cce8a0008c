//! Tiered substrate construction.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::WorkloadError;
use crate::model::{LinkId, NodeId, SubstrateLink, SubstrateNetwork, SubstrateNode, Tier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "iris")]
    Iris,
    #[serde(rename = "citta-studi")]
    CittaStudi,
    #[serde(rename = "5gen")]
    FiveGen,
    #[serde(rename = "100n150e")]
    N100E150,
    /// Ten-node three-tier network sized for quick experiments.
    #[serde(rename = "desk10")]
    Desk10,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Iris,
        Preset::CittaStudi,
        Preset::FiveGen,
        Preset::N100E150,
        Preset::Desk10,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Iris => "iris",
            Preset::CittaStudi => "citta-studi",
            Preset::FiveGen => "5gen",
            Preset::N100E150 => "100n150e",
            Preset::Desk10 => "desk10",
        }
    }

    /// `(nodes, links)`.
    pub fn size(self) -> (usize, usize) {
        match self {
            Preset::Iris => (50, 64),
            Preset::CittaStudi => (30, 35),
            Preset::FiveGen => (78, 100),
            Preset::N100E150 => (100, 150),
            Preset::Desk10 => (10, 11),
        }
    }

    /// Tier per node and undirected edges of the base graph. The structure is
    /// fixed per preset; only costs depend on the topology seed.
    pub fn graph(self) -> (Vec<Tier>, Vec<(u32, u32)>) {
        match self {
            Preset::Desk10 => desk10(),
            _ => {
                let (n, m) = self.size();
                let salt = self.name().bytes().fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
                hierarchical(n, m, salt)
            }
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| WorkloadError::UnknownPreset(s.to_string()))
    }
}

/// Edge nodes 0-5, transport 6-8, core 9. Each transport node serves two edge
/// nodes and transports form a path. Edge nodes have a single uplink, so an
/// overloaded edge node cannot spill sideways.
fn desk10() -> (Vec<Tier>, Vec<(u32, u32)>) {
    let mut tiers = vec![Tier::Edge; 6];
    tiers.extend([Tier::Transport; 3]);
    tiers.push(Tier::Core);
    let edges = vec![
        (0, 6),
        (1, 6),
        (2, 7),
        (3, 7),
        (4, 8),
        (5, 8),
        (6, 9),
        (7, 9),
        (8, 9),
        (6, 7),
        (7, 8),
    ];
    (tiers, edges)
}

/// Core ring, each transport node hung off a core node, each edge node off a
/// transport node, then random extra links between nodes at most one tier
/// apart until `m` links exist.
fn hierarchical(n: usize, m: usize, salt: u64) -> (Vec<Tier>, Vec<(u32, u32)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(salt);
    let n_core = ((n as f64 * 0.1).round() as usize).max(1);
    let n_transport = ((n as f64 * 0.3).round() as usize).max(1);
    let mut tiers = vec![Tier::Core; n_core];
    tiers.extend(std::iter::repeat_n(Tier::Transport, n_transport));
    tiers.extend(std::iter::repeat_n(Tier::Edge, n - n_core - n_transport));
    // Put edge nodes first so their ids are the low ones.
    tiers.reverse();
    let ids = |t: Tier| -> Vec<u32> {
        tiers
            .iter()
            .enumerate()
            .filter(|(_, x)| **x == t)
            .map(|(i, _)| i as u32)
            .collect()
    };
    let (edge, transport, core) = (ids(Tier::Edge), ids(Tier::Transport), ids(Tier::Core));
    let mut set = BTreeSet::new();
    let add = |a: u32, b: u32, set: &mut BTreeSet<(u32, u32)>| set.insert((a.min(b), a.max(b)));
    for w in core.windows(2) {
        add(w[0], w[1], &mut set);
    }
    if core.len() > 2 {
        add(core[0], core[core.len() - 1], &mut set);
    }
    for (i, &t) in transport.iter().enumerate() {
        add(t, core[i % core.len()], &mut set);
    }
    for &e in &edge {
        let t = *transport.choose(&mut rng).unwrap();
        add(e, t, &mut set);
    }
    let mut guard = 0;
    while set.len() < m && guard < 100_000 {
        guard += 1;
        let a = rng.random_range(0..n as u32);
        let b = rng.random_range(0..n as u32);
        if a == b || tiers[a as usize].level().abs_diff(tiers[b as usize].level()) > 1 {
            continue;
        }
        add(a, b, &mut set);
    }
    (tiers, set.into_iter().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierParams {
    pub node_capacity: f64,
    pub link_capacity: f64,
    pub node_cost: f64,
    pub link_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierTable {
    pub edge: TierParams,
    pub transport: TierParams,
    pub core: TierParams,
}

impl TierTable {
    pub fn get(&self, tier: Tier) -> &TierParams {
        match tier {
            Tier::Edge => &self.edge,
            Tier::Transport => &self.transport,
            Tier::Core => &self.core,
        }
    }
}

impl Default for TierTable {
    fn default() -> Self {
        TierTable {
            edge: TierParams {
                node_capacity: 200_000.0,
                link_capacity: 100_000.0,
                node_cost: 50.0,
                link_cost: 1.0,
            },
            transport: TierParams {
                node_capacity: 600_000.0,
                link_capacity: 300_000.0,
                node_cost: 10.0,
                link_cost: 1.0,
            },
            core: TierParams {
                node_capacity: 1_800_000.0,
                link_capacity: 900_000.0,
                node_cost: 1.0,
                link_cost: 1.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaseGraph {
    Preset { name: Preset },
    /// Imported graph: one tier per node and undirected `[a, b]` pairs.
    EdgeList { tiers: Vec<Tier>, edges: Vec<(u32, u32)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub base: BaseGraph,
    #[serde(default)]
    pub tiers: TierTable,
    /// Node cost is drawn uniformly from `[lo, hi] x` the tier mean.
    #[serde(default = "default_jitter")]
    pub cost_jitter: (f64, f64),
    /// Tiers whose nodes host GPUs.
    #[serde(default = "default_gpu_tiers")]
    pub gpu_tiers: Vec<Tier>,
    #[serde(default)]
    pub seed: u64,
}

fn default_jitter() -> (f64, f64) {
    (0.5, 1.5)
}

fn default_gpu_tiers() -> Vec<Tier> {
    vec![Tier::Core]
}

impl TopologySpec {
    pub fn preset(name: Preset, seed: u64) -> Self {
        TopologySpec {
            base: BaseGraph::Preset { name },
            tiers: TierTable::default(),
            cost_jitter: default_jitter(),
            gpu_tiers: default_gpu_tiers(),
            seed,
        }
    }
}

/// Builds the substrate. Node capacity and mean cost come from the node's
/// tier; a link takes the parameters of its lower (closer to edge) endpoint
/// tier.
pub fn build_topology(spec: &TopologySpec) -> Result<SubstrateNetwork, WorkloadError> {
    let (tiers, edges) = match &spec.base {
        BaseGraph::Preset { name } => name.graph(),
        BaseGraph::EdgeList { tiers, edges } => (tiers.clone(), edges.clone()),
    };
    let (lo, hi) = spec.cost_jitter;
    if !(0.0..=hi).contains(&lo) || !hi.is_finite() {
        return Err(WorkloadError::InvalidSpec(format!("cost jitter range [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let nodes = tiers
        .iter()
        .enumerate()
        .map(|(i, &tier)| {
            let p = spec.tiers.get(tier);
            let factor = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            SubstrateNode {
                id: NodeId(i as u32),
                name: String::new(),
                tier,
                capacity: p.node_capacity,
                unit_cost: p.node_cost * factor,
                gpu: spec.gpu_tiers.contains(&tier),
            }
        })
        .collect();
    let mut links = Vec::with_capacity(edges.len());
    for (i, &(a, b)) in edges.iter().enumerate() {
        let (ta, tb) = match (tiers.get(a as usize), tiers.get(b as usize)) {
            (Some(ta), Some(tb)) => (*ta, *tb),
            _ => {
                return Err(WorkloadError::InvalidSpec(format!(
                    "edge ({a}, {b}) references a missing node"
                )))
            }
        };
        let tier = if ta.level() <= tb.level() { ta } else { tb };
        let p = spec.tiers.get(tier);
        links.push(SubstrateLink {
            id: LinkId(i as u32),
            a: NodeId(a),
            b: NodeId(b),
            tier,
            capacity: p.link_capacity,
            unit_cost: p.link_cost,
        });
    }
    Ok(SubstrateNetwork::new(nodes, links)?)
}
