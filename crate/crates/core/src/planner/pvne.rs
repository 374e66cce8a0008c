//! The plan LP: fractional multi-commodity embedding of aggregate demand with
//! quantized rejection.

use serde::{Deserialize, Serialize};

use super::aggregate::AggregateKey;
use super::lp::{LpModel, RowId, VarId};
use crate::model::{AppId, Application, ArcId, LinkId, SubstrateNetwork, VLinkId, VNodeId};

/// Cost of hosting every element of `app` on its most expensive admissible
/// substrate element.
pub fn default_psi(app: &Application, substrate: &SubstrateNetwork) -> f64 {
    let mut psi = 0.0;
    for q in app.vnfs() {
        let worst = substrate
            .nodes()
            .iter()
            .map(|n| (n.unit_cost, app.node_eta(q, n.id)))
            .filter(|(_, eta)| !eta.is_forbidden())
            .map(|(c, eta)| c * eta.0)
            .fold(0.0, f64::max);
        psi += app.node_size(q) * worst;
    }
    for (i, link) in app.links().iter().enumerate() {
        let l = VLinkId(i as u16);
        let worst = substrate
            .links()
            .iter()
            .map(|s| (s.unit_cost, app.link_eta(l, s.id)))
            .filter(|(_, eta)| !eta.is_forbidden())
            .map(|(c, eta)| c * eta.0)
            .fold(0.0, f64::max);
        psi += link.size * worst;
    }
    psi
}

/// Input to the LP for one aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandInput {
    pub key: AggregateKey,
    pub demand: f64,
    pub psi: f64,
}

/// Where the variables of one aggregate live in the LP.
#[derive(Debug, Clone)]
pub struct AggregateVars {
    pub input: DemandInput,
    /// `[virtual node][substrate node]`. The root only has its origin entry.
    pub node: Vec<Vec<Option<VarId>>>,
    /// `[virtual link][arc]`.
    pub flow: Vec<Vec<VarId>>,
    /// Rejection quantiles `p = 1..=P`.
    pub layers: Vec<VarId>,
    pub root: VarId,
}

#[derive(Debug, Clone)]
pub struct PvneModel {
    pub lp: LpModel,
    pub aggregates: Vec<AggregateVars>,
    /// Capacity row per flat element, if anything can load it.
    pub capacity_rows: Vec<Option<RowId>>,
}

impl PvneModel {
    /// Per-element loads implied by an LP solution.
    pub fn element_loads(&self, x: &[f64]) -> Vec<f64> {
        self.capacity_rows
            .iter()
            .map(|r| r.map_or(0.0, |r| self.lp.activity(r, x)))
            .collect()
    }

    /// Loads of a single aggregate, per flat element.
    pub fn aggregate_loads(
        &self,
        index: usize,
        x: &[f64],
        apps: &[Application],
        substrate: &SubstrateNetwork,
    ) -> Vec<f64> {
        let agg = &self.aggregates[index];
        let app = &apps[agg.input.key.app.index()];
        let d = agg.input.demand;
        let mut loads = vec![0.0; substrate.element_count()];
        for (q, row) in agg.node.iter().enumerate() {
            let q = VNodeId(q as u16);
            for (s, var) in row.iter().enumerate() {
                if let Some(v) = var {
                    let s = crate::model::NodeId(s as u32);
                    let eta = app.node_eta(q, s);
                    if !eta.is_forbidden() {
                        loads[substrate.node_element(s).index()] +=
                            d * app.node_size(q) * eta.0 * x[v.0];
                    }
                }
            }
        }
        for (l, row) in agg.flow.iter().enumerate() {
            let l = VLinkId(l as u16);
            for (a, v) in row.iter().enumerate() {
                let link = ArcId(a as u32).link();
                let eta = app.link_eta(l, link);
                if !eta.is_forbidden() {
                    loads[substrate.link_element(link).index()] +=
                        d * app.link(l).size * eta.0 * x[v.0];
                }
            }
        }
        loads
    }
}

/// Builds the plan LP for `inputs` (zero-demand inputs are skipped).
///
/// Per aggregate with demand `d`: node variables `y[q][s]` in `[0, 1]`, arc
/// flows `f[l][arc]` in `[0, 1]` and quantiles `z_p` in `[0, 1/P]`, with
/// `y[root][origin] + sum z = 1` and, for each virtual link `i -> j` and
/// substrate node `v`, `y[j][v] - y[i][v] - inflow + outflow = 0`. Each
/// element's capacity bounds `sum d D eta y` (both arc directions for links).
/// The objective adds resource cost and `psi d sum p z_p`.
pub fn build_pvne(
    substrate: &SubstrateNetwork,
    apps: &[Application],
    inputs: &[DemandInput],
    quantiles: usize,
) -> PvneModel {
    assert!(quantiles >= 1, "at least one rejection quantile");
    let mut lp = LpModel::default();
    let mut cap_terms: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); substrate.element_count()];
    let mut aggregates = Vec::new();
    let n_nodes = substrate.node_count();
    let p_width = 1.0 / quantiles as f64;

    for input in inputs.iter().filter(|i| i.demand > 0.0) {
        let AggregateKey { app: AppId(a), origin } = input.key;
        let app = &apps[a as usize];
        let d = input.demand;
        let tag = format!("a{a}_o{}", origin.0);

        let mut node = Vec::with_capacity(app.node_count());
        let mut root = None;
        for qi in 0..app.node_count() {
            let q = VNodeId(qi as u16);
            let mut row = vec![None; n_nodes];
            if q == VNodeId::ROOT {
                let v = lp.add_var(format!("y_{tag}_q0_s{}", origin.0), 0.0, 1.0, 0.0);
                row[origin.index()] = Some(v);
                root = Some(v);
            } else {
                for sn in substrate.nodes() {
                    let eta = app.node_eta(q, sn.id);
                    let name = format!("y_{tag}_q{qi}_s{}", sn.id.0);
                    let v = if eta.is_forbidden() {
                        lp.add_var(name, 0.0, 0.0, 0.0)
                    } else {
                        let coef = d * app.node_size(q) * eta.0;
                        let v = lp.add_var(name, 0.0, 1.0, coef * sn.unit_cost);
                        if coef != 0.0 {
                            cap_terms[substrate.node_element(sn.id).index()].push((v, coef));
                        }
                        v
                    };
                    row[sn.id.index()] = Some(v);
                }
            }
            node.push(row);
        }
        let root = root.expect("application has a root");

        let mut flow = Vec::with_capacity(app.link_count());
        for li in 0..app.link_count() {
            let l = VLinkId(li as u16);
            let size = app.link(l).size;
            let mut row = Vec::with_capacity(substrate.arc_count());
            for ai in 0..substrate.arc_count() {
                let arc = ArcId(ai as u32);
                let link: LinkId = arc.link();
                let eta = app.link_eta(l, link);
                let name = format!("f_{tag}_l{li}_a{ai}");
                let v = if eta.is_forbidden() {
                    lp.add_var(name, 0.0, 0.0, 0.0)
                } else {
                    let coef = d * size * eta.0;
                    let e = substrate.link_element(link);
                    let v = lp.add_var(name, 0.0, 1.0, coef * substrate.unit_cost(e));
                    if coef != 0.0 {
                        cap_terms[e.index()].push((v, coef));
                    }
                    v
                };
                row.push(v);
            }
            flow.push(row);
        }

        let layers: Vec<VarId> = (1..=quantiles)
            .map(|p| lp.add_var(format!("z_{tag}_p{p}"), 0.0, p_width, input.psi * d * p as f64))
            .collect();

        let mut coeffs = vec![(root, 1.0)];
        coeffs.extend(layers.iter().map(|&z| (z, 1.0)));
        lp.add_row(format!("root_{tag}"), coeffs, 1.0, 1.0);

        for li in 0..app.link_count() {
            let vl = app.link(VLinkId(li as u16));
            for sn in substrate.nodes() {
                let v = sn.id;
                let mut coeffs = Vec::new();
                if let Some(y) = node[vl.child.index()][v.index()] {
                    coeffs.push((y, 1.0));
                }
                if let Some(y) = node[vl.parent.index()][v.index()] {
                    coeffs.push((y, -1.0));
                }
                for &arc in substrate.out_arcs(v) {
                    coeffs.push((flow[li][arc.index()], 1.0));
                    // The reverse arc enters v.
                    let back = ArcId(arc.0 ^ 1);
                    coeffs.push((flow[li][back.index()], -1.0));
                }
                lp.add_row(format!("flow_{tag}_l{li}_v{}", v.0), coeffs, 0.0, 0.0);
            }
        }

        aggregates.push(AggregateVars {
            input: *input,
            node,
            flow,
            layers,
            root,
        });
    }

    let capacity_rows = cap_terms
        .into_iter()
        .enumerate()
        .map(|(e, terms)| {
            (!terms.is_empty()).then(|| {
                let cap = substrate.capacities()[e];
                lp.add_row(format!("cap_e{e}"), terms, f64::NEG_INFINITY, cap)
            })
        })
        .collect();

    PvneModel {
        lp,
        aggregates,
        capacity_rows,
    }
}
