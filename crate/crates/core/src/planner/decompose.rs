//! Flow decomposition of a fractional aggregate embedding into weighted
//! integral templates.

use serde::{Deserialize, Serialize};

use super::pvne::{AggregateVars, PvneModel};
use super::PlannerError;
use crate::model::{Application, ArcId, Embedding, NodeId, SubstrateNetwork, VLinkId, VNodeId};

/// Values at or below this are treated as zero during decomposition.
const EPS: f64 = 1e-9;
/// Leftover root mass above this means the flows were inconsistent.
const MAX_LEFTOVER: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub embedding: Embedding,
    pub weight: f64,
}

/// One source-to-sink piece of a virtual link's flow.
#[derive(Debug, Clone, PartialEq)]
struct Route {
    from: NodeId,
    to: NodeId,
    path: Vec<ArcId>,
    amount: f64,
}

/// Splits the flow of one virtual link into routes. `supply[v]` is the mass
/// of the parent placed at `v`, `demand[v]` that of the child.
fn decompose_link(
    substrate: &SubstrateNetwork,
    mut supply: Vec<f64>,
    mut demand: Vec<f64>,
    mut flow: Vec<f64>,
) -> Vec<Route> {
    let mut routes = Vec::new();
    for v in 0..supply.len() {
        let c = supply[v].min(demand[v]);
        if c > EPS {
            routes.push(Route {
                from: NodeId(v as u32),
                to: NodeId(v as u32),
                path: Vec::new(),
                amount: c,
            });
            supply[v] -= c;
            demand[v] -= c;
        }
    }
    for start in 0..supply.len() {
        while supply[start] > EPS {
            // Walk along positive arcs until a node with demand is reached,
            // cancelling any cycle met on the way.
            let mut path: Vec<ArcId> = Vec::new();
            let mut visited = vec![NodeId(start as u32)];
            let mut at = NodeId(start as u32);
            let mut stuck = false;
            while demand[at.index()] <= EPS {
                let next = substrate
                    .out_arcs(at)
                    .iter()
                    .copied()
                    .find(|a| flow[a.index()] > EPS);
                let Some(arc) = next else {
                    stuck = true;
                    break;
                };
                let (_, to) = substrate.arc_endpoints(arc);
                if let Some(pos) = visited.iter().position(|&n| n == to) {
                    let mut cycle: Vec<ArcId> = path.split_off(pos);
                    cycle.push(arc);
                    let m = cycle.iter().map(|a| flow[a.index()]).fold(f64::INFINITY, f64::min);
                    for a in &cycle {
                        flow[a.index()] -= m;
                    }
                    visited.truncate(pos + 1);
                    at = to;
                    continue;
                }
                path.push(arc);
                visited.push(to);
                at = to;
            }
            if stuck {
                break;
            }
            let m = path
                .iter()
                .map(|a| flow[a.index()])
                .fold(supply[start].min(demand[at.index()]), f64::min);
            for a in &path {
                flow[a.index()] -= m;
            }
            supply[start] -= m;
            demand[at.index()] -= m;
            routes.push(Route {
                from: NodeId(start as u32),
                to: at,
                path,
                amount: m,
            });
        }
    }
    routes.sort_by(|a, b| (a.from, a.to, &a.path).cmp(&(b.from, b.to, &b.path)));
    routes
}

/// Outcome of decomposing one aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub templates: Vec<Template>,
    pub allocated: f64,
    /// Allocated mass not covered by any template.
    pub leftover: f64,
}

/// Decomposes the solution of one aggregate. Templates are built by placing
/// virtual links parent-first, each time taking the lexicographically
/// smallest remaining route out of the parent's node; the template weight is
/// the smallest route amount used, which is then subtracted.
pub fn decompose_aggregate(
    vars: &AggregateVars,
    x: &[f64],
    app: &Application,
    substrate: &SubstrateNetwork,
) -> Result<Decomposition, PlannerError> {
    let n = substrate.node_count();
    let mass = |q: VNodeId| -> Vec<f64> {
        (0..n)
            .map(|s| vars.node[q.index()][s].map_or(0.0, |v| x[v.0].max(0.0)))
            .collect()
    };
    let mut routes: Vec<Vec<Route>> = (0..app.link_count())
        .map(|li| {
            let vl = app.link(VLinkId(li as u16));
            let flow = vars.flow[li].iter().map(|v| x[v.0].max(0.0)).collect();
            decompose_link(substrate, mass(vl.parent), mass(vl.child), flow)
        })
        .collect();

    let allocated = x[vars.root.0].max(0.0);
    let origin = vars.input.key.origin;
    let mut remaining = allocated;
    let mut templates = Vec::new();
    'outer: while remaining > EPS {
        let mut node_map = vec![origin; app.node_count()];
        let mut chosen = vec![0usize; app.link_count()];
        let mut weight = remaining;
        for &l in app.link_order() {
            let vl = app.link(l);
            let from = node_map[vl.parent.index()];
            let Some(idx) = routes[l.index()]
                .iter()
                .position(|r| r.from == from && r.amount > EPS)
            else {
                break 'outer;
            };
            let r = &routes[l.index()][idx];
            node_map[vl.child.index()] = r.to;
            weight = weight.min(r.amount);
            chosen[l.index()] = idx;
        }
        let paths = (0..app.link_count())
            .map(|li| routes[li][chosen[li]].path.clone())
            .collect();
        for (li, &idx) in chosen.iter().enumerate() {
            routes[li][idx].amount -= weight;
        }
        remaining -= weight;
        templates.push(Template {
            embedding: Embedding { node_map, paths },
            weight,
        });
    }
    let leftover = remaining.max(0.0);
    if leftover > MAX_LEFTOVER {
        return Err(PlannerError::Decomposition(format!(
            "aggregate (app {}, origin {}) left {leftover} of {allocated} undecomposed",
            vars.input.key.app, vars.input.key.origin
        )));
    }
    Ok(Decomposition {
        templates,
        allocated,
        leftover,
    })
}

/// Template loads `sum weight x d x loads(embedding)` per flat element.
pub fn template_loads(
    templates: &[Template],
    demand: f64,
    app: &Application,
    substrate: &SubstrateNetwork,
) -> Result<Vec<f64>, PlannerError> {
    let mut out = vec![0.0; substrate.element_count()];
    for t in templates {
        let loads = t
            .embedding
            .loads(demand, app, substrate)
            .map_err(PlannerError::Decomposition)?;
        for (e, v) in loads {
            out[e.index()] += t.weight * v;
        }
    }
    Ok(out)
}

/// Decomposes every aggregate of a solved model.
pub fn extract_templates(
    model: &PvneModel,
    x: &[f64],
    apps: &[Application],
    substrate: &SubstrateNetwork,
) -> Result<Vec<Decomposition>, PlannerError> {
    model
        .aggregates
        .iter()
        .map(|vars| decompose_aggregate(vars, x, &apps[vars.input.key.app.index()], substrate))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{link, node};
    use crate::model::{AppId, LinkId, Request, RequestId, Tier};
    use crate::planner::aggregate::AggregateKey;
    use crate::planner::pvne::{build_pvne, DemandInput};
    use crate::planner::solver::{HighsSolver, LpSolver};

    fn line3(cap1: f64, cap2: f64) -> SubstrateNetwork {
        let nodes = vec![
            node(0, Tier::Edge, 0.0, 50.0),
            node(1, Tier::Transport, cap1, 1.0),
            node(2, Tier::Core, cap2, 2.0),
        ];
        let links = vec![link(0, 0, 1, 1e9, 1.0), link(1, 1, 2, 1e9, 1.0)];
        SubstrateNetwork::new(nodes, links).unwrap()
    }

    fn solve(
        net: &SubstrateNetwork,
        app: &Application,
        d: f64,
    ) -> (PvneModel, Vec<f64>) {
        let input = DemandInput {
            key: AggregateKey { app: AppId(0), origin: NodeId(0) },
            demand: d,
            psi: 1e6,
        };
        let m = build_pvne(net, std::slice::from_ref(app), &[input], 4);
        let sol = HighsSolver::default().solve(&m.lp).unwrap();
        (m, sol.x)
    }

    #[test]
    fn integral_solution_gives_one_template() {
        let net = line3(1e9, 1e9);
        let app = Application::chain(AppId(0), &[10.0], &[1.0]).unwrap();
        let (m, x) = solve(&net, &app, 1.0);
        let dec = decompose_aggregate(&m.aggregates[0], &x, &app, &net).unwrap();
        assert_eq!(dec.templates.len(), 1);
        assert!((dec.templates[0].weight - dec.allocated).abs() < 1e-12);
        assert_eq!(dec.templates[0].embedding.node_map, vec![NodeId(0), NodeId(1)]);
    }

    #[test]
    fn split_vnf_gives_two_templates() {
        // Node 1 fits 60% of the VNF, the rest goes to the dearer node 2.
        let net = line3(6.0, 1e9);
        let app = Application::chain(AppId(0), &[10.0], &[1.0]).unwrap();
        let (m, x) = solve(&net, &app, 1.0);
        let dec = decompose_aggregate(&m.aggregates[0], &x, &app, &net).unwrap();
        let mut weights: Vec<(u32, f64)> = dec
            .templates
            .iter()
            .map(|t| (t.embedding.node_map[1].0, t.weight))
            .collect();
        weights.sort_by_key(|w| w.0);
        assert_eq!(weights.len(), 2);
        assert_eq!(weights[0].0, 1);
        assert!((weights[0].1 - 0.6).abs() < 1e-9);
        assert_eq!(weights[1].0, 2);
        assert!((weights[1].1 - 0.4).abs() < 1e-9);
        let path = &dec.templates.iter().find(|t| t.embedding.node_map[1] == NodeId(2)).unwrap().embedding.paths[0];
        assert_eq!(path, &vec![ArcId::new(LinkId(0), false), ArcId::new(LinkId(1), false)]);
    }

    #[test]
    fn reconstruction_matches_lp_loads_and_templates_are_valid() {
        let net = line3(15.0, 25.0);
        let app = Application::chain(AppId(0), &[10.0, 7.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        let (m, x) = solve(&net, &app, 2.0);
        let dec = decompose_aggregate(&m.aggregates[0], &x, &app, &net).unwrap();
        assert!(dec.leftover < 1e-6);
        let total: f64 = dec.templates.iter().map(|t| t.weight).sum();
        assert!((total - dec.allocated).abs() < 1e-6);
        let lp = m.aggregate_loads(0, &x, std::slice::from_ref(&app), &net);
        let tl = template_loads(&dec.templates, 2.0, &app, &net).unwrap();
        for (a, b) in lp.iter().zip(&tl) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
        }
        let nonzero = x.iter().filter(|v| **v > 1e-9).count();
        assert!(dec.templates.len() <= nonzero);
        let probe = Request {
            id: RequestId(0),
            app: AppId(0),
            origin: NodeId(0),
            size: 1.0,
            arrival: 0,
            duration: 1,
        };
        for t in &dec.templates {
            t.embedding.validate(&probe, &app, &net).unwrap();
        }
    }

    #[test]
    fn cycles_are_cancelled() {
        let nodes = (0..3).map(|i| node(i, Tier::Edge, 1.0, 1.0)).collect();
        let links = vec![link(0, 0, 1, 1.0, 1.0), link(1, 1, 2, 1.0, 1.0), link(2, 2, 0, 1.0, 1.0)];
        let net = SubstrateNetwork::new(nodes, links).unwrap();
        // 1.0 from 0 to 1 plus a 0.5 circulation 0 -> 1 -> 2 -> 0.
        let mut flow = vec![0.0; 6];
        flow[ArcId::new(LinkId(0), false).index()] = 1.5;
        flow[ArcId::new(LinkId(1), false).index()] = 0.5;
        flow[ArcId::new(LinkId(2), false).index()] = 0.5;
        let routes = decompose_link(&net, vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], flow);
        assert_eq!(routes.len(), 1);
        assert_eq!(routes[0].path, vec![ArcId::new(LinkId(0), false)]);
        assert!((routes[0].amount - 1.0).abs() < 1e-12);
    }
}
