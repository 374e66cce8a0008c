use std::time::Instant;

use crate::engine::{
    dijkstra, path_to, Candidate, Decision, EngineError, EngineOptions, RejectReason, RunOutput,
    Simulation,
};
use crate::model::{
    Application, ArcId, Embedding, LoadLedger, NodeId, Request, SubstrateNetwork, VLinkId,
};

/// Search-tree expansions allowed per request.
pub const DEFAULT_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FullSearchOutcome {
    pub best: Option<Candidate>,
    pub expansions: u64,
    pub exhausted: bool,
}

struct Search<'a> {
    request: &'a Request,
    app: &'a Application,
    substrate: &'a SubstrateNetwork,
    load: Vec<f64>,
    capacity: &'a [f64],
    order: &'a [VLinkId],
    /// Cheapest possible node cost of the VNFs still to place.
    bound: Vec<f64>,
    budget: u64,
    expansions: u64,
    exhausted: bool,
    best: Option<(f64, Vec<NodeId>, Vec<Vec<ArcId>>)>,
}

impl Search<'_> {
    fn node_load(&self, q: crate::model::VNodeId, w: NodeId) -> Option<f64> {
        let eta = self.app.node_eta(q, w);
        (!eta.is_forbidden()).then(|| self.request.size * self.app.node_size(q) * eta.0)
    }

    fn dfs(&mut self, depth: usize, node_map: &mut Vec<NodeId>, paths: &mut Vec<Vec<ArcId>>, cost: f64) {
        if self.exhausted {
            return;
        }
        if depth == self.order.len() {
            if self.best.as_ref().is_none_or(|b| cost < b.0) {
                self.best = Some((cost, node_map.clone(), paths.clone()));
            }
            return;
        }
        if self.best.as_ref().is_some_and(|b| cost + self.bound[depth] >= b.0) {
            return;
        }
        self.expansions += 1;
        if self.expansions > self.budget {
            self.exhausted = true;
            return;
        }
        let l = self.order[depth];
        let vlink = *self.app.link(l);
        let at = node_map[vlink.parent.index()];
        let (dist, pred) = {
            let (app, request, substrate, load, capacity) =
                (self.app, self.request, self.substrate, &self.load, self.capacity);
            dijkstra(substrate, at, |arc| {
                let eta = app.link_eta(l, arc.link());
                if eta.is_forbidden() {
                    return None;
                }
                let e = substrate.link_element(arc.link());
                let v = request.size * vlink.size * eta.0;
                if v != 0.0 && load[e.index()] + v > capacity[e.index()] {
                    return None;
                }
                Some(v * substrate.unit_cost(e))
            })
        };
        let mut options = Vec::new();
        for w in self.substrate.nodes().iter().map(|n| n.id) {
            if w != at && pred[w.index()].is_none() {
                continue;
            }
            let Some(v) = self.node_load(vlink.child, w) else { continue };
            let e = self.substrate.node_element(w);
            if v != 0.0 && self.load[e.index()] + v > self.capacity[e.index()] {
                continue;
            }
            options.push((cost + v * self.substrate.unit_cost(e) + dist[w.index()], w, v));
        }
        options.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (next, w, v) in options {
            if self.best.as_ref().is_some_and(|b| next + self.bound[depth + 1] >= b.0) {
                break;
            }
            let path = path_to(&pred, self.substrate, w);
            let mut saved = Vec::with_capacity(path.len() + 1);
            let e = self.substrate.node_element(w);
            saved.push((e, self.load[e.index()]));
            self.load[e.index()] += v;
            for arc in &path {
                let e = self.substrate.link_element(arc.link());
                saved.push((e, self.load[e.index()]));
                let eta = self.app.link_eta(l, arc.link());
                self.load[e.index()] += self.request.size * vlink.size * eta.0;
            }
            node_map[vlink.child.index()] = w;
            paths[l.index()] = path;
            self.dfs(depth + 1, node_map, paths, next);
            for (e, old) in saved.into_iter().rev() {
                self.load[e.index()] = old;
            }
            if self.exhausted {
                return;
            }
        }
    }
}

/// Cheapest embedding of `request` with VNFs placed independently, by
/// depth-first branch and bound over the virtual links in parent-first
/// order. Each link is routed on its cheapest admissible path. Stops after
/// `budget` expansions and returns the best embedding found so far.
pub fn full_embed(
    request: &Request,
    app: &Application,
    substrate: &SubstrateNetwork,
    ledger: &LoadLedger,
    budget: u64,
) -> FullSearchOutcome {
    let order = app.link_order();
    let mut bound = vec![0.0; order.len() + 1];
    for (i, &l) in order.iter().enumerate().rev() {
        let q = app.link(l).child;
        let cheapest = substrate
            .nodes()
            .iter()
            .filter(|n| !app.node_eta(q, n.id).is_forbidden())
            .map(|n| request.size * app.node_size(q) * app.node_eta(q, n.id).0 * n.unit_cost)
            .fold(f64::INFINITY, f64::min);
        bound[i] = bound[i + 1] + cheapest;
    }
    let mut search = Search {
        request,
        app,
        substrate,
        load: ledger.loads().to_vec(),
        capacity: substrate.capacities(),
        order,
        bound,
        budget,
        expansions: 0,
        exhausted: false,
        best: None,
    };
    let mut node_map = vec![request.origin; app.node_count()];
    let mut paths = vec![Vec::new(); app.link_count()];
    search.dfs(0, &mut node_map, &mut paths, 0.0);
    let best = search.best.and_then(|(_, node_map, paths)| {
        Candidate::new(Embedding { node_map, paths }, request, app, substrate)
            .filter(|c| ledger.fits(&c.loads))
    });
    FullSearchOutcome {
        best,
        expansions: search.expansions,
        exhausted: search.exhausted,
    }
}

/// Online baseline that embeds every request with [`full_embed`].
pub fn run_fullg(
    substrate: &SubstrateNetwork,
    apps: &[Application],
    requests: &[Request],
    options: EngineOptions,
    budget: u64,
) -> Result<RunOutput, EngineError> {
    let mut sim = Simulation::new(substrate, apps, requests, options)?;
    let started = Instant::now();
    for t in 0..sim.horizon() {
        sim.release(t);
        for i in sim.arrivals(t) {
            let r = *sim.request(i);
            let out = full_embed(&r, sim.app_of(i), substrate, &sim.ledger, budget);
            match out.best {
                Some(c) => sim.accept(t, i, c.embedding, c.loads, Decision::Greedy)?,
                None if out.exhausted => sim.reject(t, i, RejectReason::Budget),
                None => sim.reject(t, i, RejectReason::NoFit),
            }
        }
        sim.end_slot(t)?;
    }
    let ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(sim.finish(ms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::greedy_embed;
    use crate::engine::greedy_fixtures::{random_instance, request};
    use crate::model::fixtures::{link, node};
    use crate::model::{AppId, Tier};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Every node map, each link routed on its cheapest admissible path in
    /// link order, minimum total.
    fn enumerate(r: &Request, app: &Application, net: &SubstrateNetwork, ledger: &LoadLedger) -> Option<f64> {
        let k = app.node_count() - 1;
        let n = net.node_count();
        let mut best: Option<f64> = None;
        for code in 0..n.pow(k as u32) {
            let mut node_map = vec![r.origin];
            let mut c = code;
            for _ in 0..k {
                node_map.push(NodeId((c % n) as u32));
                c /= n;
            }
            let mut load = ledger.loads().to_vec();
            let mut ok = true;
            let mut paths = vec![Vec::new(); app.link_count()];
            for &l in app.link_order() {
                let vl = *app.link(l);
                let v = r.size * app.node_size(vl.child);
                let w = node_map[vl.child.index()];
                let e = net.node_element(w);
                if load[e.index()] + v > net.capacity(e) {
                    ok = false;
                    break;
                }
                load[e.index()] += v;
                let dem = r.size * vl.size;
                let (_, pred) = dijkstra(net, node_map[vl.parent.index()], |arc| {
                    let e = net.link_element(arc.link());
                    (dem == 0.0 || load[e.index()] + dem <= net.capacity(e)).then(|| dem * net.unit_cost(e))
                });
                if w != node_map[vl.parent.index()] && pred[w.index()].is_none() {
                    ok = false;
                    break;
                }
                let path = path_to(&pred, net, w);
                for a in &path {
                    load[net.link_element(a.link()).index()] += dem;
                }
                paths[l.index()] = path;
            }
            if !ok {
                continue;
            }
            let emb = Embedding { node_map, paths };
            let loads = emb.loads(r.size, app, net).unwrap();
            if !ledger.fits(&loads) {
                continue;
            }
            let cost = Embedding::cost_of(&loads, net);
            if best.is_none_or(|b| cost < b) {
                best = Some(cost);
            }
        }
        best
    }

    #[test]
    fn splits_vnfs_when_one_node_is_too_small() {
        // Neither node holds both VNFs; greedy fails, full search splits.
        let nodes = vec![node(0, Tier::Edge, 60.0, 1.0), node(1, Tier::Core, 60.0, 1.0)];
        let net = SubstrateNetwork::new(nodes, vec![link(0, 0, 1, 1e6, 1.0)]).unwrap();
        let app = Application::chain(AppId(0), &[50.0, 50.0], &[1.0, 1.0]).unwrap();
        let ledger = LoadLedger::new(&net);
        let r = request(0, 1.0);
        assert!(greedy_embed(&r, &app, &net, &ledger).is_none());
        let out = full_embed(&r, &app, &net, &ledger, DEFAULT_BUDGET);
        let c = out.best.unwrap();
        assert_eq!(c.cost, 101.0);
        assert!(!out.exhausted);
    }

    #[test]
    fn never_worse_than_greedy_and_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..60 {
            let (net, app, ledger, r) = random_instance(&mut rng);
            let full = full_embed(&r, &app, &net, &ledger, DEFAULT_BUDGET).best.map(|c| c.cost);
            if let Some(g) = greedy_embed(&r, &app, &net, &ledger) {
                assert!(full.unwrap() <= g.cost + 1e-9 * g.cost.max(1.0));
            }
            match (full, enumerate(&r, &app, &net, &ledger)) {
                (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{a} vs {b}"),
                (a, b) => assert_eq!(a.is_some(), b.is_some()),
            }
        }
    }

    #[test]
    fn budget_stops_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (net, app, ledger, r) = random_instance(&mut rng);
        let out = full_embed(&r, &app, &net, &ledger, 0);
        assert!(out.exhausted);
        assert!(out.best.is_none());
    }
}
