use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use super::greedy::{greedy_embed, Candidate};
use super::sim::{Decision, EngineOptions, RejectReason, RunOutput, Simulation};
use super::EngineError;
use crate::model::{Application, ElementId, LoadLedger, LoadVector, Request, RequestId, SubstrateNetwork};
use crate::planner::{AggregateKey, Plan};

const EPS: f64 = 1e-9;

/// Plan-side choice for one arriving request.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanChoice {
    /// A template with enough residual weight; fits the substrate as is.
    Planned { aggregate: usize, template: usize, candidate: Candidate },
    /// Same, after preempting `victims`.
    PlannedWithPreemption {
        aggregate: usize,
        template: usize,
        candidate: Candidate,
        victims: Vec<RequestId>,
    },
    /// A template with some residual weight, used beyond the plan.
    Borrowed { aggregate: usize, template: usize, candidate: Candidate },
    /// Nothing usable in the plan.
    None,
}

/// OLIVE state on top of a plan: template residual weights and the index of
/// requests that may be preempted.
#[derive(Debug)]
pub struct Olive<'p> {
    plan: &'p Plan,
    residual: Vec<Vec<f64>>,
    /// Planned request -> (aggregate, template, weight taken).
    planned: HashMap<RequestId, (usize, usize, f64)>,
    /// Active non-planned requests per element.
    borrowers: Vec<BTreeSet<RequestId>>,
    /// With an empty plan: skip the search while every node is too full.
    short_circuit: bool,
    min_footprint: Vec<f64>,
}

impl<'p> Olive<'p> {
    pub fn new(plan: &'p Plan, substrate: &SubstrateNetwork, apps: &[Application]) -> Self {
        let min_footprint = apps
            .iter()
            .map(|app| {
                substrate
                    .nodes()
                    .iter()
                    .filter(|n| app.vnfs().all(|q| !app.node_eta(q, n.id).is_forbidden()))
                    .map(|n| app.vnfs().map(|q| app.node_size(q) * app.node_eta(q, n.id).0).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        Olive {
            plan,
            residual: plan
                .aggregates
                .iter()
                .map(|a| a.templates.iter().map(|t| t.weight).collect())
                .collect(),
            planned: HashMap::new(),
            borrowers: vec![BTreeSet::new(); substrate.element_count()],
            short_circuit: false,
            min_footprint,
        }
    }

    pub fn with_short_circuit(mut self, on: bool) -> Self {
        self.short_circuit = on;
        self
    }

    pub fn residual(&self, aggregate: usize, template: usize) -> f64 {
        self.residual[aggregate][template]
    }

    pub fn is_planned(&self, id: RequestId) -> bool {
        self.planned.contains_key(&id)
    }

    /// Looks for a plan-based embedding of `r`. Case (i) templates are tried
    /// best fit first (smallest sufficient residual), then with preemption;
    /// otherwise the template with the largest residual is borrowed.
    pub fn plan_embed(
        &self,
        r: &Request,
        app: &Application,
        substrate: &SubstrateNetwork,
        ledger: &LoadLedger,
    ) -> PlanChoice {
        let Some(a) = self.plan.position(AggregateKey::of(r)) else {
            return PlanChoice::None;
        };
        let agg = &self.plan.aggregates[a];
        if agg.demand <= 0.0 || agg.templates.is_empty() {
            return PlanChoice::None;
        }
        let res = &self.residual[a];
        let candidate = |k: usize| Candidate::new(agg.templates[k].embedding.clone(), r, app, substrate);

        let mut covering: Vec<usize> = (0..res.len())
            .filter(|&k| res[k] * agg.demand >= r.size - EPS)
            .collect();
        covering.sort_by(|&x, &y| res[x].total_cmp(&res[y]).then(x.cmp(&y)));
        let covering: Vec<(usize, Candidate)> = covering
            .into_iter()
            .filter_map(|k| candidate(k).map(|c| (k, c)))
            .collect();
        if let Some((k, c)) = covering.iter().find(|(_, c)| ledger.fits(&c.loads)) {
            return PlanChoice::Planned { aggregate: a, template: *k, candidate: c.clone() };
        }
        for (k, c) in &covering {
            if let Some(victims) = self.select_victims(ledger, &c.loads) {
                return PlanChoice::PlannedWithPreemption {
                    aggregate: a,
                    template: *k,
                    candidate: c.clone(),
                    victims,
                };
            }
        }

        let mut partial: Vec<usize> = (0..res.len()).filter(|&k| res[k] > EPS).collect();
        partial.sort_by(|&x, &y| res[y].total_cmp(&res[x]).then(x.cmp(&y)));
        for k in partial {
            if let Some(c) = candidate(k) {
                if ledger.fits(&c.loads) {
                    return PlanChoice::Borrowed { aggregate: a, template: k, candidate: c };
                }
            }
        }
        PlanChoice::None
    }

    /// Non-planned requests whose removal lets `loads` fit, or `None`.
    ///
    /// Victims are picked by how much of the remaining deficit they free
    /// (ties to the lower id), then redundant ones are dropped again in
    /// reverse order.
    pub fn select_victims(&self, ledger: &LoadLedger, loads: &LoadVector) -> Option<Vec<RequestId>> {
        let deficits = ledger.deficits(loads);
        if deficits.is_empty() {
            return Some(Vec::new());
        }
        let pool: BTreeSet<RequestId> = deficits
            .iter()
            .flat_map(|(e, _)| self.borrowers[e.index()].iter().copied())
            .collect();
        let share = |id: RequestId| -> Vec<f64> {
            let alloc = ledger.allocation(id).expect("borrower index out of sync");
            deficits
                .iter()
                .map(|(e, _)| element_share(&alloc.loads, *e))
                .collect()
        };
        let mut pool: Vec<(RequestId, Vec<f64>)> = pool.into_iter().map(|id| (id, share(id))).collect();
        let need: Vec<f64> = deficits.iter().map(|d| d.1).collect();
        let mut remaining = need.clone();
        let mut chosen: Vec<(RequestId, Vec<f64>)> = Vec::new();

        let take_best = |pool: &mut Vec<(RequestId, Vec<f64>)>, remaining: &[f64], capped: bool| {
            let gain = |s: &[f64]| -> f64 {
                s.iter()
                    .zip(remaining)
                    .map(|(v, r)| if capped { v.min(r.max(0.0)) } else { *v })
                    .sum()
            };
            let mut best: Option<(usize, f64)> = None;
            for (i, (_, s)) in pool.iter().enumerate() {
                let g = gain(s);
                if g > 0.0 && best.is_none_or(|(_, b)| g > b) {
                    best = Some((i, g));
                }
            }
            best.map(|(i, _)| pool.remove(i))
        };

        while remaining.iter().any(|&r| r > 0.0) {
            let pick = take_best(&mut pool, &remaining, true)?;
            for (r, v) in remaining.iter_mut().zip(&pick.1) {
                *r -= v;
            }
            chosen.push(pick);
        }
        let mut i = chosen.len();
        while i > 0 {
            i -= 1;
            let covered = (0..need.len()).all(|j| {
                let freed: f64 = chosen
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != i)
                    .map(|(_, c)| c.1[j])
                    .sum();
                freed >= need[j]
            });
            if covered {
                chosen.remove(i);
            }
        }
        // The deficit arithmetic above is approximate; confirm with the
        // ledger's own arithmetic and widen the set if round-off bites.
        let mut ids: Vec<RequestId> = chosen.iter().map(|c| c.0).collect();
        loop {
            if ledger.fits_after_removing(&ids, loads) {
                return Some(ids);
            }
            let pick = take_best(&mut pool, &need, false)?;
            ids.push(pick.0);
        }
    }

    fn admit(
        &mut self,
        sim: &mut Simulation<'_>,
        t: u32,
        i: usize,
        candidate: Candidate,
        decision: Decision,
    ) -> Result<(), EngineError> {
        let id = sim.request(i).id;
        if decision != Decision::Planned {
            for &(e, _) in &candidate.loads {
                self.borrowers[e.index()].insert(id);
            }
        }
        sim.accept(t, i, candidate.embedding, candidate.loads, decision)
    }

    fn forget(&mut self, id: RequestId, loads: &LoadVector) {
        if let Some((a, k, taken)) = self.planned.remove(&id) {
            let weight = self.plan.aggregates[a].templates[k].weight;
            self.residual[a][k] = (self.residual[a][k] + taken).min(weight);
        } else {
            for &(e, _) in loads {
                self.borrowers[e.index()].remove(&id);
            }
        }
    }

    fn saturated(&self, r: &Request, max_residual: f64) -> bool {
        // The margin keeps the shortcut from rejecting a request that the
        // search would place after a different rounding of the same sum.
        max_residual < r.size * self.min_footprint[r.app.index()] * (1.0 - 1e-9)
    }

    /// Handles one arrival.
    pub fn arrive(&mut self, sim: &mut Simulation<'_>, t: u32, i: usize, max_residual: f64) -> Result<(), EngineError> {
        let r = *sim.request(i);
        let app = sim.app_of(i);
        if self.short_circuit && self.saturated(&r, max_residual) {
            sim.reject(t, i, RejectReason::Saturated);
            return Ok(());
        }
        match self.plan_embed(&r, app, sim.substrate, &sim.ledger) {
            PlanChoice::Planned { aggregate, template, candidate } => {
                self.take(r.id, r.size, aggregate, template);
                self.admit(sim, t, i, candidate, Decision::Planned)
            }
            PlanChoice::PlannedWithPreemption { aggregate, template, candidate, victims } => {
                for v in victims {
                    let alloc = sim.preempt(t, v)?;
                    self.forget(v, &alloc.loads);
                }
                self.take(r.id, r.size, aggregate, template);
                self.admit(sim, t, i, candidate, Decision::Planned)
            }
            PlanChoice::Borrowed { candidate, .. } => self.admit(sim, t, i, candidate, Decision::Borrowed),
            PlanChoice::None => match greedy_embed(&r, app, sim.substrate, &sim.ledger) {
                Some(c) => self.admit(sim, t, i, c, Decision::Greedy),
                None => {
                    sim.reject(t, i, RejectReason::NoFit);
                    Ok(())
                }
            },
        }
    }

    fn take(&mut self, id: RequestId, size: f64, a: usize, k: usize) {
        let want = size / self.plan.aggregates[a].demand;
        let taken = want.min(self.residual[a][k]).max(0.0);
        self.residual[a][k] -= taken;
        self.planned.insert(id, (a, k, taken));
    }

    /// Template residuals stay within `[0, weight]` and the borrower index
    /// matches the ledger.
    pub fn check(&self, ledger: &LoadLedger) -> Result<(), String> {
        for (a, agg) in self.plan.aggregates.iter().enumerate() {
            for (k, t) in agg.templates.iter().enumerate() {
                let r = self.residual[a][k];
                if r < -EPS || r > t.weight + EPS {
                    return Err(format!("template residual {r} outside [0, {}]", t.weight));
                }
            }
        }
        for (e, set) in self.borrowers.iter().enumerate() {
            for id in set {
                if !ledger.contributors(ElementId(e as u32)).contains(id) || self.planned.contains_key(id) {
                    return Err(format!("stale borrower {id} on element {e}"));
                }
            }
        }
        Ok(())
    }

    pub fn run(
        &mut self,
        substrate: &SubstrateNetwork,
        apps: &[Application],
        requests: &[Request],
        options: EngineOptions,
    ) -> Result<RunOutput, EngineError> {
        let mut sim = Simulation::new(substrate, apps, requests, options)?;
        let started = Instant::now();
        for t in 0..sim.horizon() {
            for (id, alloc) in sim.release(t) {
                self.forget(id, &alloc.loads);
            }
            let max_residual = if self.short_circuit {
                substrate
                    .nodes()
                    .iter()
                    .map(|n| sim.ledger.residual(substrate.node_element(n.id)))
                    .fold(f64::NEG_INFINITY, f64::max)
            } else {
                f64::INFINITY
            };
            for i in sim.arrivals(t) {
                self.arrive(&mut sim, t, i, max_residual)?;
            }
            sim.end_slot(t)?;
            if sim.checks_enabled() {
                self.check(&sim.ledger)
                    .map_err(|detail| EngineError::Invariant { slot: t, detail })?;
            }
        }
        let ms = started.elapsed().as_secs_f64() * 1e3;
        Ok(sim.finish(ms))
    }
}

fn element_share(loads: &LoadVector, e: ElementId) -> f64 {
    loads
        .binary_search_by_key(&e, |p| p.0)
        .map_or(0.0, |i| loads[i].1)
}

/// Runs OLIVE with `plan` over `requests`.
pub fn run_olive(
    substrate: &SubstrateNetwork,
    apps: &[Application],
    plan: &Plan,
    requests: &[Request],
    options: EngineOptions,
) -> Result<RunOutput, EngineError> {
    Olive::new(plan, substrate, apps).run(substrate, apps, requests, options)
}

/// Greedy-only baseline: OLIVE with an empty plan.
pub fn run_quickg(
    substrate: &SubstrateNetwork,
    apps: &[Application],
    requests: &[Request],
    options: EngineOptions,
) -> Result<RunOutput, EngineError> {
    let plan = Plan::empty(Vec::new());
    Olive::new(&plan, substrate, apps)
        .with_short_circuit(true)
        .run(substrate, apps, requests, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{link, node};
    use crate::model::{AppId, ArcId, Embedding, LinkId, NodeId, Tier};
    use crate::planner::{PlanAggregate, Template};

    fn net() -> SubstrateNetwork {
        let nodes = vec![node(0, Tier::Edge, 100.0, 10.0), node(1, Tier::Core, 100.0, 1.0)];
        SubstrateNetwork::new(nodes, vec![link(0, 0, 1, 1000.0, 0.1)]).unwrap()
    }

    fn apps() -> Vec<Application> {
        vec![Application::chain(AppId(0), &[1.0], &[1.0]).unwrap()]
    }

    /// Aggregate (app 0, node 0) with demand 10: 0.6 in the core, 0.4 local.
    fn plan() -> Plan {
        let core = Embedding {
            node_map: vec![NodeId(0), NodeId(1)],
            paths: vec![vec![ArcId::new(LinkId(0), false)]],
        };
        let local = Embedding { node_map: vec![NodeId(0), NodeId(0)], paths: vec![vec![]] };
        let mut plan = Plan::empty(vec![100.0]);
        plan.aggregates.push(PlanAggregate {
            key: AggregateKey { app: AppId(0), origin: NodeId(0) },
            members: 1,
            demand: 10.0,
            ci: (10.0, 10.0),
            psi: 100.0,
            allocated: 1.0,
            layers: vec![1.0],
            templates: vec![Template { embedding: core, weight: 0.6 }, Template { embedding: local, weight: 0.4 }],
            y: vec![],
            flows: vec![],
        });
        plan
    }

    fn req(id: u64, origin: u32, size: f64, arrival: u32, duration: u32) -> Request {
        Request { id: RequestId(id), app: AppId(0), origin: NodeId(origin), size, arrival, duration }
    }

    fn template_of(choice: &PlanChoice) -> (&'static str, usize) {
        match choice {
            PlanChoice::Planned { template, .. } => ("planned", *template),
            PlanChoice::PlannedWithPreemption { template, .. } => ("preempt", *template),
            PlanChoice::Borrowed { template, .. } => ("borrowed", *template),
            PlanChoice::None => ("none", usize::MAX),
        }
    }

    #[test]
    fn plan_embed_cases() {
        let (net, apps, plan) = (net(), apps(), plan());
        let olive = Olive::new(&plan, &net, &apps);
        let ledger = LoadLedger::new(&net);
        let pick = |r: Request| template_of(&olive.plan_embed(&r, &apps[0], &net, &ledger));
        // Both templates cover 3 CU; the tighter one wins.
        assert_eq!(pick(req(0, 0, 3.0, 0, 1)), ("planned", 1));
        // Only the core template covers 5 CU.
        assert_eq!(pick(req(0, 0, 5.0, 0, 1)), ("planned", 0));
        // Nothing covers 8 CU: borrow from the largest residual.
        assert_eq!(pick(req(0, 0, 8.0, 0, 1)), ("borrowed", 0));
        // Unplanned class.
        assert_eq!(pick(req(0, 1, 1.0, 0, 1)), ("none", usize::MAX));
    }

    #[test]
    fn residual_is_taken_and_restored() {
        let (net, apps, plan) = (net(), apps(), plan());
        let mut olive = Olive::new(&plan, &net, &apps);
        let reqs = vec![req(0, 0, 5.0, 0, 3), req(1, 0, 3.0, 1, 1), req(2, 0, 4.0, 1, 1)];
        let opts = EngineOptions { check_invariants: true, horizon: Some(2) };
        let out = olive.run(&net, &apps, &reqs, opts).unwrap();
        let got: Vec<Option<Decision>> = out.records.iter().map(|r| r.admission).collect();
        // r1 finds the local template, r2 must borrow from the core one.
        assert_eq!(got, vec![Some(Decision::Planned), Some(Decision::Planned), Some(Decision::Borrowed)]);
        assert!((olive.residual(0, 0) - 0.1).abs() < 1e-12);
        assert!((olive.residual(0, 1) - 0.1).abs() < 1e-12);

        let opts = EngineOptions { check_invariants: true, horizon: Some(10) };
        let mut olive = Olive::new(&plan, &net, &apps);
        let out = olive.run(&net, &apps, &reqs, opts).unwrap();
        assert!((olive.residual(0, 0) - 0.6).abs() < 1e-12);
        assert!((olive.residual(0, 1) - 0.4).abs() < 1e-12);
        assert!(out.cost_attribution_gap() < 1e-12);
    }

    #[test]
    fn planned_request_preempts_borrowers() {
        let (net, apps, plan) = (net(), apps(), plan());
        let mut olive = Olive::new(&plan, &net, &apps);
        // Node 1 is filled by unplanned requests from node 1 itself; then a
        // planned request for the core template arrives.
        let reqs = vec![
            req(0, 1, 60.0, 0, 5),
            req(1, 1, 40.0, 0, 5),
            req(2, 0, 5.0, 1, 5),
        ];
        let opts = EngineOptions { check_invariants: true, horizon: Some(3) };
        let out = olive.run(&net, &apps, &reqs, opts).unwrap();
        assert_eq!(out.records[0].admission, Some(Decision::Greedy));
        assert_eq!(out.records[2].admission, Some(Decision::Planned));
        // Either borrower frees enough; the tie goes to the lower id.
        assert_eq!(out.records[0].preempted_at, Some(1));
        assert_eq!(out.records[1].preempted_at, None);
        assert_eq!(out.count(Decision::Preempted), 1);
    }

    fn borrower_fixture(loads: &[(u64, Vec<(u32, f64)>)], planned: &[(u64, Vec<(u32, f64)>)]) -> (LoadLedger, Olive<'static>) {
        static EMPTY: std::sync::OnceLock<Plan> = std::sync::OnceLock::new();
        let plan = EMPTY.get_or_init(|| Plan::empty(vec![]));
        let net = net();
        let mut ledger = LoadLedger::new(&net);
        let mut olive = Olive::new(plan, &net, &apps());
        for (id, l) in loads {
            let l: LoadVector = l.iter().map(|&(e, v)| (ElementId(e), v)).collect();
            for (e, _) in &l {
                olive.borrowers[e.index()].insert(RequestId(*id));
            }
            ledger.allocate(RequestId(*id), l, 10).unwrap();
        }
        for (id, l) in planned {
            let l: LoadVector = l.iter().map(|&(e, v)| (ElementId(e), v)).collect();
            olive.planned.insert(RequestId(*id), (0, 0, 0.0));
            ledger.allocate(RequestId(*id), l, 10).unwrap();
        }
        (ledger, olive)
    }

    #[test]
    fn victims_cover_only_deficit_elements() {
        // Node 1 (element 1) is full: b1 5, b2 3, planned 92. b3 sits on node 0.
        let (ledger, olive) = borrower_fixture(
            &[(1, vec![(1, 5.0)]), (2, vec![(1, 3.0)]), (3, vec![(0, 4.0)])],
            &[(9, vec![(1, 92.0)])],
        );
        let want: LoadVector = vec![(ElementId(1), 6.0)];
        assert_eq!(olive.select_victims(&ledger, &want), Some(vec![RequestId(1), RequestId(2)]));
        // 9 CU cannot be freed without touching the planned request.
        let want: LoadVector = vec![(ElementId(1), 9.0)];
        assert_eq!(olive.select_victims(&ledger, &want), None);
        assert!(ledger.fits(&vec![(ElementId(0), 1.0)]));
    }

    #[test]
    fn redundant_victims_are_pruned() {
        // Deficit 2 on each node. b3 frees 1.5 on both and is picked first,
        // but b1 and b2 alone suffice.
        let (ledger, olive) = borrower_fixture(
            &[
                (1, vec![(0, 2.0)]),
                (2, vec![(1, 2.0)]),
                (3, vec![(0, 1.5), (1, 1.5)]),
            ],
            &[(9, vec![(0, 96.5), (1, 96.5)])],
        );
        let want: LoadVector = vec![(ElementId(0), 2.0), (ElementId(1), 2.0)];
        assert_eq!(olive.select_victims(&ledger, &want), Some(vec![RequestId(1), RequestId(2)]));
    }

    #[test]
    fn quickg_short_circuit_agrees_with_search() {
        let net = net();
        let apps = apps();
        let reqs: Vec<Request> = (0..60).map(|i| req(i, (i % 2) as u32, 20.0, (i / 6) as u32, 4)).collect();
        let opts = EngineOptions { check_invariants: true, horizon: Some(12) };
        let quick = run_quickg(&net, &apps, &reqs, opts).unwrap();
        let empty = Plan::empty(vec![]);
        let plain = run_olive(&net, &apps, &empty, &reqs, opts).unwrap();
        let a: Vec<_> = quick.records.iter().map(|r| r.admission).collect();
        let b: Vec<_> = plain.records.iter().map(|r| r.admission).collect();
        assert_eq!(a, b);
        assert!(quick.records.iter().any(|r| r.reject_reason == Some(RejectReason::Saturated)));
    }
}
