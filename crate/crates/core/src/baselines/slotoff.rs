use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::time::Instant;

use crate::engine::{
    greedy_embed, Candidate, Decision, EngineError, EngineOptions, RejectReason, RunOutput,
    Simulation,
};
use crate::model::{Application, LoadLedger, Request, RequestId, SubstrateNetwork};
use crate::planner::{plan_for_demands, AggregateKey, DemandInput, LpSolver, Plan};

const EPS: f64 = 1e-9;

/// Best-fit template for `r` in a plan solved for the actual demand,
/// falling back to any template with weight left, then to greedy.
fn assign(
    plan: &Plan,
    residual: &mut [Vec<f64>],
    r: &Request,
    app: &Application,
    substrate: &SubstrateNetwork,
    ledger: &LoadLedger,
) -> Option<Candidate> {
    if let Some(a) = plan.position(AggregateKey::of(r)) {
        let agg = &plan.aggregates[a];
        let res = &mut residual[a];
        let mut order: Vec<usize> = (0..res.len()).filter(|&k| res[k] > EPS).collect();
        // Covering templates first, tightest first; then the rest by size.
        let covers = |w: f64| w * agg.demand >= r.size - EPS;
        order.sort_by(|&x, &y| {
            let (cx, cy) = (covers(res[x]), covers(res[y]));
            let by_size = if cx { res[x].total_cmp(&res[y]) } else { res[y].total_cmp(&res[x]) };
            cy.cmp(&cx).then(if cx == cy { by_size } else { Ordering::Equal }).then(x.cmp(&y))
        });
        for k in order {
            let Some(c) = Candidate::new(agg.templates[k].embedding.clone(), r, app, substrate) else {
                continue;
            };
            if ledger.fits(&c.loads) {
                res[k] = (res[k] - r.size / agg.demand).max(0.0);
                return Some(c);
            }
        }
    }
    greedy_embed(r, app, substrate, ledger)
}

/// Offline reference: every slot, the plan LP is solved for the demand of
/// all active and arriving requests and every request is re-embedded from
/// the result, ongoing requests first. An ongoing request that no longer
/// fits is preempted; a new one is rejected.
pub fn run_slotoff(
    substrate: &SubstrateNetwork,
    apps: &[Application],
    requests: &[Request],
    psi: &[f64],
    quantiles: usize,
    solver: &dyn LpSolver,
    options: EngineOptions,
) -> Result<RunOutput, EngineError> {
    let mut sim = Simulation::new(substrate, apps, requests, options)?;
    let started = Instant::now();
    for t in 0..sim.horizon() {
        sim.release(t);
        let ongoing: Vec<RequestId> = sim.ledger.active().map(|(id, _)| *id).collect();
        let arrivals = sim.arrivals(t);
        let positions: Vec<usize> = ongoing
            .iter()
            .map(|id| sim.position(*id).expect("active request without record"))
            .chain(arrivals.clone())
            .collect();
        let mut demand: BTreeMap<AggregateKey, f64> = BTreeMap::new();
        for &i in &positions {
            let r = sim.request(i);
            *demand.entry(AggregateKey::of(r)).or_insert(0.0) += r.size;
        }
        let inputs: Vec<DemandInput> = demand
            .into_iter()
            .map(|(key, demand)| DemandInput { key, demand, psi: psi[key.app.index()] })
            .collect();
        let plan = if inputs.is_empty() {
            Plan::empty(psi.to_vec())
        } else {
            plan_for_demands(substrate, apps, &inputs, quantiles, solver)?.plan
        };
        let mut residual: Vec<Vec<f64>> = plan
            .aggregates
            .iter()
            .map(|a| a.templates.iter().map(|t| t.weight).collect())
            .collect();
        for id in &ongoing {
            sim.detach(t, *id)?;
        }
        for (n, &i) in positions.iter().enumerate() {
            let r = *sim.request(i);
            let choice = assign(&plan, &mut residual, &r, sim.app_of(i), substrate, &sim.ledger);
            let is_new = n >= ongoing.len();
            match (choice, is_new) {
                (Some(c), true) => sim.accept(t, i, c.embedding, c.loads, Decision::SlotoffAssigned)?,
                (Some(c), false) => sim.reattach(t, r.id, c.loads)?,
                (None, true) => sim.reject(t, i, RejectReason::NoFit),
                (None, false) => sim.preempt_detached(t, r.id),
            }
        }
        sim.end_slot(t)?;
    }
    let ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(sim.finish(ms))
}
