use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::model::{
    ActiveAllocation, Application, Embedding, LoadLedger, LoadVector, ModelError, Request,
    RequestId, SubstrateNetwork,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Planned,
    Borrowed,
    Greedy,
    SlotoffAssigned,
    Rejected,
    Preempted,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Planned => "planned",
            Decision::Borrowed => "borrowed",
            Decision::Greedy => "greedy",
            Decision::SlotoffAssigned => "slotoff-assigned",
            Decision::Rejected => "rejected",
            Decision::Preempted => "preempted",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    /// No admissible embedding fits the residual capacity.
    NoFit,
    /// Every node was too full for the request; decided without search.
    Saturated,
    /// The search budget ran out before a feasible embedding was found.
    Budget,
    /// Made room for a planned request.
    Preempted,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineOptions {
    /// Check ledger and plan invariants after every slot.
    pub check_invariants: bool,
    /// Number of slots to simulate; defaults to one past the last arrival.
    pub horizon: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub slot: u32,
    pub request_id: RequestId,
    pub decision: Decision,
    pub embedding: Option<Embedding>,
    pub cost_delta: f64,
    pub reason: Option<RejectReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub request: Request,
    /// How the request was admitted, `None` if rejected on arrival.
    pub admission: Option<Decision>,
    pub reject_reason: Option<RejectReason>,
    pub preempted_at: Option<u32>,
    /// Resource cost accrued inside the simulated horizon.
    pub resource_cost: f64,
    slot_cost: f64,
    held_since: u32,
}

impl RequestRecord {
    fn new(request: Request) -> Self {
        RequestRecord {
            request,
            admission: None,
            reject_reason: None,
            preempted_at: None,
            resource_cost: 0.0,
            slot_cost: 0.0,
            held_since: request.arrival,
        }
    }

    /// Rejected on arrival or preempted later.
    pub fn is_rejected(&self) -> bool {
        self.admission.is_none() || self.preempted_at.is_some()
    }

    pub fn is_decided(&self) -> bool {
        self.admission.is_some() || self.reject_reason.is_some()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutput {
    pub horizon: u32,
    pub records: Vec<RequestRecord>,
    pub events: Vec<Event>,
    /// Ledger resource cost at the end of every slot.
    pub slot_costs: Vec<f64>,
    pub runtime_ms: f64,
}

impl RunOutput {
    /// Largest relative gap between the ledger's total cost and the sum of
    /// per-request costs.
    pub fn cost_attribution_gap(&self) -> f64 {
        let ledger: f64 = self.slot_costs.iter().sum();
        let attributed: f64 = self.records.iter().map(|r| r.resource_cost).sum();
        (ledger - attributed).abs() / ledger.abs().max(1.0)
    }

    pub fn count(&self, decision: Decision) -> usize {
        self.events.iter().filter(|e| e.decision == decision).count()
    }
}

/// Requests, ledger and event log shared by every online algorithm.
#[derive(Debug)]
pub struct Simulation<'a> {
    pub substrate: &'a SubstrateNetwork,
    pub apps: &'a [Application],
    pub ledger: LoadLedger,
    records: Vec<RequestRecord>,
    index: HashMap<RequestId, usize>,
    slots: Vec<Range<usize>>,
    events: Vec<Event>,
    check: bool,
}

impl<'a> Simulation<'a> {
    pub fn new(
        substrate: &'a SubstrateNetwork,
        apps: &'a [Application],
        requests: &[Request],
        options: EngineOptions,
    ) -> Result<Self, EngineError> {
        let mut sorted = requests.to_vec();
        sorted.sort_by_key(|r| r.arrival);
        let horizon = options
            .horizon
            .unwrap_or_else(|| sorted.last().map_or(0, |r| r.arrival + 1));
        sorted.retain(|r| r.arrival < horizon);
        let mut index = HashMap::with_capacity(sorted.len());
        for (i, r) in sorted.iter().enumerate() {
            if index.insert(r.id, i).is_some() {
                return Err(ModelError::DoubleAllocation(r.id).into());
            }
            if r.app.index() >= apps.len() {
                return Err(ModelError::InvalidEmbedding(r.id, format!("unknown application {}", r.app)).into());
            }
            if r.origin.index() >= substrate.node_count() {
                return Err(ModelError::InvalidEmbedding(r.id, format!("unknown origin {}", r.origin.0)).into());
            }
        }
        let mut slots = vec![0..0; horizon as usize];
        let mut start = 0;
        for (t, slot) in slots.iter_mut().enumerate() {
            let end = start + sorted[start..].partition_point(|r| r.arrival as usize <= t);
            *slot = start..end;
            start = end;
        }
        Ok(Simulation {
            substrate,
            apps,
            ledger: LoadLedger::new(substrate),
            records: sorted.into_iter().map(RequestRecord::new).collect(),
            index,
            slots,
            events: Vec::new(),
            check: options.check_invariants,
        })
    }

    pub fn horizon(&self) -> u32 {
        self.slots.len() as u32
    }

    /// Record positions of the requests arriving in slot `t`, in input order.
    pub fn arrivals(&self, t: u32) -> Range<usize> {
        self.slots[t as usize].clone()
    }

    pub fn request(&self, i: usize) -> &Request {
        &self.records[i].request
    }

    pub fn record(&self, i: usize) -> &RequestRecord {
        &self.records[i]
    }

    pub fn position(&self, id: RequestId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn app_of(&self, i: usize) -> &'a Application {
        &self.apps[self.records[i].request.app.index()]
    }

    pub fn checks_enabled(&self) -> bool {
        self.check
    }

    pub fn accept(
        &mut self,
        t: u32,
        i: usize,
        embedding: Embedding,
        loads: LoadVector,
        decision: Decision,
    ) -> Result<(), EngineError> {
        let r = self.records[i].request;
        if self.check {
            embedding.validate(&r, &self.apps[r.app.index()], self.substrate)?;
        }
        self.ledger.allocate(r.id, loads, r.departure())?;
        let slot_cost = self.ledger.allocation(r.id).map_or(0.0, |a| a.slot_cost);
        let rec = &mut self.records[i];
        rec.admission = Some(decision);
        rec.slot_cost = slot_cost;
        rec.held_since = t;
        self.events.push(Event {
            slot: t,
            request_id: r.id,
            decision,
            embedding: Some(embedding),
            cost_delta: slot_cost,
            reason: None,
        });
        Ok(())
    }

    pub fn reject(&mut self, t: u32, i: usize, reason: RejectReason) {
        let rec = &mut self.records[i];
        rec.reject_reason = Some(reason);
        self.events.push(Event {
            slot: t,
            request_id: rec.request.id,
            decision: Decision::Rejected,
            embedding: None,
            cost_delta: 0.0,
            reason: Some(reason),
        });
    }

    fn settle(&mut self, i: usize, until: u32) {
        let rec = &mut self.records[i];
        let held = until.min(self.slots.len() as u32).saturating_sub(rec.held_since);
        rec.resource_cost += rec.slot_cost * held as f64;
        rec.held_since = until;
    }

    /// Drops an active request in slot `t` to make room for another.
    pub fn preempt(&mut self, t: u32, id: RequestId) -> Result<ActiveAllocation, EngineError> {
        let alloc = self.ledger.remove(id)?;
        let i = self.index[&id];
        self.settle(i, t);
        let rec = &mut self.records[i];
        rec.preempted_at = Some(t);
        rec.reject_reason = Some(RejectReason::Preempted);
        self.events.push(Event {
            slot: t,
            request_id: id,
            decision: Decision::Preempted,
            embedding: None,
            cost_delta: -alloc.slot_cost,
            reason: Some(RejectReason::Preempted),
        });
        Ok(alloc)
    }

    /// Removes an active request without marking it preempted or logging.
    pub fn detach(&mut self, t: u32, id: RequestId) -> Result<ActiveAllocation, EngineError> {
        let alloc = self.ledger.remove(id)?;
        let i = self.index[&id];
        self.settle(i, t);
        Ok(alloc)
    }

    /// Re-admits a detached request with new loads from slot `t` on, without
    /// logging an event.
    pub fn reattach(&mut self, t: u32, id: RequestId, loads: LoadVector) -> Result<(), EngineError> {
        let i = self.index[&id];
        let r = self.records[i].request;
        self.ledger.allocate(id, loads, r.departure())?;
        let rec = &mut self.records[i];
        rec.slot_cost = self.ledger.allocation(id).map_or(0.0, |a| a.slot_cost);
        rec.held_since = t;
        Ok(())
    }

    /// Marks a detached request as preempted in slot `t`.
    pub fn preempt_detached(&mut self, t: u32, id: RequestId) {
        let i = self.index[&id];
        let rec = &mut self.records[i];
        rec.preempted_at = Some(t);
        rec.reject_reason = Some(RejectReason::Preempted);
        self.events.push(Event {
            slot: t,
            request_id: id,
            decision: Decision::Preempted,
            embedding: None,
            cost_delta: -rec.slot_cost,
            reason: Some(RejectReason::Preempted),
        });
    }

    /// Releases the requests whose holding interval ended before slot `t`.
    pub fn release(&mut self, t: u32) -> Vec<(RequestId, ActiveAllocation)> {
        let gone = self.ledger.release_departures(t);
        for (id, alloc) in &gone {
            let i = self.index[id];
            self.settle(i, alloc.departs);
        }
        gone
    }

    /// Closes slot `t`: records its cost and, if enabled, checks the ledger.
    pub fn end_slot(&mut self, t: u32) -> Result<(), EngineError> {
        self.ledger.close_slot();
        if self.check {
            let fail = |detail: String| EngineError::Invariant { slot: t, detail };
            self.ledger.check_consistency(1e-9).map_err(|e| fail(e.to_string()))?;
            self.ledger.substrate_residual().map_err(|e| fail(e.to_string()))?;
        }
        Ok(())
    }

    pub fn finish(mut self, runtime_ms: f64) -> RunOutput {
        let horizon = self.horizon();
        let active: Vec<RequestId> = self.ledger.active().map(|(id, _)| *id).collect();
        for id in active {
            let i = self.index[&id];
            self.settle(i, horizon);
        }
        RunOutput {
            horizon,
            records: self.records,
            events: self.events,
            slot_costs: self.ledger.cost_history().to_vec(),
            runtime_ms,
        }
    }
}

/// Writes the decision log as `slot,request_id,decision,node_map,paths,cost_delta`.
pub fn write_events_csv<W: Write>(events: &[Event], out: W) -> Result<(), EngineError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slot", "request_id", "decision", "node_map", "paths", "cost_delta"])?;
    for e in events {
        let (nodes, paths) = e
            .embedding
            .as_ref()
            .map_or((String::new(), String::new()), |m| (m.format_node_map(), m.format_paths()));
        w.write_record([
            e.slot.to_string(),
            e.request_id.0.to_string(),
            e.decision.to_string(),
            nodes,
            paths,
            e.cost_delta.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{link, node};
    use crate::model::{AppId, NodeId, Tier};

    fn setup() -> (SubstrateNetwork, Vec<Application>) {
        let nodes = vec![node(0, Tier::Edge, 100.0, 2.0), node(1, Tier::Core, 100.0, 1.0)];
        let net = SubstrateNetwork::new(nodes, vec![link(0, 0, 1, 100.0, 1.0)]).unwrap();
        let apps = vec![Application::chain(AppId(0), &[5.0], &[1.0]).unwrap()];
        (net, apps)
    }

    fn req(id: u64, arrival: u32, duration: u32) -> Request {
        Request {
            id: RequestId(id),
            app: AppId(0),
            origin: NodeId(0),
            size: 2.0,
            arrival,
            duration,
        }
    }

    #[test]
    fn slots_group_arrivals() {
        let (net, apps) = setup();
        let reqs = vec![req(0, 0, 1), req(1, 2, 1), req(2, 2, 1)];
        let sim = Simulation::new(&net, &apps, &reqs, EngineOptions::default()).unwrap();
        assert_eq!(sim.horizon(), 3);
        assert_eq!(sim.arrivals(0), 0..1);
        assert_eq!(sim.arrivals(1), 1..1);
        assert_eq!(sim.arrivals(2), 1..3);
    }

    #[test]
    fn allocate_then_depart_restores_ledger() {
        let (net, apps) = setup();
        let reqs = vec![req(0, 0, 2)];
        let opts = EngineOptions { check_invariants: true, horizon: Some(4) };
        let mut sim = Simulation::new(&net, &apps, &reqs, opts).unwrap();
        let emb = Embedding { node_map: vec![NodeId(0), NodeId(0)], paths: vec![vec![]] };
        let loads = emb.loads(2.0, &apps[0], &net).unwrap();
        let before = sim.ledger.loads().to_vec();
        sim.accept(0, 0, emb, loads, Decision::Greedy).unwrap();
        for t in 0..4 {
            sim.release(t);
            sim.end_slot(t).unwrap();
        }
        assert_eq!(sim.ledger.loads(), &before[..]);
        let out = sim.finish(0.0);
        // 10 CU at cost 2 for two slots.
        assert_eq!(out.records[0].resource_cost, 40.0);
        assert_eq!(out.slot_costs, vec![20.0, 20.0, 0.0, 0.0]);
        assert_eq!(out.cost_attribution_gap(), 0.0);
    }

    #[test]
    fn preemption_stops_cost_accrual() {
        let (net, apps) = setup();
        let reqs = vec![req(0, 0, 5)];
        let mut sim = Simulation::new(&net, &apps, &reqs, EngineOptions { horizon: Some(5), ..Default::default() }).unwrap();
        let emb = Embedding { node_map: vec![NodeId(0), NodeId(0)], paths: vec![vec![]] };
        let loads = emb.loads(2.0, &apps[0], &net).unwrap();
        sim.accept(0, 0, emb, loads, Decision::Borrowed).unwrap();
        sim.end_slot(0).unwrap();
        sim.end_slot(1).unwrap();
        sim.preempt(2, RequestId(0)).unwrap();
        sim.end_slot(2).unwrap();
        let out = sim.finish(0.0);
        assert!(out.records[0].is_rejected());
        assert_eq!(out.records[0].resource_cost, 40.0);
        assert_eq!(out.count(Decision::Preempted), 1);
        assert_eq!(out.cost_attribution_gap(), 0.0);
    }

    #[test]
    fn event_csv_layout() {
        let ev = vec![
            Event {
                slot: 3,
                request_id: RequestId(7),
                decision: Decision::Greedy,
                embedding: Some(Embedding {
                    node_map: vec![NodeId(0), NodeId(1)],
                    paths: vec![vec![crate::model::ArcId(0)]],
                }),
                cost_delta: 12.5,
                reason: None,
            },
            Event {
                slot: 3,
                request_id: RequestId(8),
                decision: Decision::Rejected,
                embedding: None,
                cost_delta: 0.0,
                reason: Some(RejectReason::NoFit),
            },
        ];
        let mut buf = Vec::new();
        write_events_csv(&ev, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "slot,request_id,decision,node_map,paths,cost_delta");
        assert_eq!(lines[1], "3,7,greedy,0;1,0,12.5");
        assert_eq!(lines[2], "3,8,rejected,,,0");
    }
}
