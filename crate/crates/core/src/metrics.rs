//! Cost, rejection and fairness figures computed from finished runs.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::engine::{RequestRecord, RunOutput};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("no request arrived in slots {0}..{1}")]
    EmptyWindow(u32, u32),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Arrival slots `start..end` whose requests are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: u32,
    pub end: u32,
}

impl Default for Window {
    fn default() -> Self {
        Window { start: 100, end: 500 }
    }
}

impl Window {
    pub fn contains(&self, slot: u32) -> bool {
        (self.start..self.end).contains(&slot)
    }
}

/// Total resource cost from the ledger's per-slot history.
pub fn resource_cost(out: &RunOutput) -> f64 {
    out.slot_costs.iter().sum()
}

/// Lost profit `sum d * duration * psi(app)` over rejected and preempted
/// requests. Preempted requests are charged their full duration.
pub fn rejection_cost<'a>(records: impl IntoIterator<Item = &'a RequestRecord>, psi: &[f64]) -> f64 {
    records
        .into_iter()
        .filter(|r| r.is_rejected())
        .map(|r| r.request.volume() * psi[r.request.app.index()])
        .sum()
}

/// `(demand_weighted, count_weighted)` rejection rates over requests that
/// arrived inside `window`.
pub fn rejection_rates(records: &[RequestRecord], window: Window) -> Result<(f64, f64), MetricsError> {
    let mut all = (0.0, 0usize);
    let mut lost = (0.0, 0usize);
    for r in records.iter().filter(|r| window.contains(r.request.arrival)) {
        all.0 += r.request.volume();
        all.1 += 1;
        if r.is_rejected() {
            lost.0 += r.request.volume();
            lost.1 += 1;
        }
    }
    if all.1 == 0 {
        return Err(MetricsError::EmptyWindow(window.start, window.end));
    }
    let demand = if all.0 > 0.0 { lost.0 / all.0 } else { 0.0 };
    Ok((demand, lost.1 as f64 / all.1 as f64))
}

/// Weighted Jain-style index over per-node rejection counts `x[v][a]`, with
/// node weights `n[v]`. Nodes without rejections are left out. Returns
/// `(1.0, false)` when nothing was rejected at all.
pub fn balance_index(x: &[Vec<f64>], n: &[f64]) -> (f64, bool) {
    let mut weight = 0.0;
    let mut total = 0.0;
    for (row, &nv) in x.iter().zip(n) {
        let sum: f64 = row.iter().sum();
        let sq: f64 = row.iter().map(|v| v * v).sum();
        if sum <= 0.0 || nv <= 0.0 {
            continue;
        }
        weight += nv;
        total += nv * sum * sum / (row.len() as f64 * sq);
    }
    if weight == 0.0 {
        (1.0, false)
    } else {
        (total / weight, true)
    }
}

/// Balance index of a run: rejections counted per (origin, application)
/// over the measurement window, weighted by requests per origin.
pub fn run_balance_index(
    records: &[RequestRecord],
    node_count: usize,
    app_count: usize,
    window: Window,
) -> (f64, bool) {
    let mut x = vec![vec![0.0; app_count]; node_count];
    let mut n = vec![0.0; node_count];
    for r in records.iter().filter(|r| window.contains(r.request.arrival)) {
        let v = r.request.origin.index();
        n[v] += 1.0;
        if r.is_rejected() {
            x[v][r.request.app.index()] += 1.0;
        }
    }
    balance_index(&x, &n)
}

/// Demand per arrival slot, in CU x slots.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotDemand {
    pub slot: u32,
    pub arrived: f64,
    pub allocated: f64,
    pub rejected: f64,
    pub preempted: f64,
}

pub fn slot_demand(out: &RunOutput) -> Vec<SlotDemand> {
    let mut rows: Vec<SlotDemand> = (0..out.horizon)
        .map(|slot| SlotDemand { slot, ..Default::default() })
        .collect();
    for r in &out.records {
        let row = &mut rows[r.request.arrival as usize];
        let v = r.request.volume();
        row.arrived += v;
        match (r.admission.is_some(), r.preempted_at.is_some()) {
            (true, false) => row.allocated += v,
            (true, true) => row.preempted += v,
            (false, _) => row.rejected += v,
        }
    }
    rows
}

/// Summary of one algorithm run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: String,
    pub seed: u64,
    pub utilization: f64,
    pub rejection_rate_demand: f64,
    pub rejection_rate_count: f64,
    pub resource_cost: f64,
    pub rejection_cost: f64,
    pub balance_index: f64,
    /// False when nothing was rejected and the index defaulted to 1.
    pub balance_defined: bool,
    pub runtime_ms: f64,
    pub decisions: BTreeMap<String, usize>,
}

impl RunReport {
    pub fn build(
        algorithm: &str,
        seed: u64,
        utilization: f64,
        out: &RunOutput,
        psi: &[f64],
        node_count: usize,
        window: Window,
    ) -> Result<RunReport, MetricsError> {
        let (demand, count) = rejection_rates(&out.records, window)?;
        let (balance, defined) = run_balance_index(&out.records, node_count, psi.len(), window);
        let mut decisions = BTreeMap::new();
        for e in &out.events {
            *decisions.entry(e.decision.to_string()).or_insert(0) += 1;
        }
        Ok(RunReport {
            algorithm: algorithm.to_string(),
            seed,
            utilization,
            rejection_rate_demand: demand,
            rejection_rate_count: count,
            resource_cost: resource_cost(out),
            rejection_cost: rejection_cost(&out.records, psi),
            balance_index: balance,
            balance_defined: defined,
            runtime_ms: out.runtime_ms,
            decisions,
        })
    }

    pub fn row(&self) -> ResultRow {
        ResultRow {
            algorithm: self.algorithm.clone(),
            seed: self.seed,
            utilization: self.utilization,
            rejection_rate_demand: self.rejection_rate_demand,
            rejection_rate_count: self.rejection_rate_count,
            resource_cost: self.resource_cost,
            rejection_cost: self.rejection_cost,
            balance_index: self.balance_index,
            runtime_ms: self.runtime_ms,
        }
    }
}

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub algorithm: String,
    pub seed: u64,
    pub utilization: f64,
    pub rejection_rate_demand: f64,
    pub rejection_rate_count: f64,
    pub resource_cost: f64,
    pub rejection_cost: f64,
    pub balance_index: f64,
    pub runtime_ms: f64,
}

pub fn write_results_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), MetricsError> {
    append_results_csv(rows, out, true)
}

/// Like [`write_results_csv`], optionally without the header line, for
/// appending to an existing file.
pub fn append_results_csv<W: Write>(rows: &[ResultRow], out: W, header: bool) -> Result<(), MetricsError> {
    let mut w = csv::WriterBuilder::new().has_headers(header).from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_results_csv<R: Read>(input: R) -> Result<Vec<ResultRow>, MetricsError> {
    let mut rd = csv::Reader::from_reader(input);
    Ok(rd.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_slot_csv<W: Write>(rows: &[SlotDemand], out: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Mean and half-width of a normal 95% interval.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Decision, EngineOptions, Simulation};
    use crate::model::fixtures::{link, node};
    use crate::model::{AppId, Application, Embedding, NodeId, Request, RequestId, SubstrateNetwork, Tier};
    use proptest::prelude::*;

    fn run(outcomes: &[(f64, u32, bool)]) -> RunOutput {
        let nodes = vec![node(0, Tier::Edge, 1e6, 1.0), node(1, Tier::Core, 1e6, 1.0)];
        let net = SubstrateNetwork::new(nodes, vec![link(0, 0, 1, 1e6, 1.0)]).unwrap();
        let apps = vec![Application::chain(AppId(0), &[50.0], &[0.0]).unwrap()];
        let reqs: Vec<Request> = outcomes
            .iter()
            .enumerate()
            .map(|(i, &(size, duration, _))| Request {
                id: RequestId(i as u64),
                app: AppId(0),
                origin: NodeId(0),
                size,
                arrival: 0,
                duration,
            })
            .collect();
        let mut sim = Simulation::new(&net, &apps, &reqs, EngineOptions { horizon: Some(20), check_invariants: true }).unwrap();
        for (i, &(_, _, ok)) in outcomes.iter().enumerate() {
            if ok {
                let emb = Embedding { node_map: vec![NodeId(0), NodeId(0)], paths: vec![vec![]] };
                let loads = emb.loads(reqs[i].size, &apps[0], &net).unwrap();
                sim.accept(0, i, emb, loads, Decision::Greedy).unwrap();
            } else {
                sim.reject(0, i, crate::engine::RejectReason::NoFit);
            }
        }
        for t in 0..20 {
            sim.release(t);
            sim.end_slot(t).unwrap();
        }
        sim.finish(0.0)
    }

    const ALL: Window = Window { start: 0, end: 20 };

    #[test]
    fn cost_examples() {
        assert_eq!(resource_cost(&run(&[])), 0.0);
        // 10 x 50 = 500 CU on a cost-1 node for two slots.
        let out = run(&[(10.0, 2, true)]);
        assert_eq!(resource_cost(&out), 1000.0);
        assert_eq!(out.records[0].resource_cost, 1000.0);
        assert_eq!(rejection_cost(&out.records, &[100.0]), 0.0);
        let out = run(&[(10.0, 10, false)]);
        assert_eq!(rejection_cost(&out.records, &[100.0]), 10_000.0);
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rejection_rates(&run(&[(1.0, 1, true), (2.0, 1, true)]).records, ALL).unwrap(), (0.0, 0.0));
        assert_eq!(rejection_rates(&run(&[(1.0, 1, false), (2.0, 1, false)]).records, ALL).unwrap(), (1.0, 1.0));
        let (d, c) = rejection_rates(&run(&[(1.0, 1, false), (3.0, 1, true)]).records, ALL).unwrap();
        assert_eq!(c, 0.5);
        assert_eq!(d, 0.25);
        assert!(matches!(
            rejection_rates(&run(&[(1.0, 1, true)]).records, Window { start: 5, end: 9 }),
            Err(MetricsError::EmptyWindow(5, 9))
        ));
    }

    #[test]
    fn balance_examples() {
        let even = vec![vec![3.0; 4], vec![1.0; 4]];
        assert_eq!(balance_index(&even, &[5.0, 7.0]), (1.0, true));
        let single = vec![vec![0.0, 4.0, 0.0, 0.0], vec![0.0; 4]];
        assert_eq!(balance_index(&single, &[5.0, 7.0]), (0.25, true));
        let mixed = vec![vec![2.0, 2.0, 0.0, 0.0], vec![3.0; 4]];
        assert_eq!(balance_index(&mixed, &[10.0, 30.0]), (0.875, true));
        assert_eq!(balance_index(&[vec![0.0; 4]], &[3.0]), (1.0, false));
    }

    #[test]
    fn slot_demand_is_conserved() {
        let out = run(&[(1.0, 2, false), (3.0, 1, true), (2.0, 4, true)]);
        let rows = slot_demand(&out);
        let r = rows[0];
        assert_eq!(r.arrived, 13.0);
        assert_eq!(r.allocated + r.rejected + r.preempted, r.arrived);
    }

    #[test]
    fn results_csv_roundtrip() {
        let row = ResultRow {
            algorithm: "olive".into(),
            seed: 3,
            utilization: 1.4,
            rejection_rate_demand: 0.1,
            rejection_rate_count: 0.2,
            resource_cost: 10.0,
            rejection_cost: 5.0,
            balance_index: 0.9,
            runtime_ms: 0.0,
        };
        let mut buf = Vec::new();
        write_results_csv(&[row.clone()], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "algorithm,seed,utilization,rejection_rate_demand,rejection_rate_count,resource_cost,rejection_cost,balance_index,runtime_ms\n"
        ));
        assert_eq!(read_results_csv(&buf[..]).unwrap(), vec![row]);
    }

    proptest! {
        #[test]
        fn balance_index_is_bounded(
            x in prop::collection::vec(prop::collection::vec(0u32..20, 4), 1..8),
            n in prop::collection::vec(1u32..100, 8),
        ) {
            let x: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
            let n: Vec<f64> = n.iter().map(|&v| v as f64).collect();
            let (b, defined) = balance_index(&x, &n);
            if defined {
                prop_assert!(b >= 0.25 - 1e-12 && b <= 1.0 + 1e-12);
            } else {
                prop_assert_eq!(b, 1.0);
            }
        }
    }
}
