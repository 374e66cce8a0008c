//! Pipeline stages. Every stage reads the artifacts of the previous one from
//! the output directory:
//!
//! ```text
//! out/config.json
//! out/topology/seed-<s>.json
//! out/cells/seed-<s>/u<pct>/{apps.json,trace.json,history.csv,test.csv,plan.json}
//! out/events/<alg>-seed-<s>-u<pct>.csv
//! out/slots/<alg>-seed-<s>-u<pct>.csv
//! out/results.csv
//! out/summary.csv
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{Context, Result};
use log::info;
use olive_core::engine::write_events_csv;
use olive_core::experiment::{self, Algorithm, Instance};
use olive_core::metrics::{append_results_csv, mean_ci95, read_results_csv, slot_demand, write_slot_csv, ResultRow};
use olive_core::model::{Application, SubstrateNetwork};
use olive_core::planner::Plan;
use olive_core::workload::{Trace, TraceSpec};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{util_tag, ExperimentConfig};
use crate::Missing;

fn topology_path(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.out.join("topology").join(format!("seed-{seed}.json"))
}

fn cell_dir(cfg: &ExperimentConfig, seed: u64, util: f64) -> PathBuf {
    cfg.out.join("cells").join(format!("seed-{seed}")).join(util_tag(util))
}

fn run_name(alg: Algorithm, seed: u64, util: f64) -> String {
    format!("{alg}-seed-{seed}-{}.csv", util_tag(util))
}

fn cells(cfg: &ExperimentConfig) -> Vec<(u64, f64)> {
    cfg.seeds
        .iter()
        .flat_map(|&s| cfg.utilizations.iter().map(move |&u| (s, u)))
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("writing {}", path.display()))?))
}

fn open(what: &str, path: &Path) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Missing::new(what, path).into()),
        Err(e) => Err(e).with_context(|| format!("reading {}", path.display())),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(what: &str, path: &Path) -> Result<T> {
    serde_json::from_reader(open(what, path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_topology(cfg: &ExperimentConfig, seed: u64) -> Result<SubstrateNetwork> {
    read_json("topology (run gen-topology)", &topology_path(cfg, seed))
}

fn load_instance(cfg: &ExperimentConfig, seed: u64, util: f64, need_history: bool) -> Result<Instance> {
    let dir = cell_dir(cfg, seed, util);
    let substrate = load_topology(cfg, seed)?;
    let apps: Vec<Application> = read_json("applications (run gen-trace)", &dir.join("apps.json"))?;
    let trace_spec: TraceSpec = read_json("trace spec (run gen-trace)", &dir.join("trace.json"))?;
    let read = |name: &str| -> Result<_> {
        Ok(Trace::read_csv(open("trace (run gen-trace)", &dir.join(name))?)?)
    };
    let history = if need_history { read("history.csv")? } else { Vec::new() };
    let test = read("test.csv")?;
    Ok(Instance { seed, utilization: util, substrate, apps, trace_spec, history, test })
}

fn write_config(cfg: &ExperimentConfig) -> Result<()> {
    write_json(&cfg.out.join("config.json"), cfg)
}

pub fn gen_topology(cfg: &ExperimentConfig) -> Result<()> {
    write_config(cfg)?;
    for &seed in &cfg.seeds {
        let net = match &cfg.topology_file {
            Some(p) => read_json("topology file", p)?,
            None => experiment::topology(&cfg.scenario, seed)?,
        };
        let path = topology_path(cfg, seed);
        write_json(&path, &net)?;
        info!("topology seed {seed}: {} nodes, {} links -> {}", net.node_count(), net.link_count(), path.display());
    }
    Ok(())
}

pub fn gen_trace(cfg: &ExperimentConfig) -> Result<()> {
    cells(cfg).par_iter().try_for_each(|&(seed, util)| -> Result<()> {
        let net = load_topology(cfg, seed)?;
        let inst = Instance::build_on(&cfg.scenario, seed, util, net)?;
        let dir = cell_dir(cfg, seed, util);
        write_json(&dir.join("apps.json"), &inst.apps)?;
        write_json(&dir.join("trace.json"), &inst.trace_spec)?;
        for (name, reqs) in [("history.csv", &inst.history), ("test.csv", &inst.test)] {
            let mut w = create(&dir.join(name))?;
            Trace::write_csv(reqs, &mut w)?;
            w.flush()?;
        }
        info!(
            "trace seed {seed} {}: {} history, {} test requests",
            util_tag(util),
            inst.history.len(),
            inst.test.len()
        );
        Ok(())
    })
}

pub fn plan(cfg: &ExperimentConfig) -> Result<()> {
    cells(cfg).par_iter().try_for_each(|&(seed, util)| -> Result<()> {
        let inst = load_instance(cfg, seed, util, true)?;
        let started = Instant::now();
        let plan = inst.plan(&cfg.scenario)?;
        let secs = started.elapsed().as_secs_f64();
        let path = cell_dir(cfg, seed, util).join("plan.json");
        let mut w = create(&path)?;
        serde_json::to_writer(&mut w, &plan)?;
        w.flush()?;
        info!(
            "plan seed {seed} {}: objective {:.6e}, {} aggregates, {} templates, solved in {secs:.2} s",
            util_tag(util),
            plan.objective,
            plan.aggregates.len(),
            plan.template_count()
        );
        Ok(())
    })
}

/// Result keys already present. A torn last line left by an interrupted
/// run is cut off.
fn completed(path: &Path) -> Result<BTreeSet<(String, u64, String)>> {
    let Ok(mut text) = fs::read_to_string(path) else {
        return Ok(BTreeSet::new());
    };
    if !text.is_empty() && !text.ends_with('\n') {
        text.truncate(text.rfind('\n').map_or(0, |i| i + 1));
        fs::write(path, &text)?;
    }
    let rows = read_results_csv(text.as_bytes()).with_context(|| format!("parsing {}", path.display()))?;
    Ok(rows.into_iter().map(|r| (r.algorithm, r.seed, util_tag(r.utilization))).collect())
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<()> {
    let results = cfg.out.join("results.csv");
    let done = completed(&results)?;
    let todo: Vec<(u64, f64, Vec<Algorithm>)> = cells(cfg)
        .into_iter()
        .map(|(seed, util)| {
            let algs = cfg
                .algorithms
                .iter()
                .copied()
                .filter(|a| !done.contains(&(a.name().to_string(), seed, util_tag(util))))
                .collect::<Vec<_>>();
            (seed, util, algs)
        })
        .filter(|(_, _, algs)| !algs.is_empty())
        .collect();
    let skipped = cells(cfg).len() * cfg.algorithms.len() - todo.iter().map(|t| t.2.len()).sum::<usize>();
    if skipped > 0 {
        info!("resuming: {skipped} runs already in {}", results.display());
    }
    // Fail before any work if a plan is missing.
    for (seed, util, algs) in &todo {
        let plan = cell_dir(cfg, *seed, *util).join("plan.json");
        if algs.contains(&Algorithm::Olive) && !plan.is_file() {
            return Err(Missing::new("plan (run plan)", &plan).into());
        }
    }
    fs::create_dir_all(&cfg.out)?;
    let file = OpenOptions::new().create(true).append(true).open(&results)?;
    let header = file.metadata()?.len() == 0;
    let sink = Mutex::new((file, header));

    todo.par_iter().try_for_each(|(seed, util, algs)| -> Result<()> {
        let (seed, util) = (*seed, *util);
        let inst = load_instance(cfg, seed, util, false)?;
        let plan: Option<Plan> = if algs.contains(&Algorithm::Olive) {
            Some(read_json("plan (run plan)", &cell_dir(cfg, seed, util).join("plan.json"))?)
        } else {
            None
        };
        for &alg in algs {
            let out = inst.simulate(&cfg.scenario, alg, plan.as_ref())?;
            let report = inst.report(&cfg.scenario, alg, &out)?;
            let name = run_name(alg, seed, util);
            let mut w = create(&cfg.out.join("events").join(&name))?;
            write_events_csv(&out.events, &mut w)?;
            w.flush()?;
            let mut w = create(&cfg.out.join("slots").join(&name))?;
            write_slot_csv(&slot_demand(&out), &mut w)?;
            w.flush()?;
            info!(
                "{alg} seed {seed} {}: rejection {:.4} (count {:.4}), balance {:.3}, {:.0} ms",
                util_tag(util),
                report.rejection_rate_demand,
                report.rejection_rate_count,
                report.balance_index,
                report.runtime_ms
            );
            let mut buf = Vec::new();
            let mut guard = sink.lock().unwrap();
            append_results_csv(&[report.row()], &mut buf, guard.1)?;
            guard.0.write_all(&buf)?;
            guard.0.flush()?;
            guard.1 = false;
        }
        Ok(())
    })
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    algorithm: String,
    utilization: f64,
    runs: usize,
    rejection_rate_demand: f64,
    rejection_rate_demand_ci: f64,
    rejection_rate_count: f64,
    rejection_rate_count_ci: f64,
    balance_index: f64,
    balance_index_ci: f64,
    resource_cost: f64,
    resource_cost_ci: f64,
    rejection_cost: f64,
    rejection_cost_ci: f64,
    runtime_ms: f64,
    runtime_ms_ci: f64,
}

fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, i64), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.algorithm.clone(), (r.utilization * 100.0).round() as i64)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((algorithm, pct), g)| {
            let stat = |f: fn(&ResultRow) -> f64| mean_ci95(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (rd, rd_ci) = stat(|r| r.rejection_rate_demand);
            let (rc, rc_ci) = stat(|r| r.rejection_rate_count);
            let (bi, bi_ci) = stat(|r| r.balance_index);
            let (co, co_ci) = stat(|r| r.resource_cost);
            let (rj, rj_ci) = stat(|r| r.rejection_cost);
            let (ms, ms_ci) = stat(|r| r.runtime_ms);
            SummaryRow {
                algorithm,
                utilization: pct as f64 / 100.0,
                runs: g.len(),
                rejection_rate_demand: rd,
                rejection_rate_demand_ci: rd_ci,
                rejection_rate_count: rc,
                rejection_rate_count_ci: rc_ci,
                balance_index: bi,
                balance_index_ci: bi_ci,
                resource_cost: co,
                resource_cost_ci: co_ci,
                rejection_cost: rj,
                rejection_cost_ci: rj_ci,
                runtime_ms: ms,
                runtime_ms_ci: ms_ci,
            }
        })
        .collect()
}

pub fn report(cfg: &ExperimentConfig) -> Result<()> {
    let path = cfg.out.join("results.csv");
    let rows = read_results_csv(open("results (run simulate)", &path)?)?;
    let summary = summarize(&rows);
    let out = cfg.out.join("summary.csv");
    let mut w = csv::Writer::from_writer(create(&out)?);
    for s in &summary {
        w.serialize(s)?;
    }
    w.flush()?;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{:<8} {:>5} {:>4}  {:>17}  {:>17}  {:>15}", "algo", "util", "runs", "rejection", "rejection (count)", "balance")?;
    for s in &summary {
        writeln!(
            stdout,
            "{:<8} {:>4.0}% {:>4}  {:>8.4} ± {:<6.4}  {:>8.4} ± {:<6.4}  {:>6.3} ± {:<6.3}",
            s.algorithm,
            s.utilization * 100.0,
            s.runs,
            s.rejection_rate_demand,
            s.rejection_rate_demand_ci,
            s.rejection_rate_count,
            s.rejection_rate_count_ci,
            s.balance_index,
            s.balance_index_ci
        )?;
    }
    info!("summary of {} runs -> {}", rows.len(), out.display());
    Ok(())
}
