//! End-to-end runs: topology, applications and trace from one seed, then
//! planning, simulation and reporting.

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_fullg, run_slotoff, DEFAULT_BUDGET};
use crate::engine::{run_olive, run_quickg, EngineError, EngineOptions, RunOutput};
use crate::metrics::{MetricsError, RunReport, Window};
use crate::model::{Application, Request, SubstrateNetwork};
use crate::planner::{make_plan, HighsSolver, Plan, PlanConfig, PlannerError};
use crate::workload::{
    build_topology, gen_applications, gen_mmpp_trace, scale_to_utilization, AppSpec, Preset,
    TopologySpec, Trace, TraceSpec, WorkloadError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Olive,
    QuickG,
    FullG,
    SlotOff,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Olive, Algorithm::QuickG, Algorithm::FullG, Algorithm::SlotOff];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Olive => "olive",
            Algorithm::QuickG => "quickg",
            Algorithm::FullG => "fullg",
            Algorithm::SlotOff => "slotoff",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown algorithm {s:?} (expected olive, quickg, fullg or slotoff)"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Everything needed to reproduce a run except the seed and utilization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub topology: TopologySpec,
    pub apps: AppSpec,
    pub trace: TraceSpec,
    pub plan: PlanConfig,
    pub window: Window,
    pub fullg_budget: u64,
    pub check_invariants: bool,
    /// Report wall-clock runtimes; off makes result rows reproducible.
    pub timing: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            topology: TopologySpec::preset(Preset::Desk10, 0),
            apps: AppSpec::default(),
            trace: TraceSpec::default(),
            plan: PlanConfig::default(),
            window: Window::default(),
            fullg_budget: DEFAULT_BUDGET,
            check_invariants: false,
            timing: true,
        }
    }
}

/// Independent random streams derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Topology = 1,
    Apps = 2,
    Trace = 3,
    Bootstrap = 4,
}

pub fn sub_seed(seed: u64, stream: Stream) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng.next_u64()
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, stream))
}

/// The substrate of `seed` under `scenario`.
pub fn topology(scenario: &Scenario, seed: u64) -> Result<SubstrateNetwork, ExperimentError> {
    let spec = TopologySpec { seed: sub_seed(seed, Stream::Topology), ..scenario.topology.clone() };
    Ok(build_topology(&spec)?)
}

/// Generated inputs of one (seed, utilization) cell.
#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub utilization: f64,
    pub substrate: SubstrateNetwork,
    pub apps: Vec<Application>,
    pub trace_spec: TraceSpec,
    pub history: Vec<Request>,
    pub test: Vec<Request>,
}

impl Instance {
    pub fn build(scenario: &Scenario, seed: u64, utilization: f64) -> Result<Instance, ExperimentError> {
        Self::build_on(scenario, seed, utilization, topology(scenario, seed)?)
    }

    /// Applications and trace for `seed` on a given substrate.
    pub fn build_on(
        scenario: &Scenario,
        seed: u64,
        utilization: f64,
        substrate: SubstrateNetwork,
    ) -> Result<Instance, ExperimentError> {
        let apps = gen_applications(&scenario.apps, &substrate, &mut stream_rng(seed, Stream::Apps))?;
        let mut spec = scale_to_utilization(&scenario.trace, &scenario.apps, utilization, &substrate)?;
        spec.seed = sub_seed(seed, Stream::Trace);
        let trace: Trace = gen_mmpp_trace(&spec, apps.len(), &substrate, &mut ChaCha8Rng::seed_from_u64(spec.seed))?;
        let (history, test) = trace.split();
        Ok(Instance { seed, utilization, substrate, apps, trace_spec: spec, history, test })
    }

    pub fn psi(&self, scenario: &Scenario) -> Vec<f64> {
        scenario.plan.psi_per_app(&self.apps, &self.substrate)
    }

    pub fn plan(&self, scenario: &Scenario) -> Result<Plan, ExperimentError> {
        let outcome = make_plan(
            &self.substrate,
            &self.apps,
            &self.history,
            self.trace_spec.history_slots,
            &scenario.plan,
            &HighsSolver::default(),
            &mut stream_rng(self.seed, Stream::Bootstrap),
        )?;
        Ok(outcome.plan)
    }

    fn options(&self, scenario: &Scenario) -> EngineOptions {
        EngineOptions { check_invariants: scenario.check_invariants, horizon: Some(self.trace_spec.test_slots) }
    }

    /// Replays the test period with `algorithm`. OLIVE needs a plan.
    pub fn simulate(
        &self,
        scenario: &Scenario,
        algorithm: Algorithm,
        plan: Option<&Plan>,
    ) -> Result<RunOutput, ExperimentError> {
        let opts = self.options(scenario);
        let mut out = match algorithm {
            Algorithm::Olive => {
                let owned;
                let plan = match plan {
                    Some(p) => p,
                    None => {
                        owned = self.plan(scenario)?;
                        &owned
                    }
                };
                run_olive(&self.substrate, &self.apps, plan, &self.test, opts)?
            }
            Algorithm::QuickG => run_quickg(&self.substrate, &self.apps, &self.test, opts)?,
            Algorithm::FullG => run_fullg(&self.substrate, &self.apps, &self.test, opts, scenario.fullg_budget)?,
            Algorithm::SlotOff => run_slotoff(
                &self.substrate,
                &self.apps,
                &self.test,
                &self.psi(scenario),
                scenario.plan.quantiles,
                &HighsSolver::default(),
                opts,
            )?,
        };
        if !scenario.timing {
            out.runtime_ms = 0.0;
        }
        Ok(out)
    }

    pub fn report(&self, scenario: &Scenario, algorithm: Algorithm, out: &RunOutput) -> Result<RunReport, ExperimentError> {
        Ok(RunReport::build(
            algorithm.name(),
            self.seed,
            self.utilization,
            out,
            &self.psi(scenario),
            self.substrate.node_count(),
            scenario.window,
        )?)
    }
}

/// One finished algorithm run.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub algorithm: Algorithm,
    pub report: RunReport,
    pub output: RunOutput,
}

/// Builds the instance for `(seed, utilization)` and runs every algorithm on
/// it. The plan is computed once and shared.
pub fn run_cell(
    scenario: &Scenario,
    seed: u64,
    utilization: f64,
    algorithms: &[Algorithm],
) -> Result<Vec<CellRun>, ExperimentError> {
    let inst = Instance::build(scenario, seed, utilization)?;
    let plan = if algorithms.contains(&Algorithm::Olive) {
        Some(inst.plan(scenario)?)
    } else {
        None
    };
    algorithms
        .iter()
        .map(|&algorithm| {
            let output = inst.simulate(scenario, algorithm, plan.as_ref())?;
            let report = inst.report(scenario, algorithm, &output)?;
            Ok(CellRun { algorithm, report, output })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Scenario {
        Scenario {
            trace: TraceSpec { history_slots: 300, test_slots: 120, lambda: 2.0, ..Default::default() },
            plan: PlanConfig { resamples: 100, ..Default::default() },
            window: Window { start: 20, end: 100 },
            check_invariants: true,
            timing: false,
            ..Default::default()
        }
    }

    #[test]
    fn algorithm_names_roundtrip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("greedy".parse::<Algorithm>().is_err());
    }

    #[test]
    fn streams_differ() {
        let s: Vec<u64> = [Stream::Topology, Stream::Apps, Stream::Trace, Stream::Bootstrap]
            .into_iter()
            .map(|st| sub_seed(7, st))
            .collect();
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                assert_ne!(s[i], s[j]);
            }
        }
        assert_eq!(sub_seed(7, Stream::Trace), sub_seed(7, Stream::Trace));
    }

    #[test]
    fn cell_runs_every_algorithm_deterministically() {
        let sc = small();
        let a = run_cell(&sc, 3, 1.0, &Algorithm::ALL).unwrap();
        let b = run_cell(&sc, 3, 1.0, &Algorithm::ALL).unwrap();
        assert_eq!(a.len(), 4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.report, y.report);
            assert_eq!(x.output.events, y.output.events);
            assert!(x.output.cost_attribution_gap() < 1e-9);
        }
    }
}
