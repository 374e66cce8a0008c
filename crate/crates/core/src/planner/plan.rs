use rand::Rng;
use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate_history, AggregateKey};
use super::bootstrap::bootstrap_expected_demand;
use super::decompose::{extract_templates, Template};
use super::pvne::{build_pvne, default_psi, DemandInput, PvneModel};
use super::solver::{LpSolution, LpSolver};
use super::PlannerError;
use crate::model::{Application, Request, RequestId, SubstrateNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    /// Percentile of per-slot demand planned for.
    pub alpha: f64,
    pub resamples: usize,
    /// Number of rejection quantiles `P`.
    pub quantiles: usize,
    /// Fixed rejection factor for every application instead of the default.
    #[serde(default)]
    pub psi: Option<f64>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            alpha: 80.0,
            resamples: 1000,
            quantiles: 10,
            psi: None,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if !(self.alpha > 0.0 && self.alpha <= 100.0) {
            return Err(PlannerError::Config(format!("alpha {} outside (0, 100]", self.alpha)));
        }
        if self.resamples < 100 {
            return Err(PlannerError::Config("at least 100 bootstrap resamples".into()));
        }
        if self.quantiles == 0 {
            return Err(PlannerError::Config("at least one rejection quantile".into()));
        }
        if let Some(psi) = self.psi {
            if !(psi >= 0.0 && psi.is_finite()) {
                return Err(PlannerError::Config(format!("psi {psi} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Rejection factor per application.
    pub fn psi_per_app(&self, apps: &[Application], substrate: &SubstrateNetwork) -> Vec<f64> {
        apps.iter()
            .map(|a| self.psi.unwrap_or_else(|| default_psi(a, substrate)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanAggregate {
    pub key: AggregateKey,
    pub members: usize,
    /// Bootstrap estimate of the planned demand.
    pub demand: f64,
    pub ci: (f64, f64),
    pub psi: f64,
    /// Root allocation `y[root][origin]`.
    pub allocated: f64,
    pub layers: Vec<f64>,
    pub templates: Vec<Template>,
    /// Nonzero node assignments `(virtual node, substrate node, value)`.
    pub y: Vec<(u16, u32, f64)>,
    /// Nonzero arc flows `(virtual link, arc, value)`.
    pub flows: Vec<(u16, u32, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub quantiles: usize,
    pub objective: f64,
    pub psi: Vec<f64>,
    /// Sorted by key.
    pub aggregates: Vec<PlanAggregate>,
}

impl Plan {
    /// No aggregates: every request is handled without a plan.
    pub fn empty(psi: Vec<f64>) -> Self {
        Plan {
            quantiles: 1,
            objective: 0.0,
            psi,
            aggregates: Vec::new(),
        }
    }

    pub fn position(&self, key: AggregateKey) -> Option<usize> {
        self.aggregates.binary_search_by(|a| a.key.cmp(&key)).ok()
    }

    pub fn find(&self, key: AggregateKey) -> Option<&PlanAggregate> {
        self.position(key).map(|i| &self.aggregates[i])
    }

    pub fn template_count(&self) -> usize {
        self.aggregates.iter().map(|a| a.templates.len()).sum()
    }

    /// Structural checks: template weights add up to the allocated fraction
    /// and every template is a valid embedding for its aggregate.
    pub fn check(&self, apps: &[Application], substrate: &SubstrateNetwork) -> Result<(), PlannerError> {
        for agg in &self.aggregates {
            let sum: f64 = agg.templates.iter().map(|t| t.weight).sum();
            if (sum - agg.allocated).abs() > 1e-6 {
                return Err(PlannerError::Decomposition(format!(
                    "aggregate {:?}: template weights {sum} vs allocated {}",
                    agg.key, agg.allocated
                )));
            }
            let probe = Request {
                id: RequestId(u64::MAX),
                app: agg.key.app,
                origin: agg.key.origin,
                size: 1.0,
                arrival: 0,
                duration: 1,
            };
            let app = &apps[agg.key.app.index()];
            for t in &agg.templates {
                if !(t.weight > 0.0 && t.weight <= 1.0 + 1e-9) {
                    return Err(PlannerError::Decomposition(format!("template weight {}", t.weight)));
                }
                t.embedding
                    .validate(&probe, app, substrate)
                    .map_err(|e| PlannerError::Decomposition(e.to_string()))?;
            }
        }
        Ok(())
    }
}

/// Solved plan LP together with the model, for inspection and tests.
pub struct PlanOutcome {
    pub plan: Plan,
    pub model: PvneModel,
    pub solution: LpSolution,
}

/// Builds a plan from given demands: LP, solve, decompose.
pub fn plan_for_demands(
    substrate: &SubstrateNetwork,
    apps: &[Application],
    inputs: &[DemandInput],
    quantiles: usize,
    solver: &dyn LpSolver,
) -> Result<PlanOutcome, PlannerError> {
    let model = build_pvne(substrate, apps, inputs, quantiles);
    let solution = solver.solve(&model.lp)?;
    let decs = extract_templates(&model, &solution.x, apps, substrate)?;
    let x = &solution.x;
    let mut aggregates = Vec::with_capacity(model.aggregates.len());
    for (vars, dec) in model.aggregates.iter().zip(decs) {
        let y = vars
            .node
            .iter()
            .enumerate()
            .flat_map(|(q, row)| {
                row.iter().enumerate().filter_map(move |(s, v)| {
                    v.and_then(|v| (x[v.0] > 1e-9).then_some((q as u16, s as u32, x[v.0])))
                })
            })
            .collect();
        let flows = vars
            .flow
            .iter()
            .enumerate()
            .flat_map(|(l, row)| {
                row.iter()
                    .enumerate()
                    .filter_map(move |(a, v)| (x[v.0] > 1e-9).then_some((l as u16, a as u32, x[v.0])))
            })
            .collect();
        aggregates.push(PlanAggregate {
            key: vars.input.key,
            members: 0,
            demand: vars.input.demand,
            ci: (vars.input.demand, vars.input.demand),
            psi: vars.input.psi,
            allocated: dec.allocated,
            layers: vars.layers.iter().map(|v| x[v.0]).collect(),
            templates: dec.templates,
            y,
            flows,
        });
    }
    let plan = Plan {
        quantiles,
        objective: solution.objective,
        psi: Vec::new(),
        aggregates,
    };
    Ok(PlanOutcome {
        plan,
        model,
        solution,
    })
}

/// The offline phase: aggregate the history, estimate each aggregate's
/// demand by bootstrap, solve the plan LP and decompose it into templates.
pub fn make_plan(
    substrate: &SubstrateNetwork,
    apps: &[Application],
    history: &[Request],
    history_slots: u32,
    config: &PlanConfig,
    solver: &dyn LpSolver,
    rng: &mut impl Rng,
) -> Result<PlanOutcome, PlannerError> {
    config.validate()?;
    let psi = config.psi_per_app(apps, substrate);
    let series = aggregate_history(history, history_slots);
    let mut inputs = Vec::with_capacity(series.len());
    let mut stats = Vec::with_capacity(series.len());
    for s in &series {
        if s.key.app.index() >= apps.len() {
            return Err(PlannerError::Config(format!("history references unknown app {}", s.key.app)));
        }
        let est = bootstrap_expected_demand(&s.series, config.alpha, config.resamples, rng);
        inputs.push(DemandInput {
            key: s.key,
            demand: est.estimate,
            psi: psi[s.key.app.index()],
        });
        stats.push((s.key, s.members, est));
    }
    let mut outcome = plan_for_demands(substrate, apps, &inputs, config.quantiles, solver)?;
    outcome.plan.psi = psi;
    // Keep zero-demand aggregates visible with an empty template list.
    let mut all = Vec::with_capacity(stats.len());
    let mut solved = std::mem::take(&mut outcome.plan.aggregates).into_iter().peekable();
    for (key, members, est) in stats {
        let mut agg = match solved.peek() {
            Some(a) if a.key == key => solved.next().unwrap(),
            _ => PlanAggregate {
                key,
                members: 0,
                demand: est.estimate,
                ci: (0.0, 0.0),
                psi: outcome.plan.psi[key.app.index()],
                allocated: 0.0,
                layers: Vec::new(),
                templates: Vec::new(),
                y: Vec::new(),
                flows: Vec::new(),
            },
        };
        agg.members = members;
        agg.ci = (est.ci_low, est.ci_high);
        all.push(agg);
    }
    outcome.plan.aggregates = all;
    Ok(outcome)
}
