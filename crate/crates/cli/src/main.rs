//! `olive`: generate topologies and traces, plan, simulate and report.

mod config;
mod pipeline;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use olive_core::engine::EngineError;
use olive_core::experiment::ExperimentError;
use olive_core::model::ModelError;
use olive_core::planner::PlannerError;
use olive_core::workload::Preset;

use config::{parse_algos, parse_seeds, parse_utils, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "olive", version, about = "Plan-based online virtual network embedding simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seeds, e.g. `0-29` or `1,4,7`. Overrides OLIVE_SEEDS.
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Output directory. Overrides OLIVE_OUT.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Utilizations in percent, e.g. `60,100,140`.
    #[arg(long, global = true)]
    util: Option<String>,
    /// Algorithms, e.g. `olive,quickg,slotoff`.
    #[arg(long, global = true)]
    algos: Option<String>,
    /// Topology preset (iris, citta-studi, 5gen, 100n150e, desk10).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Worker threads.
    #[arg(long, short = 'j', global = true)]
    jobs: Option<usize>,
    /// Check ledger consistency and capacities after every slot.
    #[arg(long, global = true)]
    check_invariants: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Write one substrate JSON per seed.
    GenTopology,
    /// Write applications and history/test traces per seed and utilization.
    GenTrace,
    /// Solve the offline plan of every cell.
    Plan,
    /// Replay the test traces and append result rows.
    Simulate,
    /// Summarize the results file per algorithm and utilization.
    Report,
    /// All of the above in order.
    Run,
}

/// A required input file is not there.
#[derive(Debug)]
pub struct Missing {
    what: String,
    path: PathBuf,
}

impl Missing {
    pub fn new(what: &str, path: &Path) -> Self {
        Missing { what: what.to_string(), path: path.to_path_buf() }
    }
}

impl fmt::Display for Missing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "missing {}: {}", self.what, self.path.display())
    }
}

impl std::error::Error for Missing {}

const EXIT_SOLVER: u8 = 2;
const EXIT_MISSING: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

fn planner_code(e: &PlannerError) -> Option<u8> {
    matches!(e, PlannerError::Solver(_)).then_some(EXIT_SOLVER)
}

fn engine_code(e: &EngineError) -> Option<u8> {
    match e {
        EngineError::Invariant { .. } => Some(EXIT_INVARIANT),
        EngineError::Model(m) => model_code(m),
        EngineError::Planner(p) => planner_code(p),
        _ => None,
    }
}

fn model_code(e: &ModelError) -> Option<u8> {
    match e {
        ModelError::CapacityViolation { .. }
        | ModelError::NegativeResidual { .. }
        | ModelError::DoubleAllocation(_)
        | ModelError::NotAllocated(_) => Some(EXIT_INVARIANT),
        _ => None,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        let code = if cause.is::<Missing>() {
            Some(EXIT_MISSING)
        } else if let Some(e) = cause.downcast_ref::<ExperimentError>() {
            match e {
                ExperimentError::Planner(p) => planner_code(p),
                ExperimentError::Engine(e) => engine_code(e),
                _ => None,
            }
        } else if let Some(e) = cause.downcast_ref::<EngineError>() {
            engine_code(e)
        } else if let Some(e) = cause.downcast_ref::<PlannerError>() {
            planner_code(e)
        } else {
            None
        };
        if let Some(c) = code {
            return c;
        }
    }
    1
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_env(|k| std::env::var(k).ok())?;
    if let Some(s) = &common.seed {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(u) = &common.util {
        cfg.utilizations = parse_utils(u)?;
    }
    if let Some(a) = &common.algos {
        cfg.algorithms = parse_algos(a)?;
    }
    if let Some(p) = &common.preset {
        let preset: Preset = p.parse()?;
        cfg.scenario.topology = olive_core::workload::TopologySpec::preset(preset, 0);
    }
    if common.jobs.is_some() {
        cfg.jobs = common.jobs;
    }
    cfg.scenario.check_invariants |= common.check_invariants;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(&cli.common)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs.unwrap_or(0)).build()?;
    pool.install(|| {
        let stages: &[Command] = match cli.command {
            Command::Run => &[
                Command::GenTopology,
                Command::GenTrace,
                Command::Plan,
                Command::Simulate,
                Command::Report,
            ],
            ref c => std::slice::from_ref(c),
        };
        for stage in stages {
            match stage {
                Command::GenTopology => pipeline::gen_topology(&cfg)?,
                Command::GenTrace => pipeline::gen_trace(&cfg)?,
                Command::Plan => pipeline::plan(&cfg)?,
                Command::Simulate => pipeline::simulate(&cfg)?,
                Command::Report => pipeline::report(&cfg)?,
                Command::Run => unreachable!(),
            }
        }
        Ok(())
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
