use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use olive_core::experiment::{Algorithm, Scenario};
use serde::{Deserialize, Serialize};

use crate::Missing;

/// The single config document. Utilizations are fractions of the edge
/// capacity (1.0 = 100%).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Substrate JSON used for every seed instead of a generated topology.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topology_file: Option<PathBuf>,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    pub utilizations: Vec<f64>,
    pub out: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: Scenario::default(),
            topology_file: None,
            algorithms: vec![Algorithm::Olive, Algorithm::QuickG, Algorithm::SlotOff],
            seeds: vec![0],
            utilizations: vec![1.0],
            out: PathBuf::from("results"),
            jobs: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| Missing::new("config file", path))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        // Relative artifact paths are taken from the config's directory.
        if let Some(dir) = path.parent() {
            if let Some(t) = cfg.topology_file.as_mut() {
                if t.is_relative() {
                    *t = dir.join(&*t);
                }
            }
        }
        Ok(cfg)
    }

    /// Applies `OLIVE_SEEDS` and `OLIVE_OUT` if they are set.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(s) = get("OLIVE_SEEDS") {
            self.seeds = parse_seeds(&s).context("OLIVE_SEEDS")?;
        }
        if let Some(o) = get("OLIVE_OUT") {
            self.out = PathBuf::from(o);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("no seeds given");
        }
        let unique: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if unique.len() != self.seeds.len() {
            bail!("seeds must be unique");
        }
        if self.algorithms.is_empty() {
            bail!("no algorithms given");
        }
        if let Some(u) = self.utilizations.iter().find(|u| !(u.is_finite() && **u > 0.0)) {
            bail!("utilization must be positive, got {u}");
        }
        if self.utilizations.is_empty() {
            bail!("no utilizations given");
        }
        if let Some(t) = &self.topology_file {
            if !t.is_file() {
                return Err(Missing::new("topology file", t).into());
            }
        }
        Ok(())
    }
}

/// `"3"`, `"0,2,5"`, `"0-29"` or a mix like `"0-4,10"`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
                if b < a {
                    bail!("empty seed range {part}");
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().with_context(|| format!("bad seed {part:?}"))?),
        }
    }
    Ok(out)
}

/// Comma-separated percentages, `"60,100,140"`, as fractions.
pub fn parse_utils(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let v: f64 = p.trim_end_matches('%').parse().with_context(|| format!("bad utilization {p:?}"))?;
            Ok(v / 100.0)
        })
        .collect()
}

pub fn parse_algos(s: &str) -> Result<Vec<Algorithm>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<Algorithm>().map_err(anyhow::Error::msg))
        .collect()
}

/// Directory name of a utilization, e.g. `u140`.
pub fn util_tag(u: f64) -> String {
    format!("u{}", (u * 100.0).round() as i64)
}
