use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Suite};
use super::pipeline::{NamedTable, SystemRun, SystemSpec};
use crate::error::Result;
use crate::eval::{paired_ttest, TTestResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub spec: SystemSpec,
    pub runs: Vec<SystemRun>,
    /// Tables over the scores of every seed pooled per cell.
    pub tables: Vec<NamedTable>,
    /// Seed-averaged test LPS MSE.
    pub test_mse: f64,
    pub param_count: usize,
}

impl SystemReport {
    pub fn table(&self, name: &str) -> Option<&NamedTable> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Paired one-sided test of `b` over `a` on one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub table: String,
    /// Pairs are seed-averaged (noise, SNR) cell means.
    pub by_condition: Option<TTestResult>,
    /// Supplementary: pairs are per-utterance scores across all seeds.
    pub by_utterance: Option<TTestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_digest: String,
    /// The resolved configuration.
    pub config: ExperimentConfig,
    pub suite: Option<Suite>,
    pub seeds: Vec<u64>,
    pub systems: Vec<SystemReport>,
    pub comparisons: Vec<Comparison>,
    /// Wall-clock per executed stage; reused stages are absent.
    pub stage_seconds: BTreeMap<String, f64>,
    /// Table CSVs, relative to the output directory.
    pub artifacts: Vec<PathBuf>,
}

impl RunReport {
    pub fn system(&self, name: &str) -> Option<&SystemReport> {
        self.systems.iter().find(|s| s.spec.name == name)
    }

    pub fn comparison(&self, a: &str, b: &str, table: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.a == a && c.b == b && c.table == table)
    }

    /// JSON without wall-clock fields; equal for identical configs.
    pub fn content_json(&self) -> Result<String> {
        let stripped = RunReport { stage_seconds: BTreeMap::new(), ..self.clone() };
        Ok(serde_json::to_string_pretty(&stripped)?)
    }
}

fn condition_pairs(a: &NamedTable, b: &NamedTable) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (r, noise) in a.table.noises.iter().enumerate() {
        let Some(rb) = b.table.noises.iter().position(|n| n == noise) else { continue };
        for (c, snr) in a.table.snr_levels.iter().enumerate() {
            let Some(cb) = b.table.snr_levels.iter().position(|s| s == snr) else { continue };
            if let (Some(x), Some(y)) = (a.table.cells[r][c], b.table.cells[rb][cb]) {
                xs.push(x);
                ys.push(y);
            }
        }
    }
    (xs, ys)
}

fn utterance_pairs(a: &SystemReport, b: &SystemReport, table: &NamedTable) -> (Vec<f64>, Vec<f64>) {
    let Some(k) = a.runs.first().and_then(|r| r.metrics.iter().position(|m| m.name() == table.table.metric)) else {
        return (Vec::new(), Vec::new());
    };
    let keep = |noise: &str| table.table.noises.iter().any(|n| n == noise);
    let index: HashMap<(u64, &str), f64> = b
        .runs
        .iter()
        .flat_map(|r| r.scores.iter().map(move |s| ((r.seed, s.id.as_str()), s.values[k])))
        .collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in &a.runs {
        for s in r.scores.iter().filter(|s| keep(&s.noise)) {
            if let Some(y) = index.get(&(r.seed, s.id.as_str())) {
                xs.push(s.values[k]);
                ys.push(*y);
            }
        }
    }
    (xs, ys)
}

/// Tests every later system against every earlier one, per table.
pub(crate) fn compare_all(systems: &[SystemReport]) -> Vec<Comparison> {
    let mut out = Vec::new();
    for (i, a) in systems.iter().enumerate() {
        for b in &systems[i + 1..] {
            for ta in &a.tables {
                let Some(tb) = b.table(&ta.name) else { continue };
                let (x, y) = condition_pairs(ta, tb);
                let (u, v) = utterance_pairs(a, b, ta);
                out.push(Comparison {
                    a: a.spec.name.clone(),
                    b: b.spec.name.clone(),
                    table: ta.name.clone(),
                    by_condition: paired_ttest(&x, &y).ok(),
                    by_utterance: paired_ttest(&u, &v).ok(),
                });
            }
        }
    }
    out
}
