//! Seeded, resumable batch runs: single experiments and ablation suites.

mod config;
mod pipeline;
mod report;
mod stage;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::{ExperimentConfig, Suite, TreeVariant};
pub use pipeline::{CorpusData, CrossMse, EncoderEntry, NamedTable, SystemRun, SystemSpec, UtteranceScore};
pub use report::{Comparison, RunReport, SystemReport};
pub use stage::Stage;

use crate::dsdt::{PlanVariant, SatMode};
use crate::ensemble::{DecoderKind, ModelCache};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use pipeline::{build_tables, corpus_stage, metric_file, run_system, write_tables, Subsets};
use stage::{write_json, StageRunner};

fn open_cache(dir: &Path, resume: bool) -> Result<ModelCache> {
    if !resume && dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    ModelCache::on_disk(dir)
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn system_report(spec: SystemSpec, runs: Vec<SystemRun>, cfg: &ExperimentConfig, subsets: &Subsets) -> Result<SystemReport> {
    let pooled: Vec<UtteranceScore> = runs.iter().flat_map(|r| r.scores.iter().cloned()).collect();
    let tables = build_tables(&cfg.metrics, &pooled, &cfg.corpus.test_snr_levels, subsets)?;
    let test_mse = runs.iter().map(|r| r.test_mse).sum::<f64>() / runs.len().max(1) as f64;
    let param_count = runs.first().map_or(0, |r| r.param_count);
    Ok(SystemReport { spec, runs, tables, test_mse, param_count })
}

fn finish_report(root: &Path, mut report: RunReport, prefix_systems: bool) -> Result<RunReport> {
    let dir = root.join("tables");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut artifacts = Vec::new();
    for s in &report.systems {
        let prefix = if prefix_systems { format!("{}_", s.spec.name) } else { String::new() };
        write_tables(&dir, &prefix, &s.tables)?;
        for t in &s.tables {
            artifacts.push(PathBuf::from("tables").join(format!("{prefix}{}.csv", t.name)));
            artifacts.push(PathBuf::from("tables").join(format!("{prefix}{}_full.csv", t.name)));
        }
    }
    report.artifacts = artifacts;
    write_json(&root.join("config.json"), &report.config)?;
    write_atomic(&root.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Runs the full pipeline for one system.
pub fn run_experiment(cfg: &ExperimentConfig, resume: bool) -> Result<RunReport> {
    run_until(cfg, resume, Stage::Report).map(|r| r.expect("the report stage yields a report"))
}

/// Runs the pipeline up to and including `until`. Earlier finished stages
/// are reused only with `resume`.
pub fn run_until(cfg: &ExperimentConfig, resume: bool, until: Stage) -> Result<Option<RunReport>> {
    cfg.validate()?;
    let cfg = cfg.resolved();
    let root = cfg.out_dir.clone();
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let mut runner = StageRunner::new(resume, "");
    let corpus = corpus_stage(&mut runner, &root, &cfg.corpus)?;
    if until == Stage::Corpus {
        return Ok(None);
    }
    let cache = open_cache(&root.join("cache"), resume)?;
    let spec = SystemSpec::from_config("system", &cfg);
    let Some(run) = run_system(&mut runner, &root, &cfg, &spec, &corpus, &cache, &[], until)? else {
        return Ok(None);
    };
    if until < Stage::Report {
        return Ok(None);
    }
    let systems = vec![system_report(spec, vec![run], &cfg, &[])?];
    let report = RunReport {
        config_digest: cfg.digest(),
        config: cfg.clone(),
        suite: None,
        seeds: vec![cfg.seed],
        systems,
        comparisons: Vec::new(),
        stage_seconds: runner.timings,
        artifacts: Vec::new(),
    };
    finish_report(&root, report, false).map(Some)
}

/// Systems trained by each suite, in comparison order (later entries are
/// tested as improvements over earlier ones).
pub fn suite_systems(suite: Suite, base: &ExperimentConfig) -> Vec<SystemSpec> {
    let with = |name: &str, f: &dyn Fn(&mut SystemSpec)| {
        let mut s = SystemSpec::from_config(name, base);
        f(&mut s);
        s.oracle = s.decoder == DecoderKind::Bf;
        s
    };
    match suite {
        Suite::UatVsRt => vec![
            with("single", &|s| {
                s.tree = TreeVariant::Uat;
                s.plan = PlanVariant::Custom(vec![0]);
            }),
            with("rt", &|s| s.tree = TreeVariant::Rt),
            with("uat", &|s| s.tree = TreeVariant::Uat),
        ],
        Suite::DecoderTypes => [DecoderKind::Bf, DecoderKind::Lr, DecoderKind::Fc, DecoderKind::Cn]
            .into_iter()
            .map(|k| with(&k.label().to_ascii_lowercase(), &|s| s.decoder = k))
            .collect(),
        Suite::SsVsWd => vec![
            with("ss", &|s| s.sat_mode = SatMode::Ss),
            with("wd", &|s| s.sat_mode = SatMode::Wd),
        ],
        Suite::SeenVsUnseen => vec![with("base", &|_| {})],
    }
}

/// Corpus changes a suite needs, and the noise subsets it reports.
fn suite_corpus(suite: Suite, base: &ExperimentConfig) -> (ExperimentConfig, Vec<(String, Vec<String>)>) {
    let mut cfg = base.clone();
    if suite != Suite::SeenVsUnseen {
        return (cfg, Vec::new());
    }
    cfg.corpus.disjoint_noise = false;
    let mut kinds = cfg.corpus.train_noise_kinds.clone();
    for k in &base.corpus.test_noise_kinds {
        if !kinds.contains(k) {
            kinds.push(*k);
        }
    }
    cfg.corpus.test_noise_kinds = kinds.clone();
    let (seen, unseen): (Vec<_>, Vec<_>) = kinds.iter().partition(|k| cfg.corpus.train_noise_kinds.contains(k));
    let ids = |v: Vec<&crate::corpus::NoiseKind>| v.into_iter().map(|k| k.id().to_string()).collect();
    (cfg, vec![("seen".into(), ids(seen)), ("unseen".into(), ids(unseen))])
}

/// Trains every system of `suite` on `n_seeds` seeds split from the base
/// seed, then reports per-seed and pooled tables and paired tests.
pub fn run_ablation(suite: Suite, base: &ExperimentConfig, n_seeds: usize, resume: bool) -> Result<RunReport> {
    if n_seeds < 3 {
        return Err(Error::Config(format!("an ablation needs at least 3 seeds, got {n_seeds}")));
    }
    base.validate()?;
    let (cfg, subsets) = suite_corpus(suite, base);
    cfg.validate()?;
    let cfg = cfg.resolved();
    let root = cfg.out_dir.clone();
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let specs = suite_systems(suite, &cfg);
    let seeds: Vec<u64> = (0..n_seeds).map(|k| derive_seed(cfg.seed, "ablation-seed", k as u64)).collect();
    let mut runner = StageRunner::new(resume, "");
    let mut runs: Vec<Vec<SystemRun>> = vec![Vec::new(); specs.len()];
    for (k, &seed) in seeds.iter().enumerate() {
        let label = format!("seed_{k:02}");
        let seed_dir = root.join(&label);
        fs::create_dir_all(&seed_dir).map_err(|e| Error::io(&seed_dir, e))?;
        let seed_cfg = cfg.with_seed(seed);
        let mut seed_runner = runner.child(&label);
        let corpus = corpus_stage(&mut seed_runner, &seed_dir, &seed_cfg.corpus)?;
        let cache = open_cache(&seed_dir.join("cache"), resume)?;
        for (spec, out) in specs.iter().zip(runs.iter_mut()) {
            let mut sys_runner = seed_runner.child(&spec.name);
            let run = run_system(&mut sys_runner, &seed_dir.join(&spec.name), &seed_cfg, spec, &corpus, &cache, &subsets, Stage::Report)?
                .expect("full run yields a result");
            out.push(run);
            log::info!("{label}/{}: done", spec.name);
            runner.absorb(sys_runner);
        }
        runner.absorb(seed_runner);
    }
    let systems = specs
        .into_iter()
        .zip(runs)
        .map(|(spec, r)| system_report(spec, r, &cfg, &subsets))
        .collect::<Result<Vec<_>>>()?;
    let comparisons = report::compare_all(&systems);
    let report = RunReport {
        config_digest: cfg.digest(),
        config: cfg.clone(),
        suite: Some(suite),
        seeds,
        systems,
        comparisons,
        stage_seconds: runner.timings,
        artifacts: Vec::new(),
    };
    finish_report(&root, report, true)
}

/// File name stem of a metric's table.
pub fn table_name(metric: crate::eval::Metric) -> String {
    metric_file(metric)
}
