use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, TreeVariant};
use super::stage::{read_json, write_json, Stage, StageRunner};
use crate::corpus::{build_corpus, load_corpus, wav_read, wav_write, CorpusConfig, Split, UtterancePair, Waveform};
use crate::dsdt::{attach_sat, build_rt, build_uat, nc_partition, select_plan, Dsdt, PartitionPlan, PlanVariant, SatMode};
use crate::dsp::Stft;
use crate::ensemble::{encode_nodes, prepare_corpus, train_components, DaemeSystem, DecoderKind, ModelCache};
use crate::error::{Error, Result};
use crate::eval::{evaluate, make_table, Metric, ScoreRecord, ScoreTable};
use crate::seed::ContentHasher;

/// Train and test split of a synthesized (or ingested) corpus, as read back
/// from disk.
pub struct CorpusData {
    pub train: Vec<UtterancePair>,
    pub test: Vec<UtterancePair>,
    pub content_digest: String,
}

pub(crate) fn corpus_stage(runner: &mut StageRunner, root: &Path, cfg: &CorpusConfig) -> Result<CorpusData> {
    let key = cfg.digest();
    let dir = runner.run(
        root,
        Stage::Corpus,
        &key,
        |d| d.join("manifest.json").exists(),
        |tmp| {
            let (pairs, manifest) = build_corpus(cfg)?;
            crate::corpus::write_corpus(tmp, &pairs, &manifest)
        },
    )?;
    // Both fresh and resumed runs continue from the quantized files.
    let (pairs, manifest) = load_corpus(&dir).map_err(|e| e.in_stage("corpus"))?;
    let (train, test) = pairs.into_iter().partition(|p| p.tag.split == Split::Train);
    Ok(CorpusData { train, test, content_digest: manifest.content_digest })
}

/// One system in an experiment: how its tree, plan and decoder are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: String,
    pub tree: TreeVariant,
    pub plan: PlanVariant,
    pub sat_mode: SatMode,
    pub decoder: DecoderKind,
    /// Uses test-time attribute knowledge (BF decoding).
    pub oracle: bool,
}

impl SystemSpec {
    pub fn from_config(name: &str, cfg: &ExperimentConfig) -> Self {
        SystemSpec {
            name: name.to_string(),
            tree: cfg.tree.clone(),
            plan: cfg.plan.clone(),
            sat_mode: cfg.sat_mode,
            decoder: cfg.decoder.kind,
            oracle: cfg.decoder.kind == DecoderKind::Bf,
        }
    }
}

/// Named table; names are `<metric>` or `<metric>_<subset>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTable {
    pub name: String,
    pub table: ScoreTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub id: String,
    pub noise: String,
    pub snr_db: f64,
    /// Aligned with the run's metric list.
    pub values: Vec<f64>,
    /// Mean squared LPS error of the enhanced features.
    pub lps_mse: f64,
}

/// `matrix[i][j]`: MSE of plan node `i`'s output on node `j`'s training members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMse {
    pub nodes: Vec<usize>,
    pub labels: Vec<String>,
    pub parents: Vec<Option<usize>>,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderEntry {
    pub node: usize,
    pub label: String,
    pub band: String,
    pub cache_key: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemRun {
    pub seed: u64,
    pub plan_label: String,
    pub encoder: Vec<EncoderEntry>,
    pub param_count: usize,
    pub cross_mse: CrossMse,
    pub test_mse: f64,
    pub metrics: Vec<Metric>,
    pub scores: Vec<UtteranceScore>,
    pub tables: Vec<NamedTable>,
}

/// Noise-id subsets reported as separate tables (e.g. seen / unseen).
pub type Subsets = [(String, Vec<String>)];

fn build_tree(spec: &SystemSpec, cfg: &ExperimentConfig, train: &[UtterancePair]) -> Result<(Dsdt, PartitionPlan)> {
    let tree = match spec.tree {
        TreeVariant::Uat => build_uat(train, cfg.snr_threshold_db)?,
        TreeVariant::Rt => build_rt(train, cfg.tree_seed())?,
        TreeVariant::Nc { clusters } => nc_partition(train, clusters, cfg.tree_seed())?.to_tree(),
    };
    tree.check_partition_law()?;
    let mut plan = select_plan(&tree, spec.plan.clone())?;
    if spec.sat_mode != SatMode::None {
        plan = attach_sat(&plan, spec.sat_mode)?;
    }
    Ok((tree, plan))
}

pub(crate) fn network_digest(net: &crate::nn::Network) -> String {
    let mut h = ContentHasher::new();
    h.update_f64s(net.params());
    let (i, o) = net.norms();
    for n in [i, o].into_iter().flatten() {
        h.update_f64s(&n.mean);
        h.update_f64s(&n.scale);
    }
    h.finish()
}

fn mse(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok((a - b).mapv(|v| v * v).mean().unwrap_or(0.0))
}

fn cross_mse(
    tree: &Dsdt,
    plan: &PartitionPlan,
    encoder: &crate::ensemble::MultiBranchEncoder,
    data: &[crate::ensemble::Prepared],
    cfg: &ExperimentConfig,
) -> Result<CrossMse> {
    let index: HashMap<&str, usize> = data.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    // Per-utterance MSE of every node output.
    let per_utt: Vec<Vec<f64>> = data
        .par_iter()
        .map(|p| {
            encode_nodes(encoder, plan, &p.noisy, &cfg.features)?
                .iter()
                .map(|z| mse(z, &p.clean_lps))
                .collect()
        })
        .collect::<Result<_>>()?;
    let frames: Vec<f64> = data.iter().map(|p| p.clean_lps.nrows() as f64).collect();
    let mut matrix = vec![vec![0.0; plan.nodes.len()]; plan.nodes.len()];
    for (j, &nj) in plan.nodes.iter().enumerate() {
        let members = &tree.node(nj)?.members;
        let rows: Vec<usize> = members.iter().filter_map(|m| index.get(m.as_str()).copied()).collect();
        let total: f64 = rows.iter().map(|&r| frames[r]).sum();
        for (i, row) in matrix.iter_mut().enumerate() {
            // Frame-weighted, so this is the MSE over the pooled subset.
            row[j] = rows.iter().map(|&r| per_utt[r][i] * frames[r]).sum::<f64>() / total.max(1.0);
        }
    }
    Ok(CrossMse {
        nodes: plan.nodes.clone(),
        labels: plan.nodes.iter().map(|&n| tree.node(n).map(|x| x.label.clone())).collect::<Result<_>>()?,
        parents: plan.nodes.iter().map(|&n| tree.node(n).map(|x| x.parent)).collect::<Result<_>>()?,
        matrix,
    })
}

pub(crate) fn metric_file(m: Metric) -> String {
    m.name().to_ascii_lowercase()
}

pub(crate) fn build_tables(
    metrics: &[Metric],
    scores: &[UtteranceScore],
    snr_levels: &[f64],
    subsets: &Subsets,
) -> Result<Vec<NamedTable>> {
    let mut out = Vec::new();
    for (k, &m) in metrics.iter().enumerate() {
        let all: Vec<ScoreRecord> = scores
            .iter()
            .map(|s| ScoreRecord { noise: s.noise.clone(), snr_db: s.snr_db, value: s.values[k] })
            .collect();
        out.push(NamedTable { name: metric_file(m), table: make_table(m.name(), &all, snr_levels)? });
        for (label, noises) in subsets {
            let part: Vec<ScoreRecord> = all.iter().filter(|r| noises.contains(&r.noise)).cloned().collect();
            if part.is_empty() {
                continue;
            }
            out.push(NamedTable {
                name: format!("{}_{label}", metric_file(m)),
                table: make_table(m.name(), &part, snr_levels)?,
            });
        }
    }
    Ok(out)
}

pub(crate) fn write_tables(dir: &Path, prefix: &str, tables: &[NamedTable]) -> Result<()> {
    for t in tables {
        let base = format!("{prefix}{}", t.name);
        let p = dir.join(format!("{base}.csv"));
        std::fs::write(&p, t.table.to_csv()).map_err(|e| Error::io(&p, e))?;
        let p = dir.join(format!("{base}_full.csv"));
        std::fs::write(&p, t.table.to_csv_full()).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// Runs one system's stages under `root` against an already built corpus.
/// Returns `None` when `until` stops before the tables exist.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_system(
    runner: &mut StageRunner,
    root: &Path,
    cfg: &ExperimentConfig,
    spec: &SystemSpec,
    corpus: &CorpusData,
    cache: &ModelCache,
    subsets: &Subsets,
    until: Stage,
) -> Result<Option<SystemRun>> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let key = {
        let mut h = ContentHasher::new();
        h.update_str(&cfg.digest());
        h.update_str(&serde_json::to_string(spec)?);
        h.update_str(&serde_json::to_string(subsets)?);
        h.update_str(&corpus.content_digest);
        h.finish()
    };

    let dir = runner.run(root, Stage::Tree, &key, |d| d.join("tree.json").exists(), |tmp| {
        let (tree, plan) = build_tree(spec, cfg, &corpus.train)?;
        write_json(&tmp.join("tree.json"), &tree)?;
        write_json(&tmp.join("plan.json"), &plan)
    })?;
    let tree: Dsdt = read_json(&dir.join("tree.json"))?;
    let plan: PartitionPlan = read_json(&dir.join("plan.json"))?;
    if until <= Stage::Tree {
        return Ok(None);
    }

    let dir = runner.run(root, Stage::Components, &key, |d| d.join("encoder.json").exists(), |tmp| {
        let data = prepare_corpus(&corpus.train, &plan, &cfg.features)?;
        let encoder = train_components(&tree, &plan, &data, &cfg.features, &cfg.component, &corpus.content_digest, cache)?;
        let entries: Vec<EncoderEntry> = encoder
            .components
            .iter()
            .map(|c| {
                Ok(EncoderEntry {
                    node: c.branch.node,
                    label: tree.node(c.branch.node)?.label.clone(),
                    band: format!("{:?}", c.branch.band).to_ascii_lowercase(),
                    cache_key: c.cache_key.clone(),
                    digest: network_digest(&c.net),
                })
            })
            .collect::<Result<_>>()?;
        write_json(&tmp.join("encoder.json"), &entries)?;
        write_json(&tmp.join("cross_mse.json"), &cross_mse(&tree, &plan, &encoder, &data, cfg)?)
    })?;
    let encoder: Vec<EncoderEntry> = read_json(&dir.join("encoder.json"))?;
    let cross: CrossMse = read_json(&dir.join("cross_mse.json"))?;
    if until <= Stage::Components {
        return Ok(None);
    }

    let mut sys_cfg = cfg.system_config();
    sys_cfg.decoder.kind = spec.decoder;
    let dir = runner.run(root, Stage::Decoder, &key, |d| DaemeSystem::load(&d.join("bundle")).is_ok(), |tmp| {
        let system = DaemeSystem::train(&tree, &plan, &corpus.train, &sys_cfg, &corpus.content_digest, cache)?;
        system.save(&tmp.join("bundle"))
    })?;
    let system = DaemeSystem::load(&dir.join("bundle")).map_err(|e| e.in_stage("decoder"))?;
    if until <= Stage::Decoder {
        return Ok(None);
    }

    let dir = runner.run(root, Stage::Enhance, &key, |d| d.join("lps_mse.json").exists(), |tmp| {
        let stft = Stft::new(system.features.stft);
        let mses: Vec<(String, f64)> = corpus
            .test
            .par_iter()
            .map(|p| {
                let (lps, phase) = system.enhance_features(&p.noisy, Some(&p.tag))?;
                let (clean, _) = stft.analyze(p.clean.samples())?;
                let err = mse(&lps.frames, &clean.frames)?;
                let wave = Waveform::new(stft.synthesize(&lps, &phase)?, p.noisy.sample_rate())?;
                wav_write(&wave, tmp.join(format!("{}.wav", p.id)))?;
                Ok((p.id.clone(), err))
            })
            .collect::<Result<_>>()?;
        write_json(&tmp.join("lps_mse.json"), &mses)
    })?;
    let lps_mse: Vec<(String, f64)> = read_json(&dir.join("lps_mse.json"))?;
    let enhance_dir = dir;
    if until <= Stage::Enhance {
        return Ok(None);
    }

    let dir = runner.run(root, Stage::Metrics, &key, |d| d.join("scores.json").exists(), |tmp| {
        let scores: Vec<UtteranceScore> = corpus
            .test
            .par_iter()
            .zip(&lps_mse)
            .map(|(p, (id, err))| {
                debug_assert_eq!(&p.id, id);
                let enhanced = wav_read(enhance_dir.join(format!("{}.wav", p.id)))?;
                let values = cfg.metrics.iter().map(|&m| evaluate(m, &p.clean, &enhanced)).collect::<Result<_>>()?;
                let snr_db = p.tag.snr_db.ok_or_else(|| Error::UntaggedPair(p.id.clone()))?;
                Ok(UtteranceScore { id: p.id.clone(), noise: p.tag.noise_id.clone(), snr_db, values, lps_mse: *err })
            })
            .collect::<Result<_>>()?;
        write_json(&tmp.join("scores.json"), &scores)
    })?;
    let scores: Vec<UtteranceScore> = read_json(&dir.join("scores.json"))?;
    if until <= Stage::Metrics {
        return Ok(None);
    }

    let dir = runner.run(root, Stage::Tables, &key, |d| d.join("tables.json").exists(), |tmp| {
        let tables = build_tables(&cfg.metrics, &scores, &cfg.corpus.test_snr_levels, subsets)?;
        write_tables(tmp, "", &tables)?;
        write_json(&tmp.join("tables.json"), &tables)
    })?;
    let tables: Vec<NamedTable> = read_json(&dir.join("tables.json"))?;

    let test_mse = if scores.is_empty() { 0.0 } else { scores.iter().map(|s| s.lps_mse).sum::<f64>() / scores.len() as f64 };
    Ok(Some(SystemRun {
        seed: cfg.seed,
        plan_label: plan.label(),
        encoder,
        param_count: system.param_count(),
        cross_mse: cross,
        test_mse,
        metrics: cfg.metrics.clone(),
        scores,
        tables,
    }))
}
