use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::components::{train_components, ComponentConfig, ComponentModel, ModelCache, MultiBranchEncoder};
use super::decoder::{decode_bf, fit_decoder, Decoder, DecoderConfig, DecoderKind, LinearDecoder};
use super::features::{concat_nodes, hold_floor, merge_node, FeatureConfig, NoisyView, Prepared};
use crate::corpus::{AttributeTag, UtterancePair, Waveform};
use crate::dsdt::{Branch, Dsdt, PartitionPlan};
use crate::dsp::{LpsFeatures, PhaseMatrix, Stft};
use crate::error::{Error, Result};
use crate::nn::{load_checkpoint, save_checkpoint, SeqPair};
use crate::seed::{derive_seed, sha256_hex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SystemConfig {
    pub features: FeatureConfig,
    pub component: ComponentConfig,
    pub decoder: DecoderConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub component: ComponentConfig,
    pub decoder: DecoderConfig,
    pub corpus_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaemeSystem {
    pub tree: Dsdt,
    pub plan: PartitionPlan,
    pub encoder: MultiBranchEncoder,
    pub decoder: Decoder,
    pub features: FeatureConfig,
    pub provenance: Provenance,
}

/// Feature views of every training pair, in input order.
pub fn prepare_corpus(pairs: &[UtterancePair], plan: &PartitionPlan, features: &FeatureConfig) -> Result<Vec<Prepared>> {
    pairs.par_iter().map(|p| Prepared::new(p, plan.sat_mode, features)).collect()
}

/// Full-band LPS per plan node from a bare encoder.
pub fn encode_nodes(encoder: &MultiBranchEncoder, plan: &PartitionPlan, view: &NoisyView, features: &FeatureConfig) -> Result<Vec<Array2<f64>>> {
    let z = encoder.encode(view, features)?;
    let k = z.len() / plan.nodes.len().max(1);
    z.chunks(k.max(1)).map(|c| merge_node(c, plan.sat_mode, view, features)).collect()
}

/// Per-utterance (concatenated node outputs, clean LPS) pairs for decoder fitting.
pub fn decoder_training_set(encoder: &MultiBranchEncoder, plan: &PartitionPlan, data: &[Prepared], features: &FeatureConfig) -> Result<Vec<SeqPair>> {
    data.par_iter()
        .map(|p| Ok((concat_nodes(&encode_nodes(encoder, plan, &p.noisy, features)?)?, p.clean_lps.clone())))
        .collect()
}

impl DaemeSystem {
    /// Trains every branch of `plan`, then the decoder on the encoder's
    /// outputs over the same training pairs.
    pub fn train(
        tree: &Dsdt,
        plan: &PartitionPlan,
        pairs: &[UtterancePair],
        cfg: &SystemConfig,
        corpus_digest: &str,
        cache: &ModelCache,
    ) -> Result<Self> {
        let data = prepare_corpus(pairs, plan, &cfg.features).map_err(|e| e.in_stage("features"))?;
        let encoder = train_components(tree, plan, &data, &cfg.features, &cfg.component, corpus_digest, cache)
            .map_err(|e| e.in_stage("components"))?;
        let decoder = if cfg.decoder.kind == DecoderKind::Bf {
            Decoder::BestFirst
        } else {
            let set = decoder_training_set(&encoder, plan, &data, &cfg.features)?;
            fit_decoder(&set, &cfg.decoder, derive_seed(cfg.seed, "decoder", 0)).map_err(|e| e.in_stage("decoder"))?
        };
        Ok(DaemeSystem {
            tree: tree.clone(),
            plan: plan.clone(),
            encoder,
            decoder,
            features: cfg.features.clone(),
            provenance: Provenance {
                seed: cfg.seed,
                component: cfg.component.clone(),
                decoder: cfg.decoder.clone(),
                corpus_digest: corpus_digest.to_string(),
            },
        })
    }

    pub fn view(&self, noisy: &Waveform) -> Result<NoisyView> {
        NoisyView::new(noisy, self.plan.sat_mode, &self.features)
    }

    /// Full-band LPS per plan node, band branches merged.
    pub fn node_outputs(&self, view: &NoisyView) -> Result<Vec<Array2<f64>>> {
        encode_nodes(&self.encoder, &self.plan, view, &self.features)
    }

    /// Enhanced LPS and the noisy phase. `tag` is consulted only by BF.
    pub fn enhance_features(&self, noisy: &Waveform, tag: Option<&AttributeTag>) -> Result<(LpsFeatures, PhaseMatrix)> {
        let view = self.view(noisy)?;
        let nodes = self.node_outputs(&view)?;
        let mut out = match &self.decoder {
            Decoder::BestFirst => {
                let tag = tag.ok_or_else(|| Error::invalid("the BF decoder needs the oracle attribute tag"))?;
                decode_bf(&self.tree, &self.plan, &nodes, tag)?
            }
            d => d.apply(concat_nodes(&nodes)?.view())?,
        };
        hold_floor(&mut out, &view.lps.frames);
        Ok((view.lps.with_frames(out), view.phase))
    }

    pub fn enhance(&self, noisy: &Waveform, tag: Option<&AttributeTag>) -> Result<Waveform> {
        let (lps, phase) = self.enhance_features(noisy, tag)?;
        let samples = Stft::new(self.features.stft).synthesize(&lps, &phase)?;
        Waveform::new(samples, noisy.sample_rate())
    }

    pub fn param_count(&self) -> usize {
        let dec = match &self.decoder {
            Decoder::BestFirst => 0,
            Decoder::Linear(l) => l.weights.len(),
            Decoder::Neural(n) => n.param_count(),
        };
        self.encoder.param_count() + dec
    }

    /// Writes the bundle directory and a manifest of file digests.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, bytes: &[u8]| -> Result<()> {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(|e| Error::io(p, e))
        };
        write("plan.json", serde_json::to_string_pretty(&PlanFile { tree: self.tree.clone(), plan: self.plan.clone() })?.as_bytes())?;
        write("features.json", serde_json::to_string_pretty(&self.features)?.as_bytes())?;
        write("provenance.json", serde_json::to_string_pretty(&self.provenance)?.as_bytes())?;
        let mut listing = Vec::new();
        for (i, c) in self.encoder.components.iter().enumerate() {
            let name = format!("branch_{i:02}.bin");
            save_checkpoint(&c.net, &dir.join(&name), None)?;
            listing.push(BranchEntry { file: name, branch: c.branch, subset_digest: c.subset_digest.clone(), cache_key: c.cache_key.clone() });
        }
        write("components.json", serde_json::to_string_pretty(&listing)?.as_bytes())?;
        let header = match &self.decoder {
            Decoder::BestFirst => DecoderFile { kind: DecoderKind::Bf, lambda: None, rows: 0, cols: 0 },
            Decoder::Linear(l) => {
                let mut raw = Vec::with_capacity(8 * l.weights.len());
                for v in l.weights.iter() {
                    raw.extend_from_slice(&v.to_le_bytes());
                }
                write("decoder.bin", &raw)?;
                DecoderFile { kind: DecoderKind::Lr, lambda: Some(l.lambda), rows: l.weights.nrows(), cols: l.weights.ncols() }
            }
            Decoder::Neural(n) => {
                save_checkpoint(n, &dir.join("decoder.bin"), Some(&self.provenance.decoder.train))?;
                DecoderFile { kind: self.decoder.kind(), lambda: None, rows: 0, cols: 0 }
            }
        };
        write("decoder.json", serde_json::to_string_pretty(&header)?.as_bytes())?;
        let manifest = manifest_of(dir)?;
        write("manifest.json", serde_json::to_string_pretty(&manifest)?.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<Vec<u8>> {
            let p = dir.join(name);
            fs::read(&p).map_err(|e| Error::io(p, e))
        };
        let stored: Manifest = serde_json::from_slice(&read("manifest.json")?)?;
        if manifest_of(dir)? != stored {
            return Err(Error::invalid(format!("bundle {} does not match its manifest", dir.display())));
        }
        let PlanFile { tree, plan } = serde_json::from_slice(&read("plan.json")?)?;
        let features: FeatureConfig = serde_json::from_slice(&read("features.json")?)?;
        let provenance: Provenance = serde_json::from_slice(&read("provenance.json")?)?;
        let listing: Vec<BranchEntry> = serde_json::from_slice(&read("components.json")?)?;
        let components = listing
            .into_iter()
            .map(|e| {
                let (net, _) = load_checkpoint(&dir.join(&e.file))?;
                Ok(ComponentModel { branch: e.branch, net, subset_digest: e.subset_digest, cache_key: e.cache_key })
            })
            .collect::<Result<Vec<_>>>()?;
        if components.iter().map(|c| c.branch).collect::<Vec<_>>() != plan.branches() {
            return Err(Error::invalid("bundle branches do not follow the plan order"));
        }
        let header: DecoderFile = serde_json::from_slice(&read("decoder.json")?)?;
        let decoder = match header.kind {
            DecoderKind::Bf => Decoder::BestFirst,
            DecoderKind::Lr => {
                let raw = read("decoder.bin")?;
                if raw.len() != 8 * header.rows * header.cols {
                    return Err(Error::invalid("linear decoder weights have the wrong size"));
                }
                let vals: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
                let weights = Array2::from_shape_vec((header.rows, header.cols), vals).map_err(|e| Error::shape(e.to_string()))?;
                Decoder::Linear(LinearDecoder { weights, lambda: header.lambda.unwrap_or(0.0) })
            }
            DecoderKind::Fc | DecoderKind::Cn => Decoder::Neural(load_checkpoint(&dir.join("decoder.bin"))?.0),
        };
        Ok(DaemeSystem { tree, plan: plan.clone(), encoder: MultiBranchEncoder { sat_mode: plan.sat_mode, components }, decoder, features, provenance })
    }
}

pub fn enhance_utterance(system: &DaemeSystem, noisy: &Waveform, tag: Option<&AttributeTag>) -> Result<Waveform> {
    system.enhance(noisy, tag)
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    tree: Dsdt,
    plan: PartitionPlan,
}

#[derive(Serialize, Deserialize)]
struct BranchEntry {
    file: String,
    branch: Branch,
    subset_digest: String,
    cache_key: String,
}

#[derive(Serialize, Deserialize)]
struct DecoderFile {
    kind: DecoderKind,
    lambda: Option<f64>,
    rows: usize,
    cols: usize,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    files: BTreeMap<String, String>,
    digest: String,
}

fn manifest_of(dir: &Path) -> Result<Manifest> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == "manifest.json" {
            continue;
        }
        let bytes = fs::read(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        files.insert(name, sha256_hex(&bytes));
    }
    let joined: String = files.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    Ok(Manifest { digest: sha256_hex(joined.as_bytes()), files })
}
