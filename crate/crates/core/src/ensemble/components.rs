use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{model_input, FeatureConfig, NoisyView, Prepared};
use crate::dsdt::{Band, Branch, Dsdt, PartitionPlan, SatMode};
use crate::error::{Error, Result};
use crate::nn::{load_checkpoint, save_checkpoint, train, Activation, Architecture, ModelSpec, Network, SeqPair, TrainConfig};
use crate::seed::{derive_seed, sha256_hex, ContentHasher};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComponentConfig {
    pub arch: Architecture,
    pub train: TrainConfig,
    /// Initialize every non-root node from its parent's trained model.
    pub warm_start: bool,
    pub init_seed: u64,
}

impl Default for ComponentConfig {
    fn default() -> Self {
        ComponentConfig {
            arch: Architecture::Ddae { layers: 3, width: 128, activation: Activation::Relu },
            train: TrainConfig::default(),
            warm_start: true,
            init_seed: 0,
        }
    }
}

/// Content-addressed store of trained component models, in memory and
/// optionally mirrored to a directory of checkpoints.
#[derive(Debug, Default)]
pub struct ModelCache {
    dir: Option<PathBuf>,
    mem: Mutex<HashMap<String, Arc<Network>>>,
}

impl ModelCache {
    pub fn in_memory() -> Self {
        ModelCache::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ModelCache { dir: Some(dir), mem: Mutex::default() })
    }

    pub fn len(&self) -> usize {
        self.mem.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get_or_train(&self, key: &str, make: impl FnOnce() -> Result<Network>) -> Result<Arc<Network>> {
        if let Some(n) = self.mem.lock().expect("cache lock").get(key) {
            return Ok(n.clone());
        }
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{key}.bin"));
            if path.exists() {
                let (net, _) = load_checkpoint(&path)?;
                let net = Arc::new(net);
                self.mem.lock().expect("cache lock").insert(key.to_string(), net.clone());
                return Ok(net);
            }
        }
        let net = Arc::new(make()?);
        if let Some(dir) = &self.dir {
            let tmp = dir.join(format!("{key}.bin.tmp"));
            save_checkpoint(&net, &tmp, None)?;
            let path = dir.join(format!("{key}.bin"));
            fs::rename(format!("{}.json", tmp.display()), format!("{}.json", path.display())).map_err(|e| Error::io(&path, e))?;
            fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        }
        self.mem.lock().expect("cache lock").insert(key.to_string(), net.clone());
        Ok(net)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentModel {
    pub branch: Branch,
    pub net: Network,
    /// Digest of the sorted member ids the model was trained on.
    pub subset_digest: String,
    pub cache_key: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiBranchEncoder {
    pub sat_mode: SatMode,
    pub components: Vec<ComponentModel>,
}

impl MultiBranchEncoder {
    /// Branch outputs in plan order, each in its band's feature domain.
    pub fn encode(&self, view: &NoisyView, features: &FeatureConfig) -> Result<Vec<Array2<f64>>> {
        self.components
            .iter()
            .map(|c| {
                let input = model_input(view.band(self.sat_mode, c.branch.band, features)?, features);
                c.net.forward(input.view())
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.components.iter().map(|c| c.net.param_count()).sum()
    }
}

pub fn subset_digest(members: &[String]) -> String {
    let mut sorted: Vec<&str> = members.iter().map(String::as_str).collect();
    sorted.sort_unstable();
    sha256_hex(sorted.join("\n").as_bytes())
}

fn band_name(sat: SatMode, band: Band) -> String {
    format!("{sat:?}/{band:?}")
}

/// Node-band pairs to train: the plan's branches plus, under warm start,
/// every ancestor of each.
fn required(tree: &Dsdt, plan: &PartitionPlan, warm: bool) -> Result<Vec<(usize, Branch)>> {
    let mut need: BTreeMap<(usize, usize, u8), Branch> = BTreeMap::new();
    for b in plan.branches() {
        let mut node = Some(b.node);
        while let Some(id) = node {
            let n = tree.node(id)?;
            need.insert((n.depth, id, b.band as u8), Branch { node: id, band: b.band });
            node = if warm { n.parent } else { None };
        }
    }
    Ok(need.into_iter().map(|((d, _, _), b)| (d, b)).collect())
}

fn node_data(members: &[String], index: &HashMap<&str, usize>, data: &[Prepared], sat: SatMode, band: Band, features: &FeatureConfig) -> Result<Vec<SeqPair>> {
    members
        .iter()
        .map(|m| {
            let p = &data[*index.get(m.as_str()).ok_or_else(|| Error::invalid(format!("node member {m} is not in the training data")))?];
            Ok((model_input(p.noisy.band(sat, band, features)?, features), p.target(sat, band, features)?))
        })
        .collect()
}

/// A warm-started model begins as an exact copy of its parent, including
/// the parent's normalization statistics.
pub(crate) fn initial_network(parent: Option<&Network>, spec: &ModelSpec, seed: u64) -> Result<Network> {
    match parent {
        Some(p) if p.spec() == spec => Ok(p.clone()),
        Some(_) => Err(Error::shape("parent model does not match the child's spec")),
        None => Network::new(spec.clone(), seed),
    }
}

/// One model per plan branch, trained on exactly its node's members.
/// Siblings at the same depth train in parallel.
pub fn train_components(
    tree: &Dsdt,
    plan: &PartitionPlan,
    data: &[Prepared],
    features: &FeatureConfig,
    cfg: &ComponentConfig,
    corpus_digest: &str,
    cache: &ModelCache,
) -> Result<MultiBranchEncoder> {
    features.validate()?;
    let index: HashMap<&str, usize> = data.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    let sat = plan.sat_mode;
    let mut trained: HashMap<Branch, (String, Arc<Network>)> = HashMap::new();
    let need = required(tree, plan, cfg.warm_start)?;
    let max_depth = need.iter().map(|(d, _)| *d).max().unwrap_or(0);
    for depth in 0..=max_depth {
        let level: Vec<Branch> = need.iter().filter(|(d, _)| *d == depth).map(|(_, b)| *b).collect();
        let results: Vec<(Branch, String, Arc<Network>)> = level
            .par_iter()
            .map(|&branch| {
                let node = tree.node(branch.node)?;
                if node.members.is_empty() {
                    return Err(Error::invalid(format!("node {} ({}) has no training data", node.id, node.label)));
                }
                let width = features.band_width(sat, branch.band);
                let spec = ModelSpec::new(cfg.arch.clone(), features.input_width(sat, branch.band), width)?;
                let parent = match (cfg.warm_start, node.parent) {
                    (true, Some(p)) => Some(trained[&Branch { node: p, band: branch.band }].clone()),
                    _ => None,
                };
                let digest = subset_digest(&node.members);
                let mut h = ContentHasher::new();
                h.update_str("component-v1");
                h.update_str(&serde_json::to_string(&spec)?);
                h.update_str(&serde_json::to_string(&cfg.train)?);
                h.update_str(&serde_json::to_string(features)?);
                h.update_str(&band_name(sat, branch.band));
                h.update_str(corpus_digest);
                h.update_str(&digest);
                match &parent {
                    Some((key, _)) => h.update_str(&format!("warm:{key}")),
                    None => h.update_str(&format!("scratch:{}", cfg.init_seed)),
                }
                let key = h.finish();
                let net = cache.get_or_train(&key, || {
                    let seed = derive_seed(cfg.init_seed, &format!("component:{digest}"), branch.band as u64);
                    let mut net = initial_network(parent.as_ref().map(|(_, p)| &**p), &spec, seed)?;
                    let set = node_data(&node.members, &index, data, sat, branch.band, features)?;
                    let tc = TrainConfig { seed: derive_seed(cfg.train.seed, &format!("shuffle:{digest}"), branch.band as u64), ..cfg.train.clone() };
                    train(&mut net, &set, &tc).map_err(|e| e.in_stage(&format!("component {}", node.label)))?;
                    Ok(net)
                })?;
                Ok((branch, key, net))
            })
            .collect::<Result<_>>()?;
        for (b, key, net) in results {
            trained.insert(b, (key, net));
        }
    }
    let components = plan
        .branches()
        .into_iter()
        .map(|branch| {
            let (key, net) = &trained[&branch];
            Ok(ComponentModel {
                branch,
                net: (**net).clone(),
                subset_digest: subset_digest(&tree.node(branch.node)?.members),
                cache_key: key.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiBranchEncoder { sat_mode: sat, components })
}
