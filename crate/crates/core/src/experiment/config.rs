use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusConfig;
use crate::dsdt::{PlanVariant, SatMode, DEFAULT_SNR_THRESHOLD_DB};
use crate::ensemble::{ComponentConfig, DecoderConfig, FeatureConfig, SystemConfig};
use crate::error::{Error, Result};
use crate::eval::Metric;
use crate::seed::{derive_seed, sha256_hex};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeVariant {
    Uat,
    Rt,
    Nc { clusters: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    UatVsRt,
    DecoderTypes,
    SsVsWd,
    SeenVsUnseen,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::UatVsRt, Suite::DecoderTypes, Suite::SsVsWd, Suite::SeenVsUnseen];

    pub fn name(self) -> &'static str {
        match self {
            Suite::UatVsRt => "uat_vs_rt",
            Suite::DecoderTypes => "decoder_types",
            Suite::SsVsWd => "ss_vs_wd",
            Suite::SeenVsUnseen => "seen_vs_unseen",
        }
    }

    pub fn from_name(name: &str) -> Option<Suite> {
        let norm = name.to_ascii_lowercase().replace('-', "_");
        Suite::ALL.into_iter().find(|s| s.name() == norm)
    }
}

/// One experiment: corpus, tree and plan, component and decoder setup,
/// metrics and the master seed every other seed is split from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub corpus: CorpusConfig,
    pub tree: TreeVariant,
    pub snr_threshold_db: f64,
    pub plan: PlanVariant,
    pub sat_mode: SatMode,
    pub features: FeatureConfig,
    pub component: ComponentConfig,
    pub decoder: DecoderConfig,
    pub metrics: Vec<Metric>,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: CorpusConfig::default(),
            tree: TreeVariant::Uat,
            snr_threshold_db: DEFAULT_SNR_THRESHOLD_DB,
            plan: PlanVariant::Uat4,
            sat_mode: SatMode::None,
            features: FeatureConfig::default(),
            component: ComponentConfig::default(),
            decoder: DecoderConfig::default(),
            metrics: Metric::ALL.to_vec(),
            out_dir: PathBuf::from("runs/default"),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.features.validate()?;
        self.component.train.validate()?;
        self.decoder.train.validate()?;
        if self.metrics.is_empty() {
            return Err(Error::Config("at least one metric is required".into()));
        }
        if !self.snr_threshold_db.is_finite() {
            return Err(Error::Config("SNR threshold must be finite".into()));
        }
        if let TreeVariant::Nc { clusters } = self.tree {
            if clusters < 2 {
                return Err(Error::Config("a cluster tree needs at least 2 clusters".into()));
            }
            if !matches!(self.plan, PlanVariant::Layer1 | PlanVariant::Custom(_)) {
                return Err(Error::Config("cluster trees only support the layer1 or custom plans".into()));
            }
        }
        if self.decoder.lambda < 0.0 || !self.decoder.lambda.is_finite() {
            return Err(Error::Config("decoder λ must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Copy with every stage seed split from the master seed.
    pub fn resolved(&self) -> Self {
        let m = self.seed;
        let mut c = self.clone();
        c.corpus.seed = derive_seed(m, "corpus", 0);
        c.component.init_seed = derive_seed(m, "component-init", 0);
        c.component.train.seed = derive_seed(m, "component-shuffle", 0);
        c.decoder.train.seed = derive_seed(m, "decoder-train", 0);
        c
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ExperimentConfig { seed, ..self.clone() }.resolved()
    }

    pub fn system_config(&self) -> SystemConfig {
        SystemConfig {
            features: self.features.clone(),
            component: self.component.clone(),
            decoder: self.decoder.clone(),
            seed: derive_seed(self.seed, "system", 0),
        }
    }

    pub fn tree_seed(&self) -> u64 {
        derive_seed(self.seed, "tree", 0)
    }

    /// SHA-256 of the resolved config, excluding the output directory.
    pub fn digest(&self) -> String {
        let c = ExperimentConfig { out_dir: PathBuf::new(), ..self.resolved() };
        sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
    }
}
