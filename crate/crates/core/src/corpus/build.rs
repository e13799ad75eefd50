use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synth::synth_noise_at;
use super::wav::quantize;
use super::{
    mix_at_snr, synth_voice, wav_read, wav_write, AttributeTag, NoiseKind, SpeakerClass, Split,
    UtterancePair, VoiceSpec, Waveform, DEFAULT_SAMPLE_RATE,
};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, sha256_hex, ContentHasher};

const PEAK_LIMIT: f64 = 0.99;

/// Directories holding user-supplied training pairs matched by file name.
/// Ingested pairs carry no speaker class or SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSource {
    pub clean_dir: PathBuf,
    pub noisy_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub n_train: usize,
    /// Clean test utterances; each is mixed with every test noise kind at
    /// every test SNR level.
    pub n_test: usize,
    /// SNR values (dB) sampled for training mixtures.
    pub snr_grid: Vec<f64>,
    pub test_snr_levels: Vec<f64>,
    pub train_noise_kinds: Vec<NoiseKind>,
    pub test_noise_kinds: Vec<NoiseKind>,
    /// Reject configs whose test noise kinds also appear in training.
    pub disjoint_noise: bool,
    pub train_duration_s: (f64, f64),
    pub test_duration_s: f64,
    /// Take the noise excerpt from a seed-derived offset instead of 0.
    pub random_noise_offset: bool,
    pub sample_rate: u32,
    pub seed: u64,
    pub ingest: Option<IngestSource>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_train: 200,
            n_test: 4,
            snr_grid: (-10..=20).map(f64::from).collect(),
            test_snr_levels: vec![15.0, 10.0, 5.0, 0.0, -5.0, -10.0],
            train_noise_kinds: vec![NoiseKind::White, NoiseKind::BabbleProxy],
            test_noise_kinds: vec![NoiseKind::Pink, NoiseKind::CarProxy],
            disjoint_noise: true,
            train_duration_s: (1.0, 1.5),
            test_duration_s: 2.0,
            random_noise_offset: false,
            sample_rate: DEFAULT_SAMPLE_RATE,
            seed: 0,
            ingest: None,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ingest.is_none() && self.n_train < 8 {
            return Err(Error::Config(format!("n_train = {} but at least 8 are required", self.n_train)));
        }
        if self.snr_grid.is_empty() || self.snr_grid.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("SNR grid must be nonempty and finite".into()));
        }
        if self.train_noise_kinds.is_empty() {
            return Err(Error::Config("at least one training noise kind is required".into()));
        }
        if self.n_test > 0 && (self.test_noise_kinds.is_empty() || self.test_snr_levels.is_empty()) {
            return Err(Error::Config("test split needs noise kinds and SNR levels".into()));
        }
        if self.disjoint_noise {
            if let Some(k) = self
                .test_noise_kinds
                .iter()
                .find(|k| self.train_noise_kinds.contains(k))
            {
                return Err(Error::Config(format!(
                    "held-out noise kind `{}` is also a training noise kind",
                    k.id()
                )));
            }
        }
        let (lo, hi) = self.train_duration_s;
        if !(0.5..=10.0).contains(&lo) || !(lo..=10.0).contains(&hi) || !(0.5..=10.0).contains(&self.test_duration_s) {
            return Err(Error::Config("utterance durations must lie in [0.5, 10] s".into()));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("corpus config serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub clean_path: String,
    pub noisy_path: String,
    pub tag: AttributeTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
    pub config: CorpusConfig,
    pub config_digest: String,
    /// SHA-256 over ids, tags and 16-bit quantized audio.
    pub content_digest: String,
}

/// Synthesizes (or ingests) the training split and synthesizes the test split.
pub fn build_corpus(config: &CorpusConfig) -> Result<(Vec<UtterancePair>, CorpusManifest)> {
    config.validate()?;
    let mut pairs = match &config.ingest {
        Some(src) => ingest_pairs(src)?,
        None => (0..config.n_train)
            .into_par_iter()
            .map(|i| train_pair(config, i))
            .collect::<Result<Vec<_>>>()?,
    };
    let test_pairs: Vec<Vec<UtterancePair>> = (0..config.n_test)
        .into_par_iter()
        .map(|j| test_pairs(config, j))
        .collect::<Result<Vec<_>>>()?;
    pairs.extend(test_pairs.into_iter().flatten());

    let mut seen = HashSet::new();
    for p in &pairs {
        if !seen.insert(p.id.as_str()) {
            return Err(Error::invalid(format!("duplicate utterance id {}", p.id)));
        }
    }
    let manifest = manifest_for(config, &pairs);
    Ok((pairs, manifest))
}

fn class_for(index: usize) -> SpeakerClass {
    if index % 2 == 0 {
        SpeakerClass::A
    } else {
        SpeakerClass::B
    }
}

fn train_pair(config: &CorpusConfig, i: usize) -> Result<UtterancePair> {
    let seed = config.seed;
    let mut rng = rng_from_seed(derive_seed(seed, "train-condition", i as u64));
    let (lo, hi) = config.train_duration_s;
    let duration = if hi > lo { rng.random_range(lo..hi) } else { lo };
    let kind = *config.train_noise_kinds.choose(&mut rng).expect("validated nonempty");
    let snr = *config.snr_grid.choose(&mut rng).expect("validated nonempty");
    let class = class_for(i);
    let clean = synth_voice(&VoiceSpec {
        class,
        duration_s: duration,
        seed: derive_seed(seed, "train-voice", i as u64),
        sample_rate: config.sample_rate,
    })?;
    let noise_seed = derive_seed(seed, "train-noise", i as u64);
    let noisy = contaminate(config, &clean, kind, snr, noise_seed)?;
    let (clean, noisy) = limit_peak(clean, noisy)?;
    UtterancePair::new(
        format!("train_{i:04}"),
        clean,
        noisy,
        AttributeTag::new(class, snr, kind.id(), Split::Train),
    )
}

fn test_pairs(config: &CorpusConfig, j: usize) -> Result<Vec<UtterancePair>> {
    let seed = config.seed;
    let class = class_for(j);
    let clean = synth_voice(&VoiceSpec {
        class,
        duration_s: config.test_duration_s,
        seed: derive_seed(seed, "test-voice", j as u64),
        sample_rate: config.sample_rate,
    })?;
    let mut out = Vec::new();
    for (k, kind) in config.test_noise_kinds.iter().enumerate() {
        // One noise excerpt per (utterance, kind), reused across SNR levels.
        let noise_seed = derive_seed(seed, "test-noise", (j * 1000 + k) as u64);
        for &snr in &config.test_snr_levels {
            let noisy = contaminate(config, &clean, *kind, snr, noise_seed)?;
            let (c, n) = limit_peak(clean.clone(), noisy)?;
            out.push(UtterancePair::new(
                format!("test_{j:04}_{}_snr{snr:+}", kind.id()),
                c,
                n,
                AttributeTag::new(class, snr, kind.id(), Split::Test),
            )?);
        }
    }
    Ok(out)
}

fn contaminate(config: &CorpusConfig, clean: &Waveform, kind: NoiseKind, snr: f64, seed: u64) -> Result<Waveform> {
    let rate = config.sample_rate;
    if !config.random_noise_offset {
        let noise = synth_noise_at(kind, clean.duration_s(), seed, rate)?;
        return mix_at_snr(clean, &noise, snr);
    }
    let margin = rate as usize / 2;
    let noise = synth_noise_at(kind, (clean.len() + margin) as f64 / rate as f64, seed, rate)?;
    let offset = rng_from_seed(derive_seed(seed, "noise-offset", 0)).random_range(0..=noise.len() - clean.len());
    let excerpt = Waveform::new(noise.samples()[offset..offset + clean.len()].to_vec(), rate)?;
    mix_at_snr(clean, &excerpt, snr)
}

/// Scales clean and noisy together so the 16-bit files never clip; the SNR
/// is unchanged because mixing is scale-equivariant.
fn limit_peak(clean: Waveform, noisy: Waveform) -> Result<(Waveform, Waveform)> {
    let peak = clean
        .samples()
        .iter()
        .chain(noisy.samples())
        .fold(0.0f64, |m, s| m.max(s.abs()));
    if peak <= PEAK_LIMIT {
        return Ok((clean, noisy));
    }
    let g = PEAK_LIMIT / peak;
    Ok((clean.scaled(g), noisy.scaled(g)))
}

fn ingest_pairs(src: &IngestSource) -> Result<Vec<UtterancePair>> {
    let mut names: Vec<String> = std::fs::read_dir(&src.clean_dir)
        .map_err(|e| Error::io(&src.clean_dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".wav"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Config(format!("no .wav files in {}", src.clean_dir.display())));
    }
    names
        .iter()
        .map(|name| {
            let clean = wav_read(src.clean_dir.join(name))?;
            let noisy = wav_read(src.noisy_dir.join(name))?;
            let tag = AttributeTag {
                speaker_class: None,
                snr_db: None,
                noise_id: "unknown".into(),
                split: Split::Train,
            };
            UtterancePair::new(format!("ingest_{}", name.trim_end_matches(".wav")), clean, noisy, tag)
        })
        .collect()
}

fn manifest_for(config: &CorpusConfig, pairs: &[UtterancePair]) -> CorpusManifest {
    let mut hasher = ContentHasher::new();
    let entries = pairs
        .iter()
        .map(|p| {
            hasher.update_str(&p.id);
            hasher.update_str(&serde_json::to_string(&p.tag).expect("tag serializes"));
            for w in [&p.clean, &p.noisy] {
                for &s in w.samples() {
                    hasher.update_bytes(&quantize(s).to_le_bytes());
                }
            }
            let dir = match p.tag.split {
                Split::Train => "train",
                Split::Test => "test",
            };
            ManifestEntry {
                id: p.id.clone(),
                clean_path: format!("{dir}/{}_clean.wav", p.id),
                noisy_path: format!("{dir}/{}_noisy.wav", p.id),
                tag: p.tag.clone(),
            }
        })
        .collect();
    CorpusManifest {
        entries,
        seed: config.seed,
        config: config.clone(),
        config_digest: config.digest(),
        content_digest: hasher.finish(),
    }
}

/// Writes WAV files plus `manifest.json` under `root`.
pub fn write_corpus(root: &Path, pairs: &[UtterancePair], manifest: &CorpusManifest) -> Result<()> {
    for sub in ["train", "test"] {
        let d = root.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    pairs
        .par_iter()
        .zip(manifest.entries.par_iter())
        .try_for_each(|(p, e)| {
            wav_write(&p.clean, root.join(&e.clean_path))?;
            wav_write(&p.noisy, root.join(&e.noisy_path))
        })?;
    let path = root.join("manifest.json");
    let json = serde_json::to_vec_pretty(manifest)?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// Reads a corpus previously written by [`write_corpus`].
pub fn load_corpus(root: &Path) -> Result<(Vec<UtterancePair>, CorpusManifest)> {
    let path = root.join("manifest.json");
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CorpusManifest = serde_json::from_slice(&bytes)?;
    let pairs = manifest
        .entries
        .par_iter()
        .map(|e| {
            UtterancePair::new(
                e.id.clone(),
                wav_read(root.join(&e.clean_path))?,
                wav_read(root.join(&e.noisy_path))?,
                e.tag.clone(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((pairs, manifest))
}
