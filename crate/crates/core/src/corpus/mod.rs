//! Paired clean/noisy corpus: WAV I/O, synthetic voices and noises, SNR
//! mixing and tagged corpus assembly.

mod build;
mod mix;
mod synth;
mod wav;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use build::{IngestSource, 
    build_corpus, load_corpus, write_corpus, CorpusConfig, CorpusManifest, ManifestEntry,
};
pub use mix::{measured_snr_db, mix_at_snr, mix_gain};
pub use synth::{synth_noise, synth_voice, NoiseKind, VoiceSpec, F0_BAND_A, F0_BAND_B};
pub use wav::{wav_read, wav_write};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono PCM waveform with nominal amplitude range [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(Error::invalid("waveform must contain at least one sample"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("waveform samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean squared amplitude over the full length.
    pub fn power(&self) -> f64 {
        mean_square(&self.samples)
    }

    pub fn rms(&self) -> f64 {
        self.power().sqrt()
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn require_rate(&self, expected: u32) -> Result<()> {
        if self.sample_rate != expected {
            return Err(Error::SampleRate {
                found: self.sample_rate,
                expected,
            });
        }
        Ok(())
    }
}

pub(crate) fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Binary speaker class; a stand-in for the male/female split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpeakerClass {
    A,
    B,
}

impl SpeakerClass {
    pub const ALL: [SpeakerClass; 2] = [SpeakerClass::A, SpeakerClass::B];

    pub fn label(self) -> &'static str {
        match self {
            SpeakerClass::A => "A",
            SpeakerClass::B => "B",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Utterance-level attributes. Synthesized corpora carry every field;
/// ingested WAV pairs may lack speaker class and SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeTag {
    pub speaker_class: Option<SpeakerClass>,
    pub snr_db: Option<f64>,
    pub noise_id: String,
    pub split: Split,
}

impl AttributeTag {
    pub fn new(class: SpeakerClass, snr_db: f64, noise_id: impl Into<String>, split: Split) -> Self {
        Self {
            speaker_class: Some(class),
            snr_db: Some(snr_db),
            noise_id: noise_id.into(),
            split,
        }
    }

    /// Class and SNR, or `UntaggedPair` naming `id`.
    pub fn require_attributes(&self, id: &str) -> Result<(SpeakerClass, f64)> {
        match (self.speaker_class, self.snr_db) {
            (Some(c), Some(s)) if s.is_finite() => Ok((c, s)),
            _ => Err(Error::UntaggedPair(id.to_string())),
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "class={} snr={} noise={}",
            self.speaker_class.map(|c| c.label()).unwrap_or("?"),
            self.snr_db.map(|s| format!("{s}")).unwrap_or_else(|| "?".into()),
            self.noise_id
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtterancePair {
    pub id: String,
    pub clean: Waveform,
    pub noisy: Waveform,
    pub tag: AttributeTag,
}

impl UtterancePair {
    pub fn new(id: impl Into<String>, clean: Waveform, noisy: Waveform, tag: AttributeTag) -> Result<Self> {
        let id = id.into();
        if clean.len() != noisy.len() {
            return Err(Error::shape(format!(
                "pair {id}: clean has {} samples, noisy has {}",
                clean.len(),
                noisy.len()
            )));
        }
        if clean.sample_rate() != noisy.sample_rate() {
            return Err(Error::shape(format!("pair {id}: sample rates differ")));
        }
        Ok(Self {
            id,
            clean,
            noisy,
            tag,
        })
    }
}
