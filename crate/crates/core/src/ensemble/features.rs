use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::corpus::{AttributeTag, UtterancePair, Waveform};
use crate::dsdt::{Band, SatMode};
use crate::dsp::{
    spectral_merge, spectral_split, wavelet_merge, wavelet_split, BandSplitSpec, LpsFeatures, PhaseMatrix, Stft, StftConfig,
    WaveletBands, LPS_FLOOR,
};
use crate::error::{Error, Result};
use crate::nn::stack_context;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub stft: StftConfig,
    /// Analysis of each wavelet band at half the sample rate.
    pub wd_stft: StftConfig,
    pub split: BandSplitSpec,
    /// Neighbouring frames stacked on each side of a component input.
    pub context: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            stft: StftConfig::SPEECH_16K,
            wd_stft: StftConfig { fft_size: 256, hop: 128, sample_rate: 8000 },
            split: BandSplitSpec::default(),
            context: 0,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stft != StftConfig::SPEECH_16K {
            return Err(Error::Config("full-band analysis must be the 16 kHz 512/256 STFT".into()));
        }
        if self.wd_stft.sample_rate * 2 != self.stft.sample_rate || self.wd_stft.hop == 0 || self.wd_stft.hop > self.wd_stft.fft_size {
            return Err(Error::Config("wavelet-band STFT must run at half rate with a valid hop".into()));
        }
        if self.split.bins != self.stft.bins() {
            return Err(Error::Config("band split must cover the full-band bins".into()));
        }
        Ok(())
    }

    /// Feature width a component sees at its output for `band`.
    pub fn band_width(&self, sat: SatMode, band: Band) -> usize {
        match (sat, band) {
            (SatMode::Ss, Band::Low) => self.split.low_width(),
            (SatMode::Ss, Band::High) => self.split.high_width(),
            (SatMode::Wd, _) => self.wd_stft.bins(),
            _ => self.stft.bins(),
        }
    }

    pub fn input_width(&self, sat: SatMode, band: Band) -> usize {
        self.band_width(sat, band) * (2 * self.context + 1)
    }
}

/// Per-band LPS and phase of the two wavelet bands.
#[derive(Debug, Clone)]
pub struct WdView {
    pub low: (LpsFeatures, PhaseMatrix),
    pub high: (LpsFeatures, PhaseMatrix),
    pub signal_len: usize,
    pub sample_rate: u32,
}

fn wd_view(wave: &Waveform, features: &FeatureConfig) -> Result<WdView> {
    let bands = wavelet_split(wave)?;
    let stft = Stft::new(features.wd_stft);
    Ok(WdView {
        low: stft.analyze(&bands.approx)?,
        high: stft.analyze(&bands.detail)?,
        signal_len: bands.signal_len,
        sample_rate: bands.sample_rate,
    })
}

/// Everything the encoder needs from one noisy waveform.
#[derive(Debug, Clone)]
pub struct NoisyView {
    pub lps: LpsFeatures,
    pub phase: PhaseMatrix,
    pub wd: Option<WdView>,
}

impl NoisyView {
    pub fn new(wave: &Waveform, sat: SatMode, features: &FeatureConfig) -> Result<Self> {
        wave.require_rate(features.stft.sample_rate)?;
        let (lps, phase) = Stft::new(features.stft).analyze(wave.samples())?;
        let wd = if sat == SatMode::Wd { Some(wd_view(wave, features)?) } else { None };
        Ok(NoisyView { lps, phase, wd })
    }

    /// Band-domain features a branch consumes, before context stacking.
    pub fn band(&self, sat: SatMode, band: Band, features: &FeatureConfig) -> Result<Array2<f64>> {
        band_of(&self.lps.frames, self.wd.as_ref(), sat, band, features)
    }

    pub fn frames(&self) -> usize {
        self.lps.num_frames()
    }
}

fn band_of(lps: &Array2<f64>, wd: Option<&WdView>, sat: SatMode, band: Band, features: &FeatureConfig) -> Result<Array2<f64>> {
    match (sat, band) {
        (SatMode::None, Band::Full) => Ok(lps.clone()),
        (SatMode::Ss, Band::Low) => Ok(spectral_split(lps.view(), &features.split)?.0),
        (SatMode::Ss, Band::High) => Ok(spectral_split(lps.view(), &features.split)?.1),
        (SatMode::Wd, Band::Low | Band::High) => {
            let wd = wd.ok_or_else(|| Error::invalid("wavelet view missing for a WD branch"))?;
            Ok(if band == Band::Low { wd.low.0.frames.clone() } else { wd.high.0.frames.clone() })
        }
        _ => Err(Error::invalid(format!("band {band:?} is not produced by SAT mode {sat:?}"))),
    }
}

pub(crate) fn model_input(band: Array2<f64>, features: &FeatureConfig) -> Array2<f64> {
    stack_context(band.view(), features.context)
}

/// Maps the branch outputs of one node back to full-band LPS.
/// `outputs` holds one matrix (no SAT) or the low and high band.
pub fn merge_node(outputs: &[Array2<f64>], sat: SatMode, view: &NoisyView, features: &FeatureConfig) -> Result<Array2<f64>> {
    match (sat, outputs) {
        (SatMode::None, [full]) => Ok(full.clone()),
        (SatMode::Ss, [low, high]) => spectral_merge(low.view(), high.view(), &features.split),
        (SatMode::Wd, [low, high]) => {
            let wd = view.wd.as_ref().ok_or_else(|| Error::invalid("wavelet view missing for WD merge"))?;
            let stft = Stft::new(features.wd_stft);
            let approx = stft.synthesize(&wd.low.0.with_frames(low.clone()), &wd.low.1)?;
            let detail = stft.synthesize(&wd.high.0.with_frames(high.clone()), &wd.high.1)?;
            let wave = wavelet_merge(&WaveletBands { approx, detail, signal_len: wd.signal_len, sample_rate: wd.sample_rate })?;
            Ok(Stft::new(features.stft).analyze(wave.samples())?.0.frames)
        }
        _ => Err(Error::shape(format!("{} branch outputs for SAT mode {sat:?}", outputs.len()))),
    }
}

/// Frame-wise concatenation of per-node full-band outputs.
pub fn concat_nodes(nodes: &[Array2<f64>]) -> Result<Array2<f64>> {
    let views: Vec<_> = nodes.iter().map(|n| n.view()).collect();
    concatenate(Axis(1), &views).map_err(|e| Error::shape(e.to_string()))
}

/// Training utterance with its noisy view and clean targets in every band
/// the SAT mode needs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub id: String,
    pub tag: AttributeTag,
    pub noisy: NoisyView,
    pub clean_lps: Array2<f64>,
    clean_wd: Option<(Array2<f64>, Array2<f64>)>,
}

impl Prepared {
    pub fn new(pair: &UtterancePair, sat: SatMode, features: &FeatureConfig) -> Result<Self> {
        let noisy = NoisyView::new(&pair.noisy, sat, features)?;
        let (clean, _) = Stft::new(features.stft).analyze(pair.clean.samples())?;
        let clean_wd = if sat == SatMode::Wd {
            let v = wd_view(&pair.clean, features)?;
            Some((v.low.0.frames, v.high.0.frames))
        } else {
            None
        };
        Ok(Prepared { id: pair.id.clone(), tag: pair.tag.clone(), noisy, clean_lps: clean.frames, clean_wd })
    }

    pub fn target(&self, sat: SatMode, band: Band, features: &FeatureConfig) -> Result<Array2<f64>> {
        match (sat, band, &self.clean_wd) {
            (SatMode::Wd, Band::Low, Some((l, _))) => Ok(l.clone()),
            (SatMode::Wd, Band::High, Some((_, h))) => Ok(h.clone()),
            (SatMode::Wd, _, _) => Err(Error::invalid("wavelet targets were not prepared")),
            _ => band_of(&self.clean_lps, None, sat, band, features),
        }
    }
}

/// Keeps cells at the floor wherever the noisy input itself was at the floor;
/// the phase there is undefined.
pub(crate) fn hold_floor(enhanced: &mut Array2<f64>, noisy: &Array2<f64>) {
    let floor = LPS_FLOOR.ln();
    enhanced.zip_mut_with(noisy, |e, &n| {
        if n <= floor {
            *e = floor;
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_voice, SpeakerClass, Split, VoiceSpec};

    fn wave() -> Waveform {
        synth_voice(&VoiceSpec { class: SpeakerClass::A, duration_s: 0.8, seed: 3, sample_rate: 16000 }).unwrap()
    }

    #[test]
    fn band_widths() {
        let f = FeatureConfig::default();
        let v = NoisyView::new(&wave(), SatMode::Wd, &f).unwrap();
        assert_eq!(v.band(SatMode::Wd, Band::Low, &f).unwrap().ncols(), 129);
        assert_eq!(f.band_width(SatMode::Wd, Band::Low), 129);
        assert_eq!(v.band(SatMode::None, Band::Full, &f).unwrap().ncols(), 257);
        assert_eq!(v.band(SatMode::Ss, Band::High, &f).unwrap().ncols(), 150);
        assert!(v.band(SatMode::None, Band::Low, &f).is_err());
        let ctx = FeatureConfig { context: 2, ..f };
        assert_eq!(ctx.input_width(SatMode::Ss, Band::Low), 750);
    }

    #[test]
    fn merging_untouched_bands_recovers_the_input() {
        let f = FeatureConfig::default();
        let w = wave();
        for sat in [SatMode::Ss, SatMode::Wd] {
            let v = NoisyView::new(&w, sat, &f).unwrap();
            let low = v.band(sat, Band::Low, &f).unwrap();
            let high = v.band(sat, Band::High, &f).unwrap();
            let merged = merge_node(&[low, high], sat, &v, &f).unwrap();
            assert_eq!(merged.dim(), v.lps.frames.dim());
            // Compare in power: loud cells must agree closely.
            let peak = v.lps.frames.iter().cloned().fold(f64::MIN, f64::max);
            for (a, b) in merged.iter().zip(v.lps.frames.iter()) {
                if *b > peak - 40.0 {
                    assert!((a - b).abs() < 1e-3, "{sat:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn prepared_targets_follow_bands() {
        let f = FeatureConfig::default();
        let w = wave();
        let pair = UtterancePair::new("u", w.clone(), w, AttributeTag::new(SpeakerClass::A, 5.0, "white", Split::Train)).unwrap();
        let p = Prepared::new(&pair, SatMode::Wd, &f).unwrap();
        assert_eq!(p.target(SatMode::Wd, Band::High, &f).unwrap(), p.noisy.band(SatMode::Wd, Band::High, &f).unwrap());
        assert_eq!(p.target(SatMode::Ss, Band::Low, &f).unwrap().ncols(), 150);
        let q = Prepared::new(&pair, SatMode::None, &f).unwrap();
        assert!(q.target(SatMode::Wd, Band::Low, &f).is_err());
    }
}
