use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{mean_square, SpeakerClass, Waveform, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};

/// Fundamental-frequency band for class A voices, Hz.
pub const F0_BAND_A: (f64, f64) = (100.0, 140.0);
/// Fundamental-frequency band for class B voices, Hz.
pub const F0_BAND_B: (f64, f64) = (190.0, 230.0);

const TARGET_RMS: f64 = 0.1;
const MAX_HARMONIC_HZ: f64 = 7800.0;
// Harmonic amplitudes are refreshed once per block of this many samples.
const CONTROL_BLOCK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoiceSpec {
    pub class: SpeakerClass,
    pub duration_s: f64,
    pub seed: u64,
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
}

fn default_rate() -> u32 {
    DEFAULT_SAMPLE_RATE
}

impl VoiceSpec {
    pub fn new(class: SpeakerClass, duration_s: f64, seed: u64) -> Self {
        Self {
            class,
            duration_s,
            seed,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

/// Synthesizes a voiced harmonic complex: F0 drawn inside the class band,
/// 1/k harmonic roll-off with three drifting formant bumps, and a 2-8 Hz
/// syllabic amplitude envelope. Output RMS is exactly 0.1.
pub fn synth_voice(spec: &VoiceSpec) -> Result<Waveform> {
    if !(0.5..=10.0).contains(&spec.duration_s) {
        return Err(Error::invalid(format!(
            "voice duration {} s outside [0.5, 10]",
            spec.duration_s
        )));
    }
    let fs = spec.sample_rate as f64;
    let n = (spec.duration_s * fs).round() as usize;
    let mut rng = rng_from_seed(spec.seed);

    let (lo, hi) = match spec.class {
        SpeakerClass::A => F0_BAND_A,
        SpeakerClass::B => F0_BAND_B,
    };
    let f0_base = rng.random_range(lo + 4.0..hi - 4.0);
    let f0_rate = rng.random_range(0.3..1.2);
    let f0_phase = rng.random_range(0.0..2.0 * PI);
    let formant_scale = match spec.class {
        SpeakerClass::A => 1.0,
        SpeakerClass::B => 1.17,
    } * rng.random_range(0.93..1.07);
    let formants = [500.0 * formant_scale, 1500.0 * formant_scale, 2500.0 * formant_scale];
    let formant_gain = [1.6, 1.0, 0.6];
    let formant_rate = rng.random_range(1.0..3.0);
    let formant_phase = rng.random_range(0.0..2.0 * PI);
    let am_rate = rng.random_range(2.0..8.0);
    let am_phase = rng.random_range(0.0..2.0 * PI);

    let max_harmonics = (MAX_HARMONIC_HZ / lo).ceil() as usize;
    let mut phases: Vec<f64> = (0..max_harmonics)
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect();
    let mut amps = vec![0.0; max_harmonics];
    let mut out = vec![0.0; n];
    let fade = (0.02 * fs) as usize;

    let mut block_start = 0;
    while block_start < n {
        let t = block_start as f64 / fs;
        // F0 wanders by ±3% but never leaves the class band.
        let f0 = (f0_base * (1.0 + 0.03 * (2.0 * PI * f0_rate * t + f0_phase).sin())).clamp(lo, hi);
        let shift = 1.0 + 0.12 * (2.0 * PI * formant_rate * t + formant_phase).sin();
        let n_harm = ((MAX_HARMONIC_HZ / f0).floor() as usize).min(max_harmonics);
        for (k, amp) in amps.iter_mut().enumerate() {
            let harmonic = (k + 1) as f64;
            let f = harmonic * f0;
            if k >= n_harm {
                *amp = 0.0;
                continue;
            }
            let emphasis: f64 = formants
                .iter()
                .zip(formant_gain)
                .map(|(&fc, g)| {
                    let center = fc * shift;
                    let bw = 0.12 * center;
                    g * (-((f - center) / bw).powi(2)).exp()
                })
                .sum();
            *amp = (1.0 + emphasis) / harmonic;
        }
        let block_end = (block_start + CONTROL_BLOCK).min(n);
        for (i, sample) in out.iter_mut().enumerate().take(block_end).skip(block_start) {
            let mut acc = 0.0;
            for k in 0..n_harm {
                acc += amps[k] * phases[k].sin();
                phases[k] += 2.0 * PI * (k + 1) as f64 * f0 / fs;
            }
            let ti = i as f64 / fs;
            let syllable = 0.5 - 0.5 * (2.0 * PI * am_rate * ti + am_phase).cos();
            let mut env = 0.03 + 0.97 * syllable.powf(1.5);
            if i < fade {
                env *= i as f64 / fade as f64;
            }
            if n - i <= fade {
                env *= (n - i - 1) as f64 / fade as f64;
            }
            *sample = acc * env;
        }
        for p in phases.iter_mut() {
            *p %= 2.0 * PI;
        }
        block_start = block_end;
    }
    normalize_rms(out, spec.sample_rate)
}

/// Synthetic noise families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    Pink,
    BabbleProxy,
    CarProxy,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::White,
        NoiseKind::Pink,
        NoiseKind::BabbleProxy,
        NoiseKind::CarProxy,
    ];

    pub fn id(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::BabbleProxy => "babble_proxy",
            NoiseKind::CarProxy => "car_proxy",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.id() == id)
    }
}

/// Synthesizes `duration_s` seconds of noise at 16 kHz, RMS 0.1.
pub fn synth_noise(kind: NoiseKind, duration_s: f64, seed: u64) -> Result<Waveform> {
    synth_noise_at(kind, duration_s, seed, DEFAULT_SAMPLE_RATE)
}

pub(crate) fn synth_noise_at(kind: NoiseKind, duration_s: f64, seed: u64, rate: u32) -> Result<Waveform> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::invalid(format!("noise duration {duration_s} s must be positive")));
    }
    let fs = rate as f64;
    let n = ((duration_s * fs).round() as usize).max(1);
    let mut rng = rng_from_seed(seed);
    let samples = match kind {
        NoiseKind::White => gaussian(&mut rng, n),
        NoiseKind::Pink => {
            let white = gaussian(&mut rng, n);
            shape_spectrum(&white, fs, |f| if f > 0.0 { 1.0 / f.sqrt() } else { 0.0 })
        }
        NoiseKind::BabbleProxy => babble(&mut rng, n, rate)?,
        NoiseKind::CarProxy => car(&mut rng, n, fs),
    };
    normalize_rms(samples, rate)
}

fn gaussian<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Applies a zero-phase magnitude response `gain(f_hz)` over the whole signal.
fn shape_spectrum(x: &[f64], fs: f64, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = x.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k) as f64;
        *c *= gain(bin * fs / n as f64);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

fn babble<R: Rng>(rng: &mut R, n: usize, rate: u32) -> Result<Vec<f64>> {
    let voices = 6 + rng.random_range(0..3usize);
    let fs = rate as f64;
    let voice_dur = (n as f64 / fs).clamp(0.5, 10.0);
    let mut out = vec![0.0; n];
    for v in 0..voices {
        let class = if rng.random_bool(0.5) { SpeakerClass::A } else { SpeakerClass::B };
        let spec = VoiceSpec {
            class,
            duration_s: voice_dur,
            seed: derive_seed(rng.random(), "babble-voice", v as u64),
            sample_rate: rate,
        };
        let voice = synth_voice(&spec)?;
        let len = voice.len();
        let shift = rng.random_range(0..len);
        for (i, o) in out.iter_mut().enumerate() {
            *o += voice.samples()[(i + shift) % len];
        }
    }
    Ok(out)
}

fn car<R: Rng>(rng: &mut R, n: usize, fs: f64) -> Vec<f64> {
    let white = gaussian(rng, n);
    let rumble = shape_spectrum(&white, fs, |f| {
        if f < 20.0 {
            0.0
        } else if f <= 250.0 {
            1.0
        } else {
            1.0 / (1.0 + ((f - 250.0) / 40.0).powi(4))
        }
    });
    let rumble_rms = mean_square(&rumble).sqrt().max(1e-12);

    let engine_hz: f64 = rng.random_range(25.0..45.0);
    let jitter_rate = rng.random_range(0.1..0.5);
    let n_harm = (300.0f64 / engine_hz).floor() as usize;
    let harm_phase: Vec<f64> = (0..n_harm).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let mut comb = vec![0.0; n];
    let mut phase = 0.0;
    for (i, c) in comb.iter_mut().enumerate() {
        let t = i as f64 / fs;
        let f = engine_hz * (1.0 + 0.02 * (2.0 * PI * jitter_rate * t).sin());
        phase += 2.0 * PI * f / fs;
        *c = (0..n_harm)
            .map(|k| ((k + 1) as f64 * phase + harm_phase[k]).sin() / (k + 1) as f64)
            .sum();
    }
    let comb_rms = mean_square(&comb).sqrt().max(1e-12);
    rumble
        .iter()
        .zip(&comb)
        .map(|(r, c)| r / rumble_rms + c / comb_rms)
        .collect()
}

fn normalize_rms(mut samples: Vec<f64>, rate: u32) -> Result<Waveform> {
    let rms = mean_square(&samples).sqrt();
    if rms <= 0.0 {
        return Err(Error::ZeroPower("synthesized signal"));
    }
    let g = TARGET_RMS / rms;
    samples.iter_mut().for_each(|s| *s *= g);
    Waveform::new(samples, rate)
}
