use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::corpus::Waveform;
use crate::error::{Error, Result};

/// Power floor applied before the natural log.
pub const LPS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl StftConfig {
    /// 512-point FFT, 32 ms Hamming window, 16 ms hop at 16 kHz.
    pub const SPEECH_16K: StftConfig = StftConfig {
        fft_size: 512,
        hop: 256,
        sample_rate: 16_000,
    };

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frames needed to cover `n` samples, zero-padding the tail.
    pub fn frame_count(&self, n: usize) -> usize {
        if n <= self.fft_size {
            1
        } else {
            (n - self.fft_size).div_ceil(self.hop) + 1
        }
    }
}

/// T × bins natural-log power spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct LpsFeatures {
    pub frames: Array2<f64>,
    pub config: StftConfig,
    /// Length of the analyzed signal, used to trim resynthesis.
    pub num_samples: usize,
}

impl LpsFeatures {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }
}

/// T × bins phase angles in (-π, π].
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMatrix {
    pub frames: Array2<f64>,
}

/// Reusable analysis/synthesis engine for one [`StftConfig`].
pub struct Stft {
    config: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(config: StftConfig) -> Self {
        let n = config.fft_size;
        // Periodic Hamming window.
        let window = (0..n)
            .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / n as f64).cos())
            .collect();
        let mut planner = FftPlanner::new();
        Self {
            config,
            window,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn analyze(&self, samples: &[f64]) -> Result<(LpsFeatures, PhaseMatrix)> {
        let n = self.config.fft_size;
        if samples.len() < n {
            return Err(Error::invalid(format!(
                "signal of {} samples is shorter than one {n}-sample window",
                samples.len()
            )));
        }
        let bins = self.config.bins();
        let frames = self.config.frame_count(samples.len());
        let mut lps = Array2::zeros((frames, bins));
        let mut phase = Array2::zeros((frames, bins));
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        for t in 0..frames {
            let start = t * self.config.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                let s = samples.get(start + i).copied().unwrap_or(0.0);
                *b = Complex::new(s * self.window[i], 0.0);
            }
            self.forward.process(&mut buf);
            for k in 0..bins {
                lps[[t, k]] = buf[k].norm_sqr().max(LPS_FLOOR).ln();
                phase[[t, k]] = principal_angle(buf[k]);
            }
        }
        Ok((
            LpsFeatures {
                frames: lps,
                config: self.config,
                num_samples: samples.len(),
            },
            PhaseMatrix { frames: phase },
        ))
    }

    /// Inverse FFT of `exp(lps/2)·e^{iφ}` per frame, weighted overlap-add and
    /// division by the summed squared window.
    pub fn synthesize(&self, lps: &LpsFeatures, phase: &PhaseMatrix) -> Result<Vec<f64>> {
        let n = self.config.fft_size;
        let bins = self.config.bins();
        if lps.frames.dim() != phase.frames.dim() || lps.frames.ncols() != bins {
            return Err(Error::shape(format!(
                "LPS {:?} vs phase {:?} (expected {bins} bins)",
                lps.frames.dim(),
                phase.frames.dim()
            )));
        }
        let frames = lps.frames.nrows();
        let total = (frames - 1) * self.config.hop + n;
        let mut out = vec![0.0; total];
        let mut norm = vec![0.0; total];
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let floor = LPS_FLOOR.ln();
        for t in 0..frames {
            for k in 0..bins {
                // Cells sitting on the floor carry no energy.
                let v = lps.frames[[t, k]];
                let mag = if v <= floor { 0.0 } else { (v / 2.0).exp() };
                buf[k] = Complex::from_polar(mag, phase.frames[[t, k]]);
            }
            // DC and Nyquist bins are real for a real signal.
            buf[0] = Complex::new(buf[0].re, 0.0);
            buf[n / 2] = Complex::new(buf[n / 2].re, 0.0);
            for k in 1..n / 2 {
                buf[n - k] = buf[k].conj();
            }
            self.inverse.process(&mut buf);
            let start = t * self.config.hop;
            for i in 0..n {
                let w = self.window[i];
                out[start + i] += buf[i].re / n as f64 * w;
                norm[start + i] += w * w;
            }
        }
        for (o, w) in out.iter_mut().zip(&norm) {
            *o = if *w > 1e-10 { *o / w } else { 0.0 };
        }
        out.truncate(lps.num_samples.min(total));
        out.resize(lps.num_samples, 0.0);
        Ok(out)
    }
}

fn principal_angle(c: Complex<f64>) -> f64 {
    let a = c.arg();
    // atan2 returns [-π, π]; fold -π onto π.
    if a <= -PI {
        PI
    } else {
        a
    }
}

/// Standard 16 kHz speech analysis.
pub fn stft_analyze(wave: &Waveform) -> Result<(LpsFeatures, PhaseMatrix)> {
    wave.require_rate(StftConfig::SPEECH_16K.sample_rate)?;
    Stft::new(StftConfig::SPEECH_16K).analyze(wave.samples())
}

pub fn stft_synthesize(lps: &LpsFeatures, phase: &PhaseMatrix) -> Result<Waveform> {
    let samples = Stft::new(lps.config).synthesize(lps, phase)?;
    Waveform::new(samples, lps.config.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::seed::rng_from_seed;

    fn wave(v: Vec<f64>) -> Waveform {
        Waveform::new(v, 16000).unwrap()
    }

    /// Direct O(N²) windowed DFT, independent of the FFT path.
    fn dft_power(frame: &[f64], window: &[f64], k: usize) -> f64 {
        let n = frame.len();
        let (mut re, mut im) = (0.0, 0.0);
        for i in 0..n {
            let a = -2.0 * PI * (k * i) as f64 / n as f64;
            re += frame[i] * window[i] * a.cos();
            im += frame[i] * window[i] * a.sin();
        }
        re * re + im * im
    }

    #[test]
    fn sine_peaks_at_bin_32() {
        let x: Vec<f64> = (0..16000).map(|i| (2.0 * PI * 1000.0 * i as f64 / 16000.0).sin()).collect();
        let (lps, _) = stft_analyze(&wave(x.clone())).unwrap();
        for row in lps.frames.rows() {
            let arg = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(arg, 32);
        }
        let stft = Stft::new(StftConfig::SPEECH_16K);
        for k in [0, 31, 32, 100] {
            let oracle = dft_power(&x[256..768], stft.window(), k).max(LPS_FLOOR).ln();
            assert!((lps.frames[[1, k]] - oracle).abs() < 1e-8);
        }
    }

    #[test]
    fn impulse_spectrum_follows_window() {
        let mut x = vec![0.0; 512];
        x[256] = 1.0;
        let (lps, _) = stft_analyze(&wave(x)).unwrap();
        assert_eq!(lps.num_frames(), 1);
        // A single impulse at n0 yields |S_k| = w[n0] for every bin.
        let w = Stft::new(StftConfig::SPEECH_16K).window()[256];
        for v in lps.frames.iter() {
            assert!(v.is_finite());
            assert!((v - (w * w).ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn silence_hits_the_floor() {
        let (lps, phase) = stft_analyze(&wave(vec![0.0; 2000])).unwrap();
        assert!(lps.frames.iter().all(|&v| v == LPS_FLOOR.ln()));
        let y = stft_synthesize(&lps, &phase).unwrap();
        assert!(y.samples().iter().all(|s| s.abs() <= 1e-5));
    }

    #[test]
    fn rejects_wrong_rate_and_short_input() {
        assert!(matches!(
            stft_analyze(&Waveform::new(vec![0.0; 1024], 8000).unwrap()),
            Err(Error::SampleRate { .. })
        ));
        assert!(stft_analyze(&wave(vec![0.0; 511])).is_err());
    }

    #[test]
    fn round_trip_reconstruction_snr() {
        let mut rng = rng_from_seed(3);
        for _ in 0..10 {
            let n = rng.random_range(512..6000);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (lps, phase) = stft_analyze(&wave(x.clone())).unwrap();
            let y = stft_synthesize(&lps, &phase).unwrap();
            assert_eq!(y.len(), n);
            let err: f64 = x.iter().zip(y.samples()).map(|(a, b)| (a - b).powi(2)).sum();
            let sig: f64 = x.iter().map(|a| a * a).sum();
            assert!(10.0 * (sig / err).log10() >= 60.0);
        }
    }

    #[test]
    fn adding_log_gain_scales_output() {
        let mut rng = rng_from_seed(4);
        let x: Vec<f64> = (0..3000).map(|_| rng.random_range(-0.5..0.5)).collect();
        let (mut lps, phase) = stft_analyze(&wave(x.clone())).unwrap();
        let y = stft_synthesize(&lps, &phase).unwrap();
        let c: f64 = 3.0;
        lps.frames.mapv_inplace(|v| v + 2.0 * c.ln());
        let yc = stft_synthesize(&lps, &phase).unwrap();
        for (a, b) in y.samples().iter().zip(yc.samples()) {
            assert!((c * a - b).abs() <= 1e-6 * (c * a).abs().max(1e-6));
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (lps, _) = stft_analyze(&wave(vec![0.1; 1024])).unwrap();
        let bad = PhaseMatrix { frames: Array2::zeros((1, 257)) };
        assert!(stft_synthesize(&lps, &bad).is_err());
    }

    #[test]
    fn phase_is_in_principal_range() {
        let mut rng = rng_from_seed(5);
        let x: Vec<f64> = (0..4000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, phase) = stft_analyze(&wave(x)).unwrap();
        assert!(phase.frames.iter().all(|&p| p > -PI && p <= PI));
    }
}
