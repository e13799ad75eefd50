use std::f64::consts::PI;

use ndarray::{s, Array2};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::resample::resample_poly;
use crate::corpus::Waveform;
use crate::error::{Error, Result};

const FS: u32 = 10_000;
const FRAME: usize = 256;
const HOP: usize = FRAME / 2;
const NFFT: usize = 512;
const NUM_BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
const SEGMENT: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

/// Symmetric Hann window without the zero endpoints.
fn hann() -> Vec<f64> {
    let m = FRAME + 2;
    (1..=FRAME)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (m - 1) as f64).cos())
        .collect()
}

fn frame_starts(len: usize) -> Vec<usize> {
    if len < FRAME {
        return Vec::new();
    }
    (0..=(len - FRAME) / HOP).map(|t| t * HOP).collect()
}

/// Drops frames of `x` more than 40 dB below its loudest frame, together
/// with the matching frames of `y`, and overlap-adds the survivors.
fn remove_silent_frames(x: &[f64], y: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let starts = frame_starts(x.len());
    let energy: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = (0..FRAME).map(|i| (x[s + i] * w[i]).powi(2)).sum();
            20.0 * (e.sqrt() + EPS).log10()
        })
        .collect();
    let max = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energy)
        .filter(|(_, e)| max - **e < DYN_RANGE_DB)
        .map(|(s, _)| *s)
        .collect();
    let len = if kept.is_empty() { 0 } else { (kept.len() - 1) * HOP + FRAME };
    let mut xo = vec![0.0; len];
    let mut yo = vec![0.0; len];
    for (j, &s) in kept.iter().enumerate() {
        let o = j * HOP;
        for i in 0..FRAME {
            xo[o + i] += x[s + i] * w[i];
            yo[o + i] += y[s + i] * w[i];
        }
    }
    (xo, yo)
}

/// `frames × (NFFT/2 + 1)` power spectrum.
fn power_spectrum(x: &[f64], w: &[f64]) -> Array2<f64> {
    let starts = frame_starts(x.len());
    let bins = NFFT / 2 + 1;
    let fft = FftPlanner::new().plan_fft_forward(NFFT);
    let mut out = Array2::zeros((starts.len(), bins));
    let mut buf = vec![Complex::new(0.0, 0.0); NFFT];
    for (t, &s) in starts.iter().enumerate() {
        buf.fill(Complex::new(0.0, 0.0));
        for i in 0..FRAME {
            buf[i] = Complex::new(x[s + i] * w[i], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..bins {
            out[[t, k]] = buf[k].norm_sqr();
        }
    }
    out
}

/// One-third-octave band edges as FFT bin ranges `[lo, hi)`.
fn third_octave_bands() -> Vec<(usize, usize)> {
    let bins = NFFT / 2 + 1;
    let freq: Vec<f64> = (0..bins).map(|k| k as f64 * FS as f64 / NFFT as f64).collect();
    let nearest = |f: f64| {
        freq.iter()
            .enumerate()
            .min_by(|a, b| (a.1 - f).abs().total_cmp(&(b.1 - f).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    };
    (0..NUM_BANDS)
        .map(|k| {
            let k = k as f64;
            let lo = MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// `bands × frames` one-third-octave magnitudes.
fn band_envelopes(power: &Array2<f64>, bands: &[(usize, usize)]) -> Array2<f64> {
    let mut out = Array2::zeros((bands.len(), power.nrows()));
    for (b, &(lo, hi)) in bands.iter().enumerate() {
        for t in 0..power.nrows() {
            out[[b, t]] = power.slice(s![t, lo..hi]).sum().sqrt();
        }
    }
    out
}

fn centred_unit(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt() + EPS;
    v.iter_mut().for_each(|x| *x /= norm);
}

/// Short-time objective intelligibility of `processed` against `clean`,
/// clipped to [0, 1].
pub fn stoi(clean: &Waveform, processed: &Waveform) -> Result<f64> {
    if clean.len() != processed.len() {
        return Err(Error::invalid(format!(
            "length mismatch: clean {} vs processed {} samples",
            clean.len(),
            processed.len()
        )));
    }
    if clean.sample_rate() != processed.sample_rate() {
        return Err(Error::SampleRate {
            found: processed.sample_rate(),
            expected: clean.sample_rate(),
        });
    }
    if clean.samples().iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroPower("clean signal is silent"));
    }
    let rate = clean.sample_rate() as usize;
    if (clean.len() as f64) < 3.0 * rate as f64 {
        log::warn!("STOI on {:.2} s of audio; 3 s or more is recommended", clean.len() as f64 / rate as f64);
    }
    let x = resample_poly(clean.samples(), FS as usize, rate)?;
    let y = resample_poly(processed.samples(), FS as usize, rate)?;
    let w = hann();
    let (x, y) = remove_silent_frames(&x, &y, &w);
    let bands = third_octave_bands();
    let xt = band_envelopes(&power_spectrum(&x, &w), &bands);
    let yt = band_envelopes(&power_spectrum(&y, &w), &bands);
    let frames = xt.ncols();
    if frames < SEGMENT {
        return Err(Error::invalid(format!(
            "only {frames} non-silent frames, need at least {SEGMENT}"
        )));
    }
    let clip = 10f64.powf(-BETA_DB / 20.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for m in SEGMENT..=frames {
        for b in 0..NUM_BANDS {
            let mut xs = xt.slice(s![b, m - SEGMENT..m]).to_vec();
            let ys = yt.slice(s![b, m - SEGMENT..m]);
            let xn = xs.iter().map(|v| v * v).sum::<f64>().sqrt();
            let yn = ys.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = xn / (yn + EPS);
            let mut yp: Vec<f64> = ys
                .iter()
                .zip(&xs)
                .map(|(yv, xv)| (yv * scale).min(xv * (1.0 + clip)))
                .collect();
            centred_unit(&mut xs);
            centred_unit(&mut yp);
            total += xs.iter().zip(&yp).map(|(a, b)| a * b).sum::<f64>();
            count += 1;
        }
    }
    Ok((total / count as f64).clamp(0.0, 1.0))
}
