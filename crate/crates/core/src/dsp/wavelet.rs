use serde::{Deserialize, Serialize};

use crate::corpus::Waveform;
use crate::error::{Error, Result};

/// Biorthogonal 3.7 filter quadruple (analysis low/high, synthesis low/high).
#[derive(Debug, Clone, Copy)]
pub struct FilterBank {
    pub dec_lo: [f64; 16],
    pub dec_hi: [f64; 16],
    pub rec_lo: [f64; 16],
    pub rec_hi: [f64; 16],
}

const A: f64 = 0.176_776_695_296_636_88;
const B: f64 = 0.530_330_085_889_910_6;

pub const BIOR37: FilterBank = FilterBank {
    dec_lo: [
        0.003_021_086_101_260_884_2,
        -0.009_063_258_303_782_652_6,
        -0.016_831_765_421_310_64,
        0.074_663_985_074_018_995,
        0.031_332_978_707_362_885,
        -0.301_159_125_922_835,
        -0.026_499_240_945_345_47,
        0.951_642_121_897_178_5,
        0.951_642_121_897_178_5,
        -0.026_499_240_945_345_47,
        -0.301_159_125_922_835,
        0.031_332_978_707_362_885,
        0.074_663_985_074_018_995,
        -0.016_831_765_421_310_64,
        -0.009_063_258_303_782_652_6,
        0.003_021_086_101_260_884_2,
    ],
    dec_hi: [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -A, B, -B, A, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    rec_lo: [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, A, B, B, A, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    rec_hi: [
        0.003_021_086_101_260_884_2,
        0.009_063_258_303_782_652_6,
        -0.016_831_765_421_310_64,
        -0.074_663_985_074_018_995,
        0.031_332_978_707_362_885,
        0.301_159_125_922_835,
        -0.026_499_240_945_345_47,
        -0.951_642_121_897_178_5,
        0.951_642_121_897_178_5,
        0.026_499_240_945_345_47,
        -0.301_159_125_922_835,
        -0.031_332_978_707_362_885,
        0.074_663_985_074_018_995,
        0.016_831_765_421_310_64,
        -0.009_063_258_303_782_652_6,
        -0.003_021_086_101_260_884_2,
    ],
};

const TAPS: usize = 16;

/// One-level DWT output. Each band runs at half the input sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletBands {
    pub approx: Vec<f64>,
    pub detail: Vec<f64>,
    pub signal_len: usize,
    pub sample_rate: u32,
}

impl WaveletBands {
    pub fn coeff_len(signal_len: usize) -> usize {
        (signal_len + TAPS - 1) / 2
    }

    pub fn band_rate(&self) -> u32 {
        self.sample_rate / 2
    }
}

/// Half-sample symmetric extension: x[-1] = x[0], x[N] = x[N-1].
fn symmetric(x: &[f64], n: isize) -> f64 {
    let len = x.len() as isize;
    let mut i = n;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= len {
            i = 2 * len - 1 - i;
        } else {
            return x[i as usize];
        }
    }
}

fn analyze_band(x: &[f64], filter: &[f64; TAPS]) -> Vec<f64> {
    (0..WaveletBands::coeff_len(x.len()))
        .map(|i| {
            let center = 2 * i as isize + 1;
            filter
                .iter()
                .enumerate()
                .map(|(j, h)| h * symmetric(x, center - j as isize))
                .sum()
        })
        .collect()
}

pub fn wavelet_split(wave: &Waveform) -> Result<WaveletBands> {
    let x = wave.samples();
    if x.len() < TAPS {
        return Err(Error::invalid(format!(
            "signal of {} samples is shorter than the {TAPS}-tap filter",
            x.len()
        )));
    }
    Ok(WaveletBands {
        approx: analyze_band(x, &BIOR37.dec_lo),
        detail: analyze_band(x, &BIOR37.dec_hi),
        signal_len: x.len(),
        sample_rate: wave.sample_rate(),
    })
}

/// Upsample, synthesis-filter, sum, and remove the (taps - 1) sample delay.
pub fn wavelet_merge(bands: &WaveletBands) -> Result<Waveform> {
    let expected = WaveletBands::coeff_len(bands.signal_len);
    if bands.approx.len() != bands.detail.len() || bands.approx.len() != expected {
        return Err(Error::shape(format!(
            "approx {} / detail {} coefficients, expected {expected} for {} samples",
            bands.approx.len(),
            bands.detail.len(),
            bands.signal_len
        )));
    }
    let mut out = vec![0.0; bands.signal_len];
    for (n, o) in out.iter_mut().enumerate() {
        // out[n] = Σ_i c[i]·rec[n + TAPS - 2 - 2i]
        let m = n + TAPS - 2;
        let i_min = m.saturating_sub(TAPS - 1).div_ceil(2);
        let i_max = (m / 2).min(expected - 1);
        let mut acc = 0.0;
        for i in i_min..=i_max {
            let k = m - 2 * i;
            acc += bands.approx[i] * BIOR37.rec_lo[k] + bands.detail[i] * BIOR37.rec_hi[k];
        }
        *o = acc;
    }
    Waveform::new(out, bands.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::f64::consts::PI;

    use crate::seed::rng_from_seed;

    fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }

    fn modulate(h: &[f64]) -> Vec<f64> {
        h.iter()
            .enumerate()
            .map(|(k, v)| if k % 2 == 0 { *v } else { -v })
            .collect()
    }

    /// Distortion term is a pure delay and the alias term vanishes.
    #[test]
    fn filter_bank_satisfies_perfect_reconstruction() {
        let fb = BIOR37;
        let p0 = poly_mul(&fb.dec_lo, &fb.rec_lo);
        let p1 = poly_mul(&fb.dec_hi, &fb.rec_hi);
        let dist: Vec<f64> = p0.iter().zip(&p1).map(|(a, b)| a + b).collect();
        for (k, v) in dist.iter().enumerate() {
            let expected = if k == TAPS - 1 { 2.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-12, "distortion[{k}] = {v}");
        }
        let a0 = poly_mul(&modulate(&fb.dec_lo), &fb.rec_lo);
        let a1 = poly_mul(&modulate(&fb.dec_hi), &fb.rec_hi);
        for (a, b) in a0.iter().zip(&a1) {
            assert!((a + b).abs() < 1e-12);
        }
        let dc: f64 = fb.dec_lo.iter().sum();
        assert!((dc - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    fn wave(v: Vec<f64>) -> Waveform {
        Waveform::new(v, 16000).unwrap()
    }

    #[test]
    fn constant_signal_has_no_detail() {
        let bands = wavelet_split(&wave(vec![0.7; 200])).unwrap();
        assert!(bands.detail.iter().all(|d| d.abs() <= 1e-8));
    }

    #[test]
    fn perfect_reconstruction_on_random_signals() {
        let mut rng = rng_from_seed(8);
        for _ in 0..20 {
            let n = rng.random_range(16..3000);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = wavelet_merge(&wavelet_split(&wave(x.clone())).unwrap()).unwrap();
            let err = x.iter().zip(y.samples()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err <= 1e-8, "n={n} err={err}");
        }
    }

    #[test]
    fn high_tone_lands_in_detail_band() {
        let x: Vec<f64> = (0..8000).map(|i| (2.0 * PI * 7000.0 * i as f64 / 16000.0).sin()).collect();
        let b = wavelet_split(&wave(x)).unwrap();
        let ea: f64 = b.approx.iter().map(|v| v * v).sum();
        let ed: f64 = b.detail.iter().map(|v| v * v).sum();
        assert!(ed / (ea + ed) >= 0.9);
    }

    #[test]
    fn constant_approx_reconstructs_constant() {
        let len = 300;
        let a = wavelet_split(&wave(vec![0.25; len])).unwrap();
        let bands = WaveletBands {
            detail: vec![0.0; a.detail.len()],
            ..a
        };
        let y = wavelet_merge(&bands).unwrap();
        assert!(y.samples().iter().all(|v| (v - 0.25).abs() <= 1e-8));
    }

    #[test]
    fn merge_is_linear() {
        let mut rng = rng_from_seed(9);
        let n = 257;
        let len = WaveletBands::coeff_len(n);
        let rand_bands = |rng: &mut rand_chacha::ChaCha8Rng| WaveletBands {
            approx: (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
            detail: (0..len).map(|_| rng.random_range(-1.0..1.0)).collect(),
            signal_len: n,
            sample_rate: 16000,
        };
        let b1 = rand_bands(&mut rng);
        let b2 = rand_bands(&mut rng);
        let (a, b) = (0.3, -2.5);
        let combo = WaveletBands {
            approx: b1.approx.iter().zip(&b2.approx).map(|(x, y)| a * x + b * y).collect(),
            detail: b1.detail.iter().zip(&b2.detail).map(|(x, y)| a * x + b * y).collect(),
            ..b1.clone()
        };
        let m = wavelet_merge(&combo).unwrap();
        let m1 = wavelet_merge(&b1).unwrap();
        let m2 = wavelet_merge(&b2).unwrap();
        for ((z, x), y) in m.samples().iter().zip(m1.samples()).zip(m2.samples()) {
            assert!((z - (a * x + b * y)).abs() <= 1e-10);
        }
    }

    /// bior3.7 is not orthogonal, so band energy of white input converges to
    /// (‖h̃‖² + ‖g̃‖²)/2 ≈ 1.31 × the time-domain energy, not to 1.
    #[test]
    fn band_energy_matches_frame_bound_prediction() {
        let norm = |f: &[f64; TAPS]| f.iter().map(|v| v * v).sum::<f64>();
        let predicted = (norm(&BIOR37.dec_lo) + norm(&BIOR37.dec_hi)) / 2.0;
        let mut rng = rng_from_seed(10);
        for _ in 0..5 {
            let x: Vec<f64> = (0..100_000).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = wavelet_split(&wave(x.clone())).unwrap();
            let band: f64 = b.approx.iter().chain(&b.detail).map(|v| v * v).sum();
            let time: f64 = x.iter().map(|v| v * v).sum();
            assert!((band / time / predicted - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn length_errors() {
        assert!(wavelet_split(&wave(vec![0.0; 15])).is_err());
        let mut b = wavelet_split(&wave(vec![0.1; 64])).unwrap();
        b.detail.pop();
        assert!(wavelet_merge(&b).is_err());
    }
}
