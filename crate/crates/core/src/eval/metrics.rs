use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stoi::stoi;
use crate::corpus::Waveform;
use crate::error::{Error, Result};

pub const SI_SDR_CAP_DB: f64 = 60.0;
pub const SEG_SNR_RANGE: (f64, f64) = (-10.0, 35.0);
/// Frames quieter than this relative to the loudest clean frame are skipped.
const SEG_ACTIVE_RANGE_DB: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Metric {
    Stoi,
    SiSdr,
    SegSnr,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Stoi, Metric::SiSdr, Metric::SegSnr];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Stoi => "STOI",
            Metric::SiSdr => "SI_SDR",
            Metric::SegSnr => "SEG_SNR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: Metric,
    /// Mean over `per_utterance`.
    pub value: f64,
    pub per_utterance: Vec<f64>,
}

fn check_lengths(clean: &Waveform, processed: &Waveform) -> Result<()> {
    if clean.len() != processed.len() {
        return Err(Error::invalid(format!(
            "length mismatch: clean {} vs processed {} samples",
            clean.len(),
            processed.len()
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scale-invariant SDR in dB, capped at [`SI_SDR_CAP_DB`].
pub fn si_sdr(clean: &Waveform, processed: &Waveform) -> Result<f64> {
    check_lengths(clean, processed)?;
    let s = clean.samples();
    let y = processed.samples();
    let ss = dot(s, s);
    if ss == 0.0 {
        return Err(Error::ZeroPower("clean signal has zero energy"));
    }
    if dot(y, y) == 0.0 {
        return Err(Error::ZeroPower("processed signal has zero energy"));
    }
    let alpha = dot(s, y) / ss;
    let target = alpha * alpha * ss;
    let residual: f64 = s.iter().zip(y).map(|(a, b)| (b - alpha * a).powi(2)).sum();
    if residual == 0.0 || target / residual >= 10f64.powf(SI_SDR_CAP_DB / 10.0) {
        return Ok(SI_SDR_CAP_DB);
    }
    if target == 0.0 {
        // Processed is orthogonal to clean: the ratio is 0, i.e. -inf dB.
        return Ok(-SI_SDR_CAP_DB);
    }
    Ok(10.0 * (target / residual).log10())
}

/// Mean per-frame SNR over active frames (32 ms frames, 16 ms hop), with each
/// frame clamped to [`SEG_SNR_RANGE`]. An all-zero output frame scores the
/// lower bound.
pub fn seg_snr(clean: &Waveform, processed: &Waveform) -> Result<f64> {
    check_lengths(clean, processed)?;
    let frame = (clean.sample_rate() as usize * 32 / 1000).max(1);
    let hop = frame / 2;
    let s = clean.samples();
    let y = processed.samples();
    let starts: Vec<usize> = if s.len() <= frame {
        vec![0]
    } else {
        (0..=(s.len() - frame) / hop).map(|t| t * hop).collect()
    };
    let stats: Vec<(f64, f64, bool)> = starts
        .iter()
        .map(|&st| {
            let end = (st + frame).min(s.len());
            let sig: f64 = s[st..end].iter().map(|v| v * v).sum();
            let err: f64 = s[st..end].iter().zip(&y[st..end]).map(|(a, b)| (a - b).powi(2)).sum();
            (sig, err, y[st..end].iter().all(|v| *v == 0.0))
        })
        .collect();
    let max = stats.iter().map(|(p, ..)| *p).fold(0.0, f64::max);
    let floor = max * 10f64.powf(-SEG_ACTIVE_RANGE_DB / 10.0);
    let (lo, hi) = SEG_SNR_RANGE;
    let active: Vec<f64> = stats
        .iter()
        .filter(|(p, ..)| *p > 0.0 && *p >= floor)
        .map(|&(p, e, muted)| match () {
            // A muted output frame recovers nothing of an active clean frame.
            _ if muted => lo,
            _ if e == 0.0 => hi,
            _ => (10.0 * (p / e).log10()).clamp(lo, hi),
        })
        .collect();
    if active.is_empty() {
        return Err(Error::ZeroPower("no active frames in clean signal"));
    }
    Ok(active.iter().sum::<f64>() / active.len() as f64)
}

pub fn evaluate(metric: Metric, clean: &Waveform, processed: &Waveform) -> Result<f64> {
    match metric {
        Metric::Stoi => stoi(clean, processed),
        Metric::SiSdr => si_sdr(clean, processed),
        Metric::SegSnr => seg_snr(clean, processed),
    }
}

/// Scores every `(clean, processed)` pair in parallel, preserving order.
pub fn score_all(metric: Metric, pairs: &[(&Waveform, &Waveform)]) -> Result<MetricResult> {
    if pairs.is_empty() {
        return Err(Error::invalid("no utterances to score"));
    }
    let per_utterance = pairs
        .par_iter()
        .map(|(c, p)| evaluate(metric, c, p))
        .collect::<Result<Vec<f64>>>()?;
    let value = per_utterance.iter().sum::<f64>() / per_utterance.len() as f64;
    Ok(MetricResult {
        metric,
        value,
        per_utterance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    use crate::seed::rng_from_seed;

    fn wave(v: Vec<f64>) -> Waveform {
        Waveform::new(v, 16_000).unwrap()
    }

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn si_sdr_cap_and_scale() {
        let x = wave(random(4000, 1));
        assert_eq!(si_sdr(&x, &x).unwrap(), SI_SDR_CAP_DB);
        let x2 = wave(x.samples().iter().map(|v| 2.0 * v).collect());
        assert_eq!(si_sdr(&x, &x2).unwrap(), SI_SDR_CAP_DB);
    }

    #[test]
    fn si_sdr_orthogonal_equal_norm_noise_is_zero_db() {
        let x = random(4000, 2);
        let mut n = random(4000, 3);
        // Gram-Schmidt against x, then rescale to ‖x‖.
        let proj = dot(&n, &x) / dot(&x, &x);
        n.iter_mut().zip(&x).for_each(|(a, b)| *a -= proj * b);
        let g = (dot(&x, &x) / dot(&n, &n)).sqrt();
        let y: Vec<f64> = x.iter().zip(&n).map(|(a, b)| a + g * b).collect();
        let v = si_sdr(&wave(x), &wave(y)).unwrap();
        assert!(v.abs() < 1e-9, "{v}");
    }

    #[test]
    fn si_sdr_errors() {
        assert!(si_sdr(&wave(vec![0.0; 10]), &wave(vec![1.0; 10])).is_err());
        assert!(si_sdr(&wave(vec![1.0; 10]), &wave(vec![0.0; 10])).is_err());
        assert!(si_sdr(&wave(vec![1.0; 10]), &wave(vec![1.0; 11])).is_err());
    }

    #[test]
    fn seg_snr_clamps() {
        let x = wave(random(8000, 4));
        assert_eq!(seg_snr(&x, &x).unwrap(), 35.0);
        assert_eq!(seg_snr(&x, &wave(vec![0.0; 8000])).unwrap(), -10.0);
    }

    #[test]
    fn seg_snr_single_frame_four_to_one() {
        // One 512-sample frame: error = x/2, so clean power is 4× error power.
        let x = random(512, 5);
        let y: Vec<f64> = x.iter().map(|v| v * 0.5).collect();
        let v = seg_snr(&wave(x), &wave(y)).unwrap();
        assert!((v - 10.0 * 4f64.log10()).abs() < 1e-12);
        assert!((v - 6.02).abs() < 0.005);
    }

    #[test]
    fn seg_snr_skips_silent_frames() {
        let mut x = random(8192, 6);
        x[4096..].fill(0.0);
        let mut y = x.clone();
        // Garbage in the silent half must not count.
        y[4096 + 512..].iter_mut().for_each(|v| *v = 1.0);
        assert_eq!(seg_snr(&wave(x), &wave(y)).unwrap(), 35.0);
        assert!(seg_snr(&wave(vec![0.0; 2000]), &wave(vec![1.0; 2000])).is_err());
    }

    #[test]
    fn score_all_is_order_preserving() {
        let a = wave(random(4000, 7));
        let b = wave(random(4000, 8));
        let r = score_all(Metric::SiSdr, &[(&a, &a), (&a, &b)]).unwrap();
        let r2 = score_all(Metric::SiSdr, &[(&a, &b), (&a, &a)]).unwrap();
        assert_eq!(r.per_utterance[0], r2.per_utterance[1]);
        assert!((r.value - r2.value).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn si_sdr_is_scale_invariant(seed in 0u64..1000, g in 0.01f64..100.0) {
            let x = wave(random(2000, seed));
            let y = wave(random(2000, seed + 1));
            let yg = wave(y.samples().iter().map(|v| v * g).collect());
            let a = si_sdr(&x, &y).unwrap();
            let b = si_sdr(&x, &yg).unwrap();
            prop_assert!((a - b).abs() < 1e-8);
        }
    }
}
