use super::{mean_square, Waveform};
use crate::error::{Error, Result};

/// Gain `g` such that `10·log10(P_clean / P_{g·noise}) = snr_db`, with powers
/// measured as mean square over the first `clean.len()` noise samples.
pub fn mix_gain(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::invalid("snr_db must be finite"));
    }
    if noise.len() < clean.len() {
        return Err(Error::invalid(format!(
            "noise has {} samples, clean needs {}",
            noise.len(),
            clean.len()
        )));
    }
    if noise.sample_rate() != clean.sample_rate() {
        return Err(Error::SampleRate {
            found: noise.sample_rate(),
            expected: clean.sample_rate(),
        });
    }
    let p_clean = clean.power();
    let p_noise = mean_square(&noise.samples()[..clean.len()]);
    if p_clean <= 0.0 {
        return Err(Error::ZeroPower("clean"));
    }
    if p_noise <= 0.0 {
        return Err(Error::ZeroPower("noise"));
    }
    Ok((p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt())
}

/// `clean + g·noise[..len]` at exactly `snr_db`.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Waveform> {
    let g = mix_gain(clean, noise, snr_db)?;
    let samples = clean
        .samples()
        .iter()
        .zip(noise.samples())
        .map(|(c, n)| c + g * n)
        .collect();
    Waveform::new(samples, clean.sample_rate())
}

/// SNR of `noisy` relative to `clean`, treating `noisy - clean` as the noise.
pub fn measured_snr_db(clean: &[f64], noisy: &[f64]) -> f64 {
    let residual: Vec<f64> = noisy.iter().zip(clean).map(|(y, x)| y - x).collect();
    10.0 * (mean_square(clean) / mean_square(&residual)).log10()
}
