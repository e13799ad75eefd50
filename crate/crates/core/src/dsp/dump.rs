//! Binary feature dumps: a 16-byte header `{T, dims, hop, fft_size}` as
//! little-endian u32, then row-major little-endian f32 values.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{LpsFeatures, StftConfig};
use crate::error::{Error, Result};

pub fn write_feature_dump(path: &Path, lps: &LpsFeatures) -> Result<()> {
    let (t, dims) = lps.frames.dim();
    let mut buf = Vec::with_capacity(16 + 4 * t * dims);
    for v in [t, dims, lps.config.hop, lps.config.fft_size] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in lps.frames.iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Reads a dump back; the sample rate is not stored and must be supplied.
pub fn read_feature_dump(path: &Path, sample_rate: u32) -> Result<LpsFeatures> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 {
        return Err(Error::invalid("feature dump shorter than its header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let (t, dims, hop, fft_size) = (word(0), word(1), word(2), word(3));
    if bytes.len() != 16 + 4 * t * dims {
        return Err(Error::shape(format!("dump body holds {} bytes, header says {t}×{dims}", bytes.len() - 16)));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let frames = Array2::from_shape_vec((t, dims), values).map_err(|e| Error::shape(e.to_string()))?;
    Ok(LpsFeatures {
        frames,
        config: StftConfig { fft_size, hop, sample_rate },
        num_samples: (t.max(1) - 1) * hop + fft_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trip_is_f32_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        let frames = Array2::from_shape_fn((3, 257), |(t, k)| (t as f64 - k as f64) * 0.1);
        let lps = LpsFeatures { frames: frames.clone(), config: StftConfig::SPEECH_16K, num_samples: 1024 };
        write_feature_dump(&p, &lps).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[0..4], &3u32.to_le_bytes());
        assert_eq!(&bytes[4..8], &257u32.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 4 * 3 * 257);
        let back = read_feature_dump(&p, 16000).unwrap();
        assert_eq!(back.config, StftConfig::SPEECH_16K);
        for (a, b) in frames.iter().zip(back.frames.iter()) {
            assert_eq!(*a as f32 as f64, *b);
        }
    }
}
