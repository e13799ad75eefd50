use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::error::{Error, Result};

const FULL_SCALE: f64 = 32768.0;

/// Reads a 16-bit PCM mono WAV, scaling samples by 1/32768.
pub fn wav_read(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(format!("{}: {other}", path.display())),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedChannels(spec.channels));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Wav(format!(
            "{}: only 16-bit integer PCM is supported ({:?}, {} bits)",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / FULL_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?;
    Waveform::new(samples, spec.sample_rate)
}

/// Writes a 16-bit PCM mono WAV. Samples are clipped to [-1, 1 - 1/32768]
/// and rounded to the nearest quantization step.
pub fn wav_write(wave: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let map_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(format!("{}: {other}", path.display())),
    };
    let mut writer = WavWriter::create(path, spec).map_err(map_err)?;
    for &s in wave.samples() {
        writer.write_sample(quantize(s)).map_err(map_err)?;
    }
    writer.finalize().map_err(map_err)
}

pub(crate) fn quantize(s: f64) -> i16 {
    let clipped = s.clamp(-1.0, 1.0 - 1.0 / FULL_SCALE);
    (clipped * FULL_SCALE).round().clamp(-32768.0, 32767.0) as i16
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw_wav(path: &Path, channels: u16, rate: u32, bits: u16, fmt_tag: u16, data: &[u8]) {
        let block_align = channels * bits / 8;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        bytes.extend_from_slice(b"WAVEfmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&fmt_tag.to_le_bytes());
        bytes.extend_from_slice(&channels.to_le_bytes());
        bytes.extend_from_slice(&rate.to_le_bytes());
        bytes.extend_from_slice(&(rate * block_align as u32).to_le_bytes());
        bytes.extend_from_slice(&block_align.to_le_bytes());
        bytes.extend_from_slice(&bits.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&(data.len() as u32).to_le_bytes());
        bytes.extend_from_slice(data);
        std::fs::write(path, bytes).unwrap();
    }

    fn pcm16(values: &[i16]) -> Vec<u8> {
        values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    #[test]
    fn reads_hand_built_file_with_linear_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_raw_wav(&p, 1, 16000, 16, 1, &pcm16(&[0, 16384, -16384]));
        let w = wav_read(&p).unwrap();
        assert_eq!(w.samples(), &[0.0, 0.5, -0.5]);
        assert_eq!(w.sample_rate(), 16000);
    }

    #[test]
    fn reads_8khz_header_and_downstream_rejects_it() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.wav");
        write_raw_wav(&p, 1, 8000, 16, 1, &pcm16(&[1, 2, 3, 4]));
        let w = wav_read(&p).unwrap();
        assert_eq!(w.sample_rate(), 8000);
        assert!(matches!(
            w.require_rate(16000),
            Err(Error::SampleRate { found: 8000, expected: 16000 })
        ));
    }

    #[test]
    fn rejects_stereo_and_non_pcm() {
        let dir = tempfile::tempdir().unwrap();
        let stereo = dir.path().join("s.wav");
        write_raw_wav(&stereo, 2, 16000, 16, 1, &pcm16(&[1, 2, 3, 4]));
        assert!(matches!(wav_read(&stereo), Err(Error::UnsupportedChannels(2))));

        let float = dir.path().join("f.wav");
        let data: Vec<u8> = [0.5f32, -0.5].iter().flat_map(|v| v.to_le_bytes()).collect();
        write_raw_wav(&float, 1, 16000, 32, 3, &data);
        assert!(matches!(wav_read(&float), Err(Error::Wav(_))));

        assert!(matches!(wav_read(dir.path().join("missing.wav")), Err(Error::Io { .. })));
    }

    #[test]
    fn single_sample_file_has_correct_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.wav");
        wav_write(&Waveform::new(vec![0.0], 16000).unwrap(), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 46);
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 38);
        assert_eq!(u32::from_le_bytes(bytes[40..44].try_into().unwrap()), 2);
        assert_eq!(wav_read(&p).unwrap().samples(), &[0.0]);
    }

    #[test]
    fn clips_out_of_range_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.wav");
        wav_write(&Waveform::new(vec![2.0, -2.0, 1.0], 16000).unwrap(), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let data: Vec<i16> = bytes[44..]
            .chunks(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]))
            .collect();
        assert_eq!(data, vec![32767, -32768, 32767]);
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let w = Waveform::new(vec![0.1], 16000).unwrap();
        assert!(wav_write(&w, "/nonexistent-dir/x/y.wav").is_err());
    }
}
