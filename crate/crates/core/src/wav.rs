//! Mono WAV input/output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{invalid, Result};
use crate::signal::Waveform;

/// 16-bit little-endian PCM; samples are clipped to [-1, 1].
pub fn write_pcm16(path: impl AsRef<Path>, x: &Waveform) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: x.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec)?;
    for &s in x.samples() {
        let q = (s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
        w.write_sample(q)?;
    }
    w.finalize()?;
    Ok(())
}

/// 32-bit IEEE float; lossless for samples that are exactly representable as f32.
pub fn write_f32(path: impl AsRef<Path>, x: &Waveform) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: x.sample_rate_hz(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec)?;
    for &s in x.samples() {
        w.write_sample(s as f32)?;
    }
    w.finalize()?;
    Ok(())
}

/// Reads a mono 16-bit PCM or 32-bit float file.
pub fn read(path: impl AsRef<Path>) -> Result<Waveform> {
    let mut r = WavReader::open(path)?;
    let spec = r.spec();
    if spec.channels != 1 {
        return Err(invalid(format!("expected mono audio, got {} channels", spec.channels)));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => r
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / i16::MAX as f64))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Float, 32) => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(invalid(format!("unsupported wav encoding {fmt:?}/{bits} bits")));
        }
    };
    Waveform::new(samples, spec.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::synth_sine;

    #[test]
    fn pcm16_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let x = synth_sine(440.0, 0.8, 0.25, 16_000).unwrap();
        write_pcm16(&path, &x).unwrap();
        let y = read(&path).unwrap();
        assert_eq!(y.sample_rate_hz(), 16_000);
        assert_eq!(y.len(), x.len());
        for (a, b) in x.samples().iter().zip(y.samples()) {
            assert!((a - b).abs() <= 1.0 / 32767.0);
        }
    }

    #[test]
    fn f32_round_trip_is_exact_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        let samples = (0..1000).map(|i| ((i as f64 * 0.01).sin() as f32) as f64).collect();
        let x = Waveform::new(samples, 8000).unwrap();
        write_f32(&path, &x).unwrap();
        assert_eq!(read(&path).unwrap(), x);
    }
}
