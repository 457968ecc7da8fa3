use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Full scale of the symmetric 16-bit mapping: `1.0 <-> 32767`.
const FULL_SCALE: f64 = 32767.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WavWriteReport {
    /// Samples outside `[-1, 1]` that were saturated.
    pub clipped: usize,
}

/// Reads 16-bit PCM mono. Samples map to `i / 32767`, clamped to `[-1, 1]`.
pub fn read_wav<T: Real>(path: impl AsRef<Path>) -> Result<Waveform<T>> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => Error::Io(io),
        other => Error::CorruptWav(format!("{}: {other}", path.display())),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != SampleFormat::Int {
        return Err(Error::UnsupportedWav(format!(
            "{}: {} channel(s), {}-bit {:?}; expected mono 16-bit PCM",
            path.display(),
            spec.channels,
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| {
            s.map(|v| T::lit((f64::from(v) / FULL_SCALE).clamp(-1.0, 1.0)))
                .map_err(|e| Error::CorruptWav(format!("{}: {e}", path.display())))
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(Waveform::new(samples, spec.sample_rate))
}

/// Writes 16-bit PCM mono, saturating out-of-range samples.
pub fn write_wav<T: Real>(path: impl AsRef<Path>, x: &Waveform<T>) -> Result<WavWriteReport> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: x.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec)?;
    let mut report = WavWriteReport::default();
    for s in &x.samples {
        writer.write_sample(quantize(*s, &mut report))?;
    }
    writer.finalize()?;
    Ok(report)
}

fn quantize<T: Real>(s: T, report: &mut WavWriteReport) -> i16 {
    let mut v = s.to_f64_lossy();
    if v.is_nan() {
        report.clipped += 1;
        v = 0.0;
    } else if v.abs() > 1.0 {
        report.clipped += 1;
        v = v.clamp(-1.0, 1.0);
    }
    (v * FULL_SCALE).round() as i16
}
