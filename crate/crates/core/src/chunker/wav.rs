use std::path::Path;

use crate::error::{Error, Result};

pub const SAMPLE_RATE_HZ: u32 = 16_000;

/// Reads a 16 kHz mono PCM16 WAV file; anything else is rejected.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Vec<i16>> {
    let path = path.as_ref();
    let inner = || -> Result<Vec<i16>> {
        let reader = hound::WavReader::open(path).map_err(|e| Error::Audio(e.to_string()))?;
        let spec = reader.spec();
        if spec.channels != 1 {
            return Err(Error::Audio(format!(
                "{} channels, expected mono",
                spec.channels
            )));
        }
        if spec.sample_rate != SAMPLE_RATE_HZ {
            return Err(Error::Audio(format!(
                "{} Hz, expected {SAMPLE_RATE_HZ} Hz",
                spec.sample_rate
            )));
        }
        if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
            return Err(Error::Audio(format!(
                "{}-bit {:?} samples, expected 16-bit PCM",
                spec.bits_per_sample, spec.sample_format
            )));
        }
        reader
            .into_samples::<i16>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Audio(e.to_string()))
    };
    inner().map_err(|e| e.with_path(path))
}

pub fn write_wav(path: impl AsRef<Path>, samples: &[i16]) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE_HZ,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let inner = || -> std::result::Result<(), hound::Error> {
        let mut w = hound::WavWriter::create(path, spec)?;
        for &s in samples {
            w.write_sample(s)?;
        }
        w.finalize()
    };
    inner().map_err(|e| Error::Audio(e.to_string()).with_path(path))
}
