use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Stand-in for log(0). Every "impossible" value in the crate is this sentinel, never `-inf`.
pub const LOG_ZERO: f64 = -1e30;

const LOG_ZERO_F32: f32 = -1e30;
const ROW_NORM_TOLERANCE: f64 = 1e-4;
const CTCP_MAGIC: &[u8; 4] = b"CTCP";
const CTCP_VERSION: u32 = 1;

/// True when `x` is (a sum involving) the log-zero sentinel.
pub fn is_log_zero(x: f64) -> bool {
    x <= LOG_ZERO * 0.5
}

/// Frame-wise CTC log-posteriors, `frames × vocab`, row-major. Index 0 of the vocabulary is
/// conventionally blank.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    logp: Vec<f32>,
    frames: usize,
    vocab: usize,
    samples_per_frame: u32,
    sample_rate_hz: u32,
}

impl PosteriorMatrix {
    /// Validates shape, sign and per-row normalisation. `-inf` entries are clamped to the
    /// log-zero sentinel; NaN and positive entries are rejected.
    pub fn new(
        mut logp: Vec<f32>,
        frames: usize,
        vocab: usize,
        samples_per_frame: u32,
        sample_rate_hz: u32,
    ) -> Result<Self> {
        if frames == 0 {
            return Err(Error::invalid("posterior matrix needs at least one frame"));
        }
        if vocab < 2 {
            return Err(Error::invalid(format!(
                "vocabulary must include blank plus one token, got {vocab}"
            )));
        }
        if samples_per_frame == 0 || sample_rate_hz == 0 {
            return Err(Error::invalid(
                "samples_per_frame and sample_rate_hz must be positive",
            ));
        }
        if logp.len() != frames * vocab {
            return Err(Error::invalid(format!(
                "expected {} log-probs for {frames}x{vocab}, got {}",
                frames * vocab,
                logp.len()
            )));
        }
        for (t, row) in logp.chunks_exact_mut(vocab).enumerate() {
            for v in row.iter_mut() {
                if v.is_nan() {
                    return Err(Error::invalid(format!("NaN log-prob in frame {t}")));
                }
                if *v > 0.0 {
                    return Err(Error::invalid(format!(
                        "positive log-prob {v} in frame {t}"
                    )));
                }
                if *v < LOG_ZERO_F32 {
                    *v = LOG_ZERO_F32;
                }
            }
            let lse = log_sum_exp(row);
            if lse.abs() > ROW_NORM_TOLERANCE {
                return Err(Error::invalid(format!(
                    "frame {t} is not normalised: log-sum-exp = {lse}"
                )));
            }
        }
        Ok(Self {
            logp,
            frames,
            vocab,
            samples_per_frame,
            sample_rate_hz,
        })
    }

    /// Builds a matrix from probability rows, normalising each row and taking logs.
    pub fn from_prob_rows(
        rows: &[Vec<f64>],
        samples_per_frame: u32,
        sample_rate_hz: u32,
    ) -> Result<Self> {
        let vocab = rows.first().map_or(0, Vec::len);
        let mut logp = Vec::with_capacity(rows.len() * vocab);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != vocab {
                return Err(Error::invalid(format!("ragged probability row {t}")));
            }
            let total: f64 = row.iter().sum();
            if !(total > 0.0) || row.iter().any(|p| *p < 0.0 || !p.is_finite()) {
                return Err(Error::invalid(format!("invalid probability row {t}")));
            }
            logp.extend(row.iter().map(|p| {
                if *p == 0.0 {
                    LOG_ZERO_F32
                } else {
                    ((p / total).ln() as f32).min(0.0)
                }
            }));
        }
        Self::new(logp, rows.len(), vocab, samples_per_frame, sample_rate_hz)
    }

    /// Skips normalisation checks; for property tests that perturb single entries.
    #[cfg(test)]
    pub(crate) fn from_raw_unchecked(
        logp: Vec<f32>,
        frames: usize,
        vocab: usize,
        samples_per_frame: u32,
        sample_rate_hz: u32,
    ) -> Self {
        Self {
            logp,
            frames,
            vocab,
            samples_per_frame,
            sample_rate_hz,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn samples_per_frame(&self) -> u32 {
        self.samples_per_frame
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.logp
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.logp[t * self.vocab..(t + 1) * self.vocab]
    }

    #[inline]
    pub fn get(&self, t: usize, token: usize) -> f64 {
        f64::from(self.logp[t * self.vocab + token])
    }

    /// Seconds per posterior frame.
    pub fn frame_duration_s(&self) -> f64 {
        f64::from(self.samples_per_frame) / f64::from(self.sample_rate_hz)
    }

    pub fn frame_to_seconds(&self, frame: usize) -> f64 {
        frame as f64 * self.frame_duration_s()
    }

    pub fn duration_s(&self) -> f64 {
        self.frame_to_seconds(self.frames)
    }

    /// Copy of frames `[start, end)`.
    pub fn slice_frames(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.frames {
            return Err(Error::invalid(format!(
                "frame range {start}..{end} outside 0..{}",
                self.frames
            )));
        }
        Ok(Self {
            logp: self.logp[start * self.vocab..end * self.vocab].to_vec(),
            frames: end - start,
            vocab: self.vocab,
            samples_per_frame: self.samples_per_frame,
            sample_rate_hz: self.sample_rate_hz,
        })
    }

    /// Concatenates matrices along time. All parts must agree on vocabulary and frame rate.
    pub fn concat(parts: &[PosteriorMatrix]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        let mut logp = Vec::with_capacity(parts.iter().map(|p| p.logp.len()).sum());
        for (i, part) in parts.iter().enumerate() {
            if part.vocab != first.vocab
                || part.samples_per_frame != first.samples_per_frame
                || part.sample_rate_hz != first.sample_rate_hz
            {
                return Err(Error::invalid(format!(
                    "posterior part {i} disagrees on shape or frame rate"
                )));
            }
            logp.extend_from_slice(&part.logp);
        }
        Ok(Self {
            frames: logp.len() / first.vocab,
            logp,
            vocab: first.vocab,
            samples_per_frame: first.samples_per_frame,
            sample_rate_hz: first.sample_rate_hz,
        })
    }

    /// Writes the `CTCP` v1 container: magic, then little-endian u32 version, T, V,
    /// samples-per-frame, sample rate, then T·V f32 log-probs row-major.
    pub fn write_ctcp<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CTCP_MAGIC)?;
        for field in [
            CTCP_VERSION,
            self.frames as u32,
            self.vocab as u32,
            self.samples_per_frame,
            self.sample_rate_hz,
        ] {
            w.write_all(&field.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.logp.len() * 4);
        for v in &self.logp {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_ctcp<R: Read>(mut r: R) -> Result<Self> {
        let bad = |message: String| Error::Format {
            format: "CTCP",
            message,
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| bad("truncated header".into()))?;
        if &magic != CTCP_MAGIC {
            return Err(bad(format!("bad magic {magic:?}")));
        }
        let mut header = [0u32; 5];
        for field in header.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)
                .map_err(|_| bad("truncated header".into()))?;
            *field = u32::from_le_bytes(b);
        }
        let [version, frames, vocab, spf, rate] = header;
        if version != CTCP_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let count = (frames as usize)
            .checked_mul(vocab as usize)
            .ok_or_else(|| bad("matrix size overflows".into()))?;
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        if raw.len() != count * 4 {
            return Err(bad(format!(
                "expected {} payload bytes, found {}",
                count * 4,
                raw.len()
            )));
        }
        let logp = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Self::new(logp, frames as usize, vocab as usize, spf, rate)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        File::open(path)
            .map_err(Error::from)
            .and_then(|f| Self::read_ctcp(BufReader::new(f)))
            .map_err(|e| e.with_path(path))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        File::create(path)
            .map_err(Error::from)
            .and_then(|f| self.write_ctcp(BufWriter::new(f)))
            .map_err(|e| e.with_path(path))
    }
}

fn log_sum_exp(row: &[f32]) -> f64 {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let sum: f64 = row.iter().map(|v| (f64::from(*v) - max).exp()).sum();
    max + sum.ln()
}
