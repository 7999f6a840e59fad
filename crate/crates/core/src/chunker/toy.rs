use super::ModelAdapter;
use crate::ctcseg::PosteriorMatrix;
use crate::error::{Error, Result};

/// Deterministic stand-in for an acoustic model. Each frame's posterior row is a function of
/// the samples inside the frame plus `window_samples` on either side (clipped to the input),
/// hashed with FNV-1a and spread over the vocabulary.
#[derive(Debug, Clone)]
pub struct ToyModel {
    vocab: usize,
    window_samples: usize,
    samples_per_frame: usize,
    sample_rate_hz: u32,
}

pub fn toy_model(vocab: usize, window_samples: usize, samples_per_frame: usize) -> ToyModel {
    assert!(vocab >= 2, "toy model needs blank plus one token");
    assert!(samples_per_frame > 0);
    ToyModel {
        vocab,
        window_samples,
        samples_per_frame,
        sample_rate_hz: super::SAMPLE_RATE_HZ,
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(samples: &[i16]) -> u64 {
    let mut h = FNV_OFFSET;
    for s in samples {
        for b in s.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl ToyModel {
    fn row(&self, window: &[i16], out: &mut Vec<f32>) {
        let mut state = fnv1a(window) ^ (window.len() as u64).rotate_left(32);
        let logits: Vec<f64> = (0..self.vocab)
            .map(|_| (splitmix(&mut state) >> 11) as f64 / (1u64 << 53) as f64 * 6.0)
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        out.extend(logits.iter().map(|l| ((l - lse) as f32).min(0.0)));
    }
}

impl ModelAdapter for ToyModel {
    fn samples_per_frame(&self) -> usize {
        self.samples_per_frame
    }

    fn receptive_field_samples(&self) -> usize {
        self.window_samples
    }

    fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    fn infer(&self, samples: &[i16]) -> Result<PosteriorMatrix> {
        let r = self.samples_per_frame;
        let frames = samples.len() / r;
        if frames == 0 {
            return Err(Error::AudioTooShort {
                samples: samples.len(),
                samples_per_frame: r,
            });
        }
        let mut logp = Vec::with_capacity(frames * self.vocab);
        for f in 0..frames {
            let lo = (f * r).saturating_sub(self.window_samples);
            let hi = ((f + 1) * r + self.window_samples).min(samples.len());
            self.row(&samples[lo..hi], &mut logp);
        }
        PosteriorMatrix::new(logp, frames, self.vocab, r as u32, self.sample_rate_hz)
    }
}
