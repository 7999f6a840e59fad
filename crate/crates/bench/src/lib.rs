//! Seeded input generators shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use speechcorpus_core::spkfilter::ScoredTrial;
use speechcorpus_core::{PosteriorMatrix, UtteranceText};

pub const SAMPLES_PER_FRAME: u32 = 640;
pub const SAMPLE_RATE_HZ: u32 = 16_000;

/// Random posteriors with `n_utts` utterances of `tokens_per_utt` tokens each, drawn from a
/// vocabulary of `vocab` (blank is 0). Frames are spread so every utterance fits.
pub fn alignment_input(
    frames: usize,
    vocab: usize,
    n_utts: usize,
    tokens_per_utt: usize,
    seed: u64,
) -> (PosteriorMatrix, Vec<UtteranceText>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..frames)
        .map(|_| (0..vocab).map(|_| rng.random_range(0.01..1.0)).collect())
        .collect();
    let p = PosteriorMatrix::from_prob_rows(&rows, SAMPLES_PER_FRAME, SAMPLE_RATE_HZ)
        .expect("valid rows");
    let utts = (0..n_utts)
        .map(|k| {
            let tokens = (0..tokens_per_utt)
                .map(|_| rng.random_range(1..vocab as u32))
                .collect();
            UtteranceText::new(k, format!("utt{k}"), tokens)
        })
        .collect();
    (p, utts)
}

/// Low-level noise, as 16-bit samples.
pub fn audio(seconds: f64, seed: u64) -> Vec<i16> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * f64::from(SAMPLE_RATE_HZ)) as usize;
    (0..n).map(|_| rng.random_range(-2000..2000)).collect()
}

/// Trials with overlapping target/non-target similarity distributions.
pub fn trials(n: usize, seed: u64) -> Vec<ScoredTrial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let target = i % 10 == 0;
            let centre = if target { 0.7 } else { 0.2 };
            ScoredTrial {
                similarity: centre + rng.random_range(-0.4..0.4),
                target,
            }
        })
        .collect()
}
