//! Block-partitioned inference for audio too long to run through a model in one pass.
//!
//! The audio is cut into cores that tile `[0, floor(total / r) · r)`; each core is padded on
//! both sides with extra context, inferred, and the pad frames are dropped before the
//! posteriors are concatenated. With pads at least as wide as the model's receptive field
//! the stitched posteriors equal single-pass inference bit for bit.

mod toy;
mod wav;

use serde::{Deserialize, Serialize};

pub use toy::{toy_model, ToyModel};
pub use wav::{read_wav, write_wav, SAMPLE_RATE_HZ};

use crate::ctcseg::PosteriorMatrix;
use crate::error::{Error, Result};

/// Anything that maps PCM samples to CTC posteriors.
pub trait ModelAdapter {
    /// Audio samples consumed per posterior frame (`r`).
    fn samples_per_frame(&self) -> usize;
    /// Context radius, in samples, that can influence a frame.
    fn receptive_field_samples(&self) -> usize;
    fn sample_rate_hz(&self) -> u32;
    /// Must return exactly `floor(samples.len() / r)` frames and be deterministic.
    fn infer(&self, samples: &[i16]) -> Result<PosteriorMatrix>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkConfig {
    /// Longest core the model is allowed to see at once.
    pub max_block_s: f64,
    pub min_overlap_ms: f64,
    pub sample_rate_hz: u32,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self {
            max_block_s: 500.0,
            min_overlap_ms: 600.0,
            sample_rate_hz: 16_000,
        }
    }
}

impl ChunkConfig {
    pub fn validate(&self, samples_per_frame: usize) -> Result<()> {
        if !(self.min_overlap_ms >= 0.0) {
            return Err(Error::invalid("min_overlap_ms must be non-negative"));
        }
        if self.sample_rate_hz == 0 {
            return Err(Error::invalid("sample_rate_hz must be positive"));
        }
        if samples_per_frame == 0 {
            return Err(Error::invalid("samples_per_frame must be positive"));
        }
        if !(self.max_block_s * f64::from(self.sample_rate_hz) >= samples_per_frame as f64) {
            return Err(Error::invalid(format!(
                "max_block_s {} s holds less than one frame of {samples_per_frame} samples",
                self.max_block_s
            )));
        }
        Ok(())
    }
}

/// One block: the core it contributes, plus the context read on either side (samples).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub core_start: usize,
    pub core_end: usize,
    pub left_pad: usize,
    pub right_pad: usize,
}

impl Block {
    pub fn core_len(&self) -> usize {
        self.core_end - self.core_start
    }

    pub fn input_range(&self) -> std::ops::Range<usize> {
        self.core_start - self.left_pad..self.core_end + self.right_pad
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPlan {
    pub blocks: Vec<Block>,
    pub samples_per_frame: usize,
    pub total_samples: usize,
    /// Nominal core length in samples.
    pub nominal: usize,
    /// Requested pad in samples (a multiple of `samples_per_frame`).
    pub pad: usize,
}

impl BlockPlan {
    /// Samples covered by cores: trailing samples short of one frame are dropped.
    pub fn covered_samples(&self) -> usize {
        self.total_samples / self.samples_per_frame * self.samples_per_frame
    }

    pub fn frames(&self) -> usize {
        self.total_samples / self.samples_per_frame
    }
}

/// Partitions `total_samples` into frame-aligned cores of the nominal block size. A short
/// remainder is merged into the last core when that keeps it within 1.25× nominal;
/// otherwise it becomes its own block.
pub fn plan_blocks(total_samples: usize, r: usize, cfg: &ChunkConfig) -> Result<BlockPlan> {
    cfg.validate(r)?;
    if total_samples < r {
        return Err(Error::AudioTooShort {
            samples: total_samples,
            samples_per_frame: r,
        });
    }
    let rate = f64::from(cfg.sample_rate_hz);
    let nominal = ((cfg.max_block_s * rate) as usize / r) * r;
    let pad = ((cfg.min_overlap_ms * rate / 1000.0) / r as f64).ceil() as usize * r;
    let covered = total_samples / r * r;

    let full = covered / nominal;
    let rem = covered % nominal;
    let mut cores: Vec<usize> = vec![nominal; full];
    if rem > 0 {
        // merge when nominal + rem <= 1.25 * nominal, in exact integer arithmetic
        if full > 0 && 4 * rem <= nominal {
            *cores.last_mut().expect("full > 0") += rem;
        } else {
            cores.push(rem);
        }
    }

    let mut blocks = Vec::with_capacity(cores.len());
    let mut start = 0;
    for len in cores {
        let end = start + len;
        blocks.push(Block {
            core_start: start,
            core_end: end,
            left_pad: pad.min(start),
            right_pad: pad.min(total_samples - end),
        });
        start = end;
    }
    Ok(BlockPlan {
        blocks,
        samples_per_frame: r,
        total_samples,
        nominal,
        pad,
    })
}

/// Infers each padded block, drops the pad frames and concatenates the cores.
pub fn infer_long(
    samples: &[i16],
    model: &dyn ModelAdapter,
    cfg: &ChunkConfig,
) -> Result<PosteriorMatrix> {
    let plan = plan_blocks(samples.len(), model.samples_per_frame(), cfg)?;
    infer_planned(samples, model, &plan)
}

pub fn infer_planned(
    samples: &[i16],
    model: &dyn ModelAdapter,
    plan: &BlockPlan,
) -> Result<PosteriorMatrix> {
    let r = plan.samples_per_frame;
    if model.samples_per_frame() != r || plan.total_samples != samples.len() {
        return Err(Error::invalid(
            "block plan does not match the model frame size or audio length",
        ));
    }
    let mut parts = Vec::with_capacity(plan.blocks.len());
    let mut vocab = None;
    for (i, block) in plan.blocks.iter().enumerate() {
        let input = &samples[block.input_range()];
        let out = model.infer(input)?;
        let expected = input.len() / r;
        if out.frames() != expected {
            return Err(Error::Block {
                block: i,
                message: format!(
                    "model returned {} frames for {} samples, expected {expected}",
                    out.frames(),
                    input.len()
                ),
            });
        }
        if *vocab.get_or_insert(out.vocab()) != out.vocab() {
            return Err(Error::Block {
                block: i,
                message: format!("vocabulary changed to {}", out.vocab()),
            });
        }
        let skip = block.left_pad / r;
        let keep = block.core_len() / r;
        parts.push(out.slice_frames(skip, skip + keep)?);
    }
    PosteriorMatrix::concat(&parts)
}
