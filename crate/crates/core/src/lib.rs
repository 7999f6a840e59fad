//! Building blocks for turning subtitled audio into cleaned speech-corpus manifests.
//!
//! * [`catalog`]: search terms, discovered videos and subtitle availability.
//! * [`subtext`]: subtitle parsing, text normalisation and machine-caption detection.
//! * [`ctcseg`]: CTC segmentation, confidence scoring and threshold filtering.
//! * [`chunker`]: block-partitioned inference for audio too long for one pass.
//! * [`asrfilter`]: manifests, test/train split design and statistics.
//! * [`spkfilter`]: VAD, intra-video speaker variation, speaker grouping, trials and EER.

// `!(x >= lo)` is used on purpose: it rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asrfilter;
pub mod catalog;
pub mod chunker;
pub mod ctcseg;
pub mod error;
pub mod jsonl;
pub mod spkfilter;
pub mod subtext;
mod util;

pub use asrfilter::{ManifestStats, SplitSpec, Splits, UtteranceRecord};
pub use chunker::{BlockPlan, ChunkConfig, ModelAdapter};
pub use ctcseg::{AlignedUtterance, PosteriorMatrix, ScoreConfig, UtteranceText, LOG_ZERO};
pub use error::{Error, Result};
pub use spkfilter::{ClassifyConfig, EmbeddingSet, VadConfig, VariationResult};
pub use subtext::{Cue, SubtitleTrack};
