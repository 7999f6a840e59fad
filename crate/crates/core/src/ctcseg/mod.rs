//! CTC segmentation: align subtitle text to CTC posteriors, score each utterance by its
//! worst one-second window, and drop utterances below a confidence threshold.

mod posterior;
mod trellis;
mod vocab;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

pub use posterior::{is_log_zero, PosteriorMatrix, LOG_ZERO};
pub use trellis::{backtrack, build_trellis, BestPath, Trellis, UtteranceSpan, UtteranceText};
pub use vocab::Vocabulary;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    /// Window length in frames for the confidence score.
    pub window: usize,
    pub blank_id: u32,
    /// Keep threshold; per run, no default.
    pub theta: Option<f64>,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            window: 30,
            blank_id: 0,
            theta: None,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::invalid("score window must be at least one frame"));
        }
        Ok(())
    }
}

/// An utterance with its aligned span and confidence score.
///
/// `end_s` is the end of the last frame, `(end_frame + 1) · r / rate`, so spans are never
/// empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedUtterance {
    pub utterance_index: usize,
    pub start_frame: usize,
    pub end_frame: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub score: f64,
    pub text: String,
}

/// Anything carrying a confidence score that can be thresholded.
pub trait Scored {
    fn score(&self) -> f64;
}

impl Scored for AlignedUtterance {
    fn score(&self) -> f64 {
        self.score
    }
}

/// Minimum over sliding windows of `window` frames of the mean per-frame log-prob. Sequences
/// no longer than the window score as their plain mean.
pub fn window_score(path_logprobs: &[f64], window: usize) -> f64 {
    assert!(!path_logprobs.is_empty(), "window_score of an empty path");
    let window = window.max(1);
    let n = path_logprobs.len();
    if n <= window {
        return clamp_log(path_logprobs.iter().sum::<f64>() / n as f64);
    }
    // direct sums per window: no running-sum drift, and L is small
    let worst = path_logprobs
        .windows(window)
        .map(|w| w.iter().sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    clamp_log(worst / window as f64)
}

fn clamp_log(x: f64) -> f64 {
    if is_log_zero(x) {
        LOG_ZERO
    } else {
        x.min(0.0)
    }
}

/// Full alignment result: per-utterance spans and scores plus the underlying path.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub utterances: Vec<AlignedUtterance>,
    pub path: BestPath,
}

/// Builds the trellis, backtracks and scores every utterance. Output order follows input
/// order.
pub fn align_detailed(
    p: &PosteriorMatrix,
    utts: &[UtteranceText],
    cfg: &ScoreConfig,
) -> Result<Option<Alignment>> {
    cfg.validate()?;
    if utts.is_empty() {
        return Ok(None);
    }
    let trellis = build_trellis(p, utts, cfg.blank_id)?;
    let path = backtrack(&trellis, p, utts)?;
    let utterances = utts
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let span = path.spans[k];
            AlignedUtterance {
                utterance_index: u.utterance_index,
                start_frame: span.start_frame,
                end_frame: span.end_frame,
                start_s: p.frame_to_seconds(span.start_frame),
                end_s: p.frame_to_seconds(span.end_frame + 1),
                score: window_score(path.utterance_frame_logprobs(k), cfg.window),
                text: u.text.clone(),
            }
        })
        .collect();
    Ok(Some(Alignment { utterances, path }))
}

pub fn align(
    p: &PosteriorMatrix,
    utts: &[UtteranceText],
    cfg: &ScoreConfig,
) -> Result<Vec<AlignedUtterance>> {
    Ok(align_detailed(p, utts, cfg)?
        .map(|a| a.utterances)
        .unwrap_or_default())
}

/// Scores one utterance against fixed (platform-provided) timings instead of re-aligning it.
/// Returns `LOG_ZERO` when the segment cannot emit every token.
pub fn score_segment(
    p: &PosteriorMatrix,
    u: &UtteranceText,
    start_s: f64,
    end_s: f64,
    cfg: &ScoreConfig,
) -> Result<f64> {
    let duration = p.duration_s();
    if !(start_s >= 0.0 && start_s < end_s && end_s <= duration + 1e-9) {
        return Err(Error::invalid(format!(
            "segment [{start_s}, {end_s}) outside audio of {duration} s"
        )));
    }
    let fps = 1.0 / p.frame_duration_s();
    let start_frame = (start_s * fps + 1e-9).floor() as usize;
    let end_frame = ((end_s * fps - 1e-9).ceil() as usize).min(p.frames());
    if end_frame <= start_frame || end_frame - start_frame < u.tokens.len() {
        return Ok(LOG_ZERO);
    }
    let segment = p.slice_frames(start_frame, end_frame)?;
    match align(&segment, std::slice::from_ref(u), cfg) {
        Ok(aligned) => Ok(aligned[0].score),
        Err(Error::Unalignable) => Ok(LOG_ZERO),
        Err(e) => Err(e),
    }
}

/// Keeps items scoring strictly above `theta`, preserving order.
pub fn filter_by_score<T: Scored + Clone>(items: &[T], theta: f64) -> Vec<T> {
    items
        .iter()
        .filter(|item| item.score() > theta)
        .cloned()
        .collect()
}

/// One line of an alignment JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentLine {
    pub utt_index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub score: f64,
    pub text: String,
}

impl From<&AlignedUtterance> for AlignmentLine {
    fn from(a: &AlignedUtterance) -> Self {
        Self {
            utt_index: a.utterance_index,
            start_s: a.start_s,
            end_s: a.end_s,
            score: a.score,
            text: a.text.clone(),
        }
    }
}

impl Scored for AlignmentLine {
    fn score(&self) -> f64 {
        self.score
    }
}

pub fn write_alignment_jsonl<W: Write>(mut w: W, lines: &[AlignmentLine]) -> Result<()> {
    for line in lines {
        serde_json::to_writer(&mut w, line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_alignment_jsonl<R: BufRead>(r: R) -> Result<Vec<AlignmentLine>> {
    crate::jsonl::read(r)
}
