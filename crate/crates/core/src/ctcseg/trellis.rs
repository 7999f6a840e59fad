use serde::{Deserialize, Serialize};

use super::posterior::{is_log_zero, PosteriorMatrix, LOG_ZERO};
use crate::error::{Error, Result};

/// Ground-truth token sequence of one utterance (one subtitle cue).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceText {
    pub tokens: Vec<u32>,
    pub text: String,
    pub utterance_index: usize,
}

impl UtteranceText {
    pub fn new(utterance_index: usize, text: impl Into<String>, tokens: Vec<u32>) -> Self {
        Self {
            tokens,
            text: text.into(),
            utterance_index,
        }
    }
}

/// Best-path table over the concatenated tokens of all utterances.
///
/// Row `t` holds the state after consuming `t` frames; column `j` means the first `j`
/// tokens have been emitted. Column 0 and the last-token column of every utterance are
/// boundary states where the path may wait for free, so audio between utterances (or
/// before the first one) costs nothing.
#[derive(Debug, Clone)]
pub struct Trellis {
    frames: usize,
    states: usize,
    q: Vec<f64>,
    advanced: Vec<bool>,
    boundary: Vec<bool>,
    tokens: Vec<u32>,
    blank: u32,
    /// Exclusive end (in token columns) of each utterance, in input order.
    utterance_ends: Vec<usize>,
}

impl Trellis {
    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Total number of tokens across all utterances.
    pub fn total_tokens(&self) -> usize {
        self.states - 1
    }

    /// Best log-probability of having emitted `j` tokens after `t` frames.
    pub fn q(&self, t: usize, j: usize) -> f64 {
        self.q[t * self.states + j]
    }

    /// Whether the best transition into `(t, j)` emitted token `j` at frame `t - 1`.
    pub fn advanced(&self, t: usize, j: usize) -> bool {
        self.advanced[t * self.states + j]
    }

    pub fn is_boundary(&self, j: usize) -> bool {
        self.boundary[j]
    }

    /// Cost of spending frame `frame` in state `j` without advancing.
    fn stay_cost(&self, p: &PosteriorMatrix, frame: usize, j: usize) -> f64 {
        if self.boundary[j] {
            0.0
        } else {
            let token = self.tokens[j - 1] as usize;
            p.get(frame, self.blank as usize).max(p.get(frame, token))
        }
    }

    fn emit_cost(&self, p: &PosteriorMatrix, frame: usize, j: usize) -> f64 {
        p.get(frame, self.tokens[j - 1] as usize)
    }
}

fn validate(p: &PosteriorMatrix, utts: &[UtteranceText], blank: u32) -> Result<()> {
    if blank as usize >= p.vocab() {
        return Err(Error::invalid(format!(
            "blank id {blank} outside vocabulary of {}",
            p.vocab()
        )));
    }
    for u in utts {
        if u.tokens.is_empty() {
            return Err(Error::invalid(format!(
                "utterance {} has no tokens",
                u.utterance_index
            )));
        }
        if let Some(bad) = u
            .tokens
            .iter()
            .find(|&&c| c == blank || c as usize >= p.vocab())
        {
            return Err(Error::invalid(format!(
                "utterance {} has token {bad}, which is blank or outside the vocabulary",
                u.utterance_index
            )));
        }
    }
    Ok(())
}

/// Forward pass. Errors when there are no tokens at all or a token is blank/out of range.
pub fn build_trellis(p: &PosteriorMatrix, utts: &[UtteranceText], blank: u32) -> Result<Trellis> {
    validate(p, utts, blank)?;
    let tokens: Vec<u32> = utts.iter().flat_map(|u| u.tokens.iter().copied()).collect();
    if tokens.is_empty() {
        return Err(Error::invalid("no tokens to align"));
    }
    let frames = p.frames();
    let states = tokens.len() + 1;

    let mut boundary = vec![false; states];
    boundary[0] = true;
    let mut utterance_ends = Vec::with_capacity(utts.len());
    let mut end = 0;
    for u in utts {
        end += u.tokens.len();
        boundary[end] = true;
        utterance_ends.push(end);
    }

    let mut tr = Trellis {
        frames,
        states,
        q: vec![LOG_ZERO; (frames + 1) * states],
        advanced: vec![false; (frames + 1) * states],
        boundary,
        tokens,
        blank,
        utterance_ends,
    };
    tr.q[0] = 0.0;

    for t in 1..=frames {
        let frame = t - 1;
        let (prev_rows, cur_rows) = tr.q.split_at_mut(t * states);
        let prev = &prev_rows[(t - 1) * states..];
        let cur = &mut cur_rows[..states];
        for j in 0..states {
            let stay = prev[j]
                + if tr.boundary[j] {
                    0.0
                } else {
                    let token = tr.tokens[j - 1] as usize;
                    p.get(frame, blank as usize).max(p.get(frame, token))
                };
            let advance = if j > 0 {
                prev[j - 1] + p.get(frame, tr.tokens[j - 1] as usize)
            } else {
                f64::NEG_INFINITY
            };
            // ties keep the path waiting; the token is then emitted as late as possible
            if advance > stay {
                cur[j] = advance;
                tr.advanced[t * states + j] = true;
            } else {
                cur[j] = stay;
            }
        }
    }
    Ok(tr)
}

/// Frame span of one utterance on the best path. Frames are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UtteranceSpan {
    pub utterance_index: usize,
    pub start_frame: usize,
    pub end_frame: usize,
}

/// Best path recovered from a trellis.
#[derive(Debug, Clone)]
pub struct BestPath {
    /// Number of frames consumed when the last token is reached (`t*`).
    pub end_anchor: usize,
    /// `q(t*, M)`.
    pub log_prob: f64,
    /// Frame at which each token (in concatenated order) is emitted.
    pub token_frames: Vec<usize>,
    /// Log-prob contributed by each frame `0..t*` along the path.
    pub frame_logprobs: Vec<f64>,
    pub spans: Vec<UtteranceSpan>,
}

impl BestPath {
    /// Per-frame log-probs over the inclusive frame span of utterance `k`.
    pub fn utterance_frame_logprobs(&self, k: usize) -> &[f64] {
        let span = &self.spans[k];
        &self.frame_logprobs[span.start_frame..=span.end_frame]
    }
}

/// Traces the best path back from the most probable end frame of the last token.
/// Ties between end frames resolve to the earliest one.
pub fn backtrack(tr: &Trellis, p: &PosteriorMatrix, utts: &[UtteranceText]) -> Result<BestPath> {
    if p.frames() != tr.frames || utts.iter().map(|u| u.tokens.len()).sum::<usize>() != tr.total_tokens() {
        return Err(Error::invalid(
            "trellis was not built from these posteriors and utterances",
        ));
    }
    let m = tr.total_tokens();
    let mut end_anchor = 0;
    let mut best = LOG_ZERO;
    for t in 1..=tr.frames {
        let v = tr.q(t, m);
        if v > best {
            best = v;
            end_anchor = t;
        }
    }
    if end_anchor == 0 || is_log_zero(best) {
        return Err(Error::Unalignable);
    }

    let mut token_frames = vec![0usize; m];
    let mut frame_logprobs = vec![0.0f64; end_anchor];
    let mut j = m;
    for t in (1..=end_anchor).rev() {
        let frame = t - 1;
        if tr.advanced(t, j) {
            frame_logprobs[frame] = tr.emit_cost(p, frame, j);
            token_frames[j - 1] = frame;
            j -= 1;
        } else {
            frame_logprobs[frame] = tr.stay_cost(p, frame, j);
        }
    }
    debug_assert_eq!(j, 0, "finite best path must start at the origin");

    let mut spans = Vec::with_capacity(utts.len());
    let mut start = 0;
    for (u, &end) in utts.iter().zip(&tr.utterance_ends) {
        spans.push(UtteranceSpan {
            utterance_index: u.utterance_index,
            start_frame: token_frames[start],
            end_frame: token_frames[end - 1],
        });
        start = end;
    }

    Ok(BestPath {
        end_anchor,
        log_prob: best,
        token_frames,
        frame_logprobs,
        spans,
    })
}
