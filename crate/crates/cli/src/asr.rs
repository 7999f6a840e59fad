//! Per-video ASR stage: subtitle cues to token sequences, posteriors, and scored alignments.

use std::path::Path;

use speechcorpus_core::asrfilter::utterance_id;
use speechcorpus_core::chunker::{infer_long, read_wav, toy_model};
use speechcorpus_core::ctcseg::{align, score_segment, AlignmentLine, Vocabulary};
use speechcorpus_core::subtext::{normalize_text, CharMap, EnglishVerbalizer, UnknownCharReport};
use speechcorpus_core::{ChunkConfig, PosteriorMatrix, Result, ScoreConfig, SubtitleTrack, UtteranceRecord, UtteranceText};

use crate::config::{AsrMode, ModelConfig};

/// Normalised token sequences for every cue that has at least one known token. The
/// utterance index is the cue's position in the track.
pub fn utterances(
    track: &SubtitleTrack,
    vocab: &Vocabulary,
    charmap: &CharMap,
) -> (Vec<UtteranceText>, Vec<UnknownCharReport>) {
    let mut utts = Vec::new();
    let mut unknown = Vec::new();
    for (i, cue) in track.cues.iter().enumerate() {
        let norm = normalize_text(&cue.text, &EnglishVerbalizer, charmap, Some(vocab));
        if !norm.unknown.is_empty() {
            unknown.push(UnknownCharReport::new(i, &norm.unknown));
        }
        let (tokens, _) = vocab.tokenize(&norm.text);
        if !tokens.is_empty() {
            utts.push(UtteranceText::new(i, norm.text, tokens));
        }
    }
    (utts, unknown)
}

#[derive(Debug, Clone, Default)]
pub struct VideoAsr {
    pub lines: Vec<AlignmentLine>,
    pub unknown: Vec<UnknownCharReport>,
    /// Cues that could not be scored because they start past the end of the audio.
    pub dropped: Vec<usize>,
}

pub fn process_track(
    p: &PosteriorMatrix,
    track: &SubtitleTrack,
    vocab: &Vocabulary,
    charmap: &CharMap,
    score: &ScoreConfig,
    mode: AsrMode,
) -> Result<VideoAsr> {
    let (utts, unknown) = utterances(track, vocab, charmap);
    let mut out = VideoAsr {
        unknown,
        ..Default::default()
    };
    match mode {
        AsrMode::Align => {
            out.lines = align(p, &utts, score)?.iter().map(AlignmentLine::from).collect();
        }
        AsrMode::Score => {
            let duration = p.duration_s();
            for u in &utts {
                let cue = &track.cues[u.utterance_index];
                let end_s = cue.end_s.min(duration);
                if cue.start_s >= end_s {
                    out.dropped.push(u.utterance_index);
                    continue;
                }
                out.lines.push(AlignmentLine {
                    utt_index: u.utterance_index,
                    start_s: cue.start_s,
                    end_s,
                    score: score_segment(p, u, cue.start_s, end_s, score)?,
                    text: u.text.clone(),
                });
            }
        }
    }
    Ok(out)
}

pub fn records(video_id: &str, channel_id: &str, lines: &[AlignmentLine]) -> Vec<UtteranceRecord> {
    lines
        .iter()
        .map(|l| UtteranceRecord {
            utt_id: utterance_id(video_id, l.utt_index),
            video_id: video_id.to_string(),
            channel_id: channel_id.to_string(),
            start_s: l.start_s,
            end_s: l.end_s,
            text: l.text.clone(),
            score: l.score,
        })
        .collect()
}

/// Runs the bundled stand-in model over a WAV file, block by block.
pub fn infer_wav(path: &Path, vocab_len: usize, model: &ModelConfig, chunk: &ChunkConfig) -> Result<PosteriorMatrix> {
    let samples = read_wav(path)?;
    let m = toy_model(vocab_len, model.window_samples, model.samples_per_frame);
    infer_long(&samples, &m, chunk).map_err(|e| e.with_path(path))
}
