//! Per-video speaker stage helpers and trial scoring.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use anyhow::{anyhow, Context};
use speechcorpus_core::asrfilter::utterance_id;
use speechcorpus_core::spkfilter::{
    classify_video, compute_eer, cosine_similarity, retain_segments, vad_mask, EerResult, ScoredTrial, Trial,
    TrialLabel,
};
use speechcorpus_core::{ClassifyConfig, EmbeddingSet, Result, SubtitleTrack, VadConfig, VariationResult};

/// Utterance ids of the cues that are mostly voiced.
pub fn voiced_utterances(video_id: &str, samples: &[i16], track: &SubtitleTrack, vad: &VadConfig) -> Result<Vec<String>> {
    let mask = vad_mask(samples, vad)?;
    Ok(retain_segments(&track.cues, &mask, vad)
        .into_iter()
        .map(|i| utterance_id(video_id, i))
        .collect())
}

/// Classifies a video, optionally restricted to the given utterances.
pub fn classify(set: &EmbeddingSet, keep: Option<&[String]>, cfg: &ClassifyConfig) -> Result<VariationResult> {
    match keep {
        Some(ids) => {
            let ids: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
            classify_video(&set.retain(|id| ids.contains(id)), cfg)
        }
        None => classify_video(set, cfg),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialScore {
    pub trial: Trial,
    pub similarity: f64,
}

/// Cosine-scores every trial against the embeddings, then computes the EER.
pub fn score_trials(trials: &[Trial], sets: &[EmbeddingSet]) -> anyhow::Result<(Vec<TrialScore>, EerResult)> {
    let mut index: HashMap<&str, (usize, usize)> = HashMap::new();
    for (s, set) in sets.iter().enumerate() {
        for (i, id) in set.utt_ids.iter().enumerate() {
            index.insert(id.as_str(), (s, i));
        }
    }
    let row = |id: &str| -> anyhow::Result<&[f32]> {
        let &(s, i) = index.get(id).ok_or_else(|| anyhow!("no embedding for utterance {id}"))?;
        Ok(sets[s].row(i))
    };
    let mut scored = Vec::with_capacity(trials.len());
    for t in trials {
        let similarity = cosine_similarity(row(&t.enroll_utt_id)?, row(&t.test_utt_id)?);
        scored.push(TrialScore {
            trial: t.clone(),
            similarity,
        });
    }
    let eer = compute_eer(
        &scored
            .iter()
            .map(|s| ScoredTrial {
                similarity: s.similarity,
                target: s.trial.label == TrialLabel::Target,
            })
            .collect::<Vec<_>>(),
    )
    .context("computing EER")?;
    Ok((scored, eer))
}

/// Video → channel, preferring the catalog and falling back to embedding sidecars.
pub fn channel_map<'a>(
    catalog: Option<&speechcorpus_core::catalog::Catalog>,
    sets: impl IntoIterator<Item = &'a EmbeddingSet>,
) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for set in sets {
        if let Some(c) = &set.channel_id {
            out.insert(set.video_id.clone(), c.clone());
        }
    }
    if let Some(cat) = catalog {
        for v in cat.videos() {
            if !v.channel_id.is_empty() {
                out.insert(v.video_id.clone(), v.channel_id.clone());
            }
        }
    }
    out
}
