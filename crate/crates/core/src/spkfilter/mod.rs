//! Speaker-verification cleansing: keep mostly-voiced segments, score how much the speaker
//! embeddings of a video spread out, label videos as synthetic speech / single speaker /
//! multiple speakers, group single-speaker videos by channel, and evaluate trials.

mod dvec;
mod eer;
mod reduce;
mod trials;
mod vad;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

pub use dvec::{cosine_similarity, EmbeddingSet};
pub use eer::{compute_eer, EerResult, ScoredTrial};
pub use reduce::{
    pca_2d, reduce_2d, tsne_2d, variation_score, Reduced, Reducer, TsneConfig, DET_EPSILON,
};
pub use trials::{
    group_speakers, make_trials, read_trials, speaker_id, write_trials, Trial, TrialConfig,
    TrialLabel, TrialUtterance,
};
pub use vad::{frame_levels, retain_segments, vad_mask, VadConfig, VadMask};

use crate::error::{Error, Result};
use crate::jsonl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Klass {
    Tts,
    Single,
    Multi,
    Undersized,
}

impl std::fmt::Display for Klass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Klass::Tts => "tts",
            Klass::Single => "single",
            Klass::Multi => "multi",
            Klass::Undersized => "undersized",
        })
    }
}

/// Classification settings. Unset thresholds fall back to the reducer's defaults (see
/// [`ClassifyConfig::thresholds`]), since the two reducers produce scores on different scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    /// Videos need strictly more utterances than this to be classified.
    pub min_utts: usize,
    pub tau_low: Option<f64>,
    pub tau_high: Option<f64>,
    pub reducer: Reducer,
    pub tsne: TsneConfig,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            min_utts: 10,
            tau_low: None,
            tau_high: None,
            reducer: Reducer::Pca,
            tsne: TsneConfig::default(),
        }
    }
}

impl ClassifyConfig {
    /// `(tau_low, tau_high)`. Defaults: t-SNE 0 and 8.5; PCA −16 and −8, which bracket the
    /// ln-det of unit-norm embeddings with per-dimension jitter around 0.01–0.05.
    pub fn thresholds(&self) -> (f64, f64) {
        let (low, high) = match self.reducer {
            Reducer::Pca => (-16.0, -8.0),
            Reducer::Tsne => (0.0, 8.5),
        };
        (self.tau_low.unwrap_or(low), self.tau_high.unwrap_or(high))
    }

    pub fn validate(&self) -> Result<()> {
        let (low, high) = self.thresholds();
        if !(low < high) {
            return Err(Error::invalid(format!(
                "tau_low {low} must be below tau_high {high}"
            )));
        }
        Ok(())
    }
}

pub fn classify_score(score: f64, tau_low: f64, tau_high: f64) -> Klass {
    if score < tau_low {
        Klass::Tts
    } else if score <= tau_high {
        Klass::Single
    } else {
        Klass::Multi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationResult {
    pub video_id: String,
    /// Absent for undersized videos, which are never scored.
    pub score: Option<f64>,
    pub n_utts: usize,
    #[serde(rename = "class")]
    pub klass: Klass,
    pub reducer: Reducer,
}

/// Scores and labels one video's embeddings.
pub fn classify_video(set: &EmbeddingSet, cfg: &ClassifyConfig) -> Result<VariationResult> {
    cfg.validate()?;
    let n = set.len();
    let mut result = VariationResult {
        video_id: set.video_id.clone(),
        score: None,
        n_utts: n,
        klass: Klass::Undersized,
        reducer: cfg.reducer,
    };
    if n <= cfg.min_utts || n < 3 {
        return Ok(result);
    }
    let reduced = reduce_2d(&set.rows_f64(), cfg.reducer, &cfg.tsne)?;
    let score = if reduced.degenerate {
        crate::LOG_ZERO
    } else {
        variation_score(&reduced.points)?
    };
    let (low, high) = cfg.thresholds();
    result.score = Some(score);
    result.klass = classify_score(score, low, high);
    Ok(result)
}

pub fn write_classification_jsonl<W: Write>(w: W, results: &[VariationResult]) -> Result<()> {
    jsonl::write(w, results)
}

pub fn read_classification_jsonl<R: BufRead>(r: R) -> Result<Vec<VariationResult>> {
    jsonl::read(r)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use super::*;

    fn unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let z = Normal::new(0.0, 1.0).unwrap();
        let v: Vec<f64> = (0..dim).map(|_| z.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    fn video(id: &str, centres: &[Vec<f64>], n: usize, sigma: f64, rng: &mut ChaCha8Rng) -> EmbeddingSet {
        let z = Normal::new(0.0, 1.0).unwrap();
        let dim = centres[0].len();
        let data: Vec<f32> = (0..n)
            .flat_map(|i| {
                let c = &centres[i % centres.len()];
                c.iter().map(|m| (m + sigma * z.sample(rng)) as f32).collect::<Vec<_>>()
            })
            .collect();
        let ids = (0..n).map(|i| format!("{id}_{i:05}")).collect();
        EmbeddingSet::new(id, None, ids, dim, data).unwrap()
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(classify_score(crate::LOG_ZERO, 0.0, 8.5), Klass::Tts);
        assert_eq!(classify_score(4.0, 0.0, 8.5), Klass::Single);
        assert_eq!(classify_score(9.0, 0.0, 8.5), Klass::Multi);
        assert_eq!(classify_score(0.0, 0.0, 8.5), Klass::Single);
        assert_eq!(classify_score(8.5, 0.0, 8.5), Klass::Single);
        let tsne = ClassifyConfig { reducer: Reducer::Tsne, ..Default::default() };
        assert_eq!(tsne.thresholds(), (0.0, 8.5));
        let bad = ClassifyConfig { tau_low: Some(1.0), tau_high: Some(1.0), ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn classes_are_monotone_in_score() {
        let mut last = Klass::Tts;
        for k in -400..400 {
            let c = classify_score(k as f64 * 0.05, 0.0, 8.5);
            assert!(c >= last);
            last = c;
        }
    }

    #[test]
    fn min_utts_is_strict() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = unit(16, &mut rng);
        let cfg = ClassifyConfig::default();
        let ten = video("a", std::slice::from_ref(&c), 10, 0.03, &mut rng);
        assert_eq!(classify_video(&ten, &cfg).unwrap().klass, Klass::Undersized);
        assert_eq!(classify_video(&ten, &cfg).unwrap().score, None);
        let eleven = video("b", &[c], 11, 0.03, &mut rng);
        assert_ne!(classify_video(&eleven, &cfg).unwrap().klass, Klass::Undersized);
    }

    #[test]
    fn synthetic_kinds_with_default_config() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let cfg = ClassifyConfig::default();
        for i in 0..20 {
            let a = unit(64, &mut rng);
            let b = unit(64, &mut rng);
            let n = 12 + i;
            let tts = video("t", std::slice::from_ref(&a), n, 0.0, &mut rng);
            let single = video("s", std::slice::from_ref(&a), n, 0.03, &mut rng);
            let multi = video("m", &[a, b], n, 0.03, &mut rng);
            assert_eq!(classify_video(&tts, &cfg).unwrap().klass, Klass::Tts);
            let s = classify_video(&single, &cfg).unwrap();
            assert_eq!(s.klass, Klass::Single, "{s:?}");
            let m = classify_video(&multi, &cfg).unwrap();
            assert_eq!(m.klass, Klass::Multi, "{m:?}");
        }
    }

    #[test]
    fn classification_jsonl() {
        let r = VariationResult {
            video_id: "v".into(),
            score: Some(-1.5),
            n_utts: 12,
            klass: Klass::Single,
            reducer: Reducer::Pca,
        };
        let mut buf = Vec::new();
        write_classification_jsonl(&mut buf, std::slice::from_ref(&r)).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "{\"video_id\":\"v\",\"score\":-1.5,\"n_utts\":12,\"class\":\"single\",\"reducer\":\"pca\"}\n"
        );
        assert_eq!(read_classification_jsonl(&buf[..]).unwrap(), vec![r]);
    }
}
