//! A small synthetic corpus with a known answer for every pipeline stage.
//!
//! Five videos at 16 kHz. Spoken cues are a tone over faint hiss; posteriors are built from
//! the text actually "spoken" (token at 0.9 spread evenly over the cue, blank at 0.9 between
//! tokens and cues), so scores and classes can be predicted from the construction alone:
//!
//! | video | channel | cues | ASR defects                  | speaker kind          |
//! |-------|---------|------|------------------------------|-----------------------|
//! | v0    | chA     | 13   | one cue never spoken         | single                |
//! | v1    | chA     | 14   | three cues with wrong text   | single                |
//! | v2    | chB     | 12   | two mumbled cues (p = 0.5)   | synthetic (no jitter) |
//! | v3    | chC     | 12   | none                         | two alternating       |
//! | v4    | chD     | 12   | rolling machine captions     | single                |

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::Context;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use speechcorpus_core::asrfilter::utterance_id;
use speechcorpus_core::catalog::{Catalog, SearchTerm, TermSource, VideoRecord};
use speechcorpus_core::chunker::{write_wav, SAMPLE_RATE_HZ};
use speechcorpus_core::ctcseg::Vocabulary;
use speechcorpus_core::subtext::{Cue, SubtitleFormat, TrackSource};
use speechcorpus_core::{EmbeddingSet, PosteriorMatrix, SubtitleTrack};

use crate::config::{Paths, PipelineConfig, TrialSection};

pub const SAMPLES_PER_FRAME: usize = 640;
pub const EMBEDDING_DIM: usize = 64;
const LEAD_S: f64 = 0.4;
const CUE_S: f64 = 2.4;
const PERIOD_S: f64 = 3.2;
const TONE_AMPLITUDE: f64 = 6_000.0;
const HISS_AMPLITUDE: f64 = 20.0;
const JITTER: f64 = 0.03;

/// Subtitle words avoid j, q, x and z so that mismatched audio shares no letters with them.
const WORDS: &[&str] = &[
    "hello", "world", "speech", "corpus", "model", "data", "voice", "sound", "river", "mountain",
    "green", "light", "table", "window", "paper", "music", "story", "people", "morning",
    "garden", "simple", "little", "number", "friend", "winter", "yellow", "bright", "open",
    "city", "train",
];
const MISMATCH_WORDS: &[&str] = &["jqx", "zzq", "xjz", "qqz", "zjx"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueKind {
    Clean,
    Unspoken,
    Mismatched,
    Mumbled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeakerKind {
    Single,
    Synthetic,
    Multiple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureVideo {
    pub video_id: String,
    pub channel_id: String,
    pub cue_kinds: Vec<CueKind>,
    pub rolling_captions: bool,
    pub speaker: SpeakerKind,
}

/// What a correct pipeline must produce on the fixture with its bundled config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    pub auto_videos: Vec<String>,
    pub n_asr_records: usize,
    pub n_above_easy: usize,
    pub n_above_normal: usize,
    pub classes: BTreeMap<String, String>,
    pub n_speakers: usize,
    pub max_eer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSheet {
    pub seed: u64,
    pub videos: Vec<FixtureVideo>,
    pub expected: Expected,
}

fn layout() -> Vec<FixtureVideo> {
    let kinds = |n: usize, special: &[(usize, CueKind)]| {
        let mut k = vec![CueKind::Clean; n];
        for &(i, kind) in special {
            k[i] = kind;
        }
        k
    };
    let v = |id: &str, ch: &str, cue_kinds, rolling, speaker| FixtureVideo {
        video_id: id.into(),
        channel_id: ch.into(),
        cue_kinds,
        rolling_captions: rolling,
        speaker,
    };
    vec![
        v("v0", "chA", kinds(13, &[(5, CueKind::Unspoken)]), false, SpeakerKind::Single),
        v(
            "v1",
            "chA",
            kinds(14, &[(2, CueKind::Mismatched), (7, CueKind::Mismatched), (11, CueKind::Mismatched)]),
            false,
            SpeakerKind::Single,
        ),
        v(
            "v2",
            "chB",
            kinds(12, &[(3, CueKind::Mumbled), (8, CueKind::Mumbled)]),
            false,
            SpeakerKind::Synthetic,
        ),
        v("v3", "chC", kinds(12, &[]), false, SpeakerKind::Multiple),
        v("v4", "chD", kinds(12, &[]), true, SpeakerKind::Single),
    ]
}

fn expected(videos: &[FixtureVideo]) -> Expected {
    let asr: Vec<&FixtureVideo> = videos.iter().filter(|v| !v.rolling_captions).collect();
    let count = |pred: &dyn Fn(CueKind) -> bool| -> usize {
        asr.iter().map(|v| v.cue_kinds.iter().filter(|k| pred(**k)).count()).sum()
    };
    let classes = videos
        .iter()
        .map(|v| {
            let class = match v.speaker {
                SpeakerKind::Single => "single",
                SpeakerKind::Synthetic => "tts",
                SpeakerKind::Multiple => "multi",
            };
            (v.video_id.clone(), class.to_string())
        })
        .collect();
    let mut channels: Vec<&str> = videos
        .iter()
        .filter(|v| v.speaker == SpeakerKind::Single)
        .map(|v| v.channel_id.as_str())
        .collect();
    channels.dedup();
    Expected {
        auto_videos: videos.iter().filter(|v| v.rolling_captions).map(|v| v.video_id.clone()).collect(),
        n_asr_records: count(&|_| true),
        n_above_easy: count(&|k| k == CueKind::Clean),
        n_above_normal: count(&|k| matches!(k, CueKind::Clean | CueKind::Mumbled)),
        classes,
        n_speakers: channels.len(),
        max_eer: 0.05,
    }
}

pub fn vocabulary() -> Vocabulary {
    Vocabulary::from_chars("<blank>", std::iter::once(' ').chain('a'..='z')).expect("valid vocabulary")
}

fn cue_span(i: usize) -> (f64, f64) {
    let start = LEAD_S + i as f64 * PERIOD_S;
    (start, start + CUE_S)
}

fn frame_of(seconds: f64) -> usize {
    (seconds * f64::from(SAMPLE_RATE_HZ) / SAMPLES_PER_FRAME as f64).round() as usize
}

fn sentence(rng: &mut ChaCha8Rng, words: &[&str]) -> String {
    let n = rng.random_range(2..=3);
    (0..n).map(|_| *words.choose(rng).expect("non-empty")).collect::<Vec<_>>().join(" ")
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let z = Normal::new(0.0, 1.0).expect("valid normal");
    let v: Vec<f64> = (0..EMBEDDING_DIM).map(|_| z.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn prob_row(vocab: usize, peak: usize, p: f64) -> Vec<f64> {
    let rest = (1.0 - p) / (vocab - 1) as f64;
    (0..vocab).map(|k| if k == peak { p } else { rest }).collect()
}

/// Writes the fixture (media, subtitles, posteriors, embeddings, catalog, vocabulary,
/// `config.toml` and `sheet.json`) under `dir` and returns the construction sheet.
pub fn write_fixture(dir: &Path, seed: u64) -> anyhow::Result<FixtureSheet> {
    let videos = layout();
    let vocab = vocabulary();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for sub in ["audio", "subtitles", "posteriors", "embeddings", "catalog"] {
        fs::create_dir_all(dir.join(sub)).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(dir.join("vocab.txt"), vocab.to_file_string())?;

    let mut centres: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut catalog = Catalog::new();
    catalog.add_terms(
        ["speech corpus", "mountain river", "morning music"]
            .into_iter()
            .map(|t| SearchTerm::new(t, TermSource::Manual)),
    );
    let z = Normal::new(0.0, 1.0).expect("valid normal");

    for (vi, v) in videos.iter().enumerate() {
        let n = v.cue_kinds.len();
        let total_s = LEAD_S + n as f64 * PERIOD_S;
        let total = (total_s * f64::from(SAMPLE_RATE_HZ)).round() as usize;
        let frames = total / SAMPLES_PER_FRAME;

        // subtitle text and the text actually spoken
        let (shown, spoken): (Vec<String>, Vec<String>) = if v.rolling_captions {
            let stream: Vec<&str> = (0..n + 2).map(|_| *WORDS.choose(&mut rng).expect("non-empty")).collect();
            let shown: Vec<String> = (0..n).map(|i| stream[..i + 2].join(" ")).collect();
            (shown.clone(), shown)
        } else {
            (0..n)
                .map(|i| {
                    let s = sentence(&mut rng, WORDS);
                    match v.cue_kinds[i] {
                        CueKind::Mismatched => (s, sentence(&mut rng, MISMATCH_WORDS)),
                        _ => (s.clone(), s),
                    }
                })
                .unzip()
        };

        // audio
        let freq = 180.0 + 45.0 * vi as f64;
        let mut samples: Vec<i16> = (0..total)
            .map(|_| rng.random_range(-HISS_AMPLITUDE..=HISS_AMPLITUDE).round() as i16)
            .collect();
        for (i, kind) in v.cue_kinds.iter().enumerate() {
            if *kind == CueKind::Unspoken {
                continue;
            }
            let (s, e) = cue_span(i);
            let (a, b) = ((s * f64::from(SAMPLE_RATE_HZ)) as usize, (e * f64::from(SAMPLE_RATE_HZ)) as usize);
            for (k, x) in samples[a..b].iter_mut().enumerate() {
                let t = k as f64 / f64::from(SAMPLE_RATE_HZ);
                *x = (f64::from(*x) + TONE_AMPLITUDE * (std::f64::consts::TAU * freq * t).sin()) as i16;
            }
        }
        write_wav(dir.join("audio").join(format!("{}.wav", v.video_id)), &samples)?;

        // subtitles
        let cues: Vec<Cue> = shown
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let (s, e) = cue_span(i);
                Cue::new(t.clone(), s, e)
            })
            .collect();
        let (source, format) = if v.rolling_captions {
            (TrackSource::Auto, SubtitleFormat::Vtt)
        } else {
            (TrackSource::Manual, SubtitleFormat::Srt)
        };
        let track = SubtitleTrack::new(cues, source);
        fs::write(
            dir.join("subtitles").join(format!("{}.{}", v.video_id, format.extension())),
            track.serialize(format),
        )?;

        // posteriors, only for tracks that go through ASR
        if !v.rolling_captions {
            let mut rows = vec![prob_row(vocab.len(), 0, 0.9); frames];
            for (i, kind) in v.cue_kinds.iter().enumerate() {
                if *kind == CueKind::Unspoken {
                    continue;
                }
                let (s, e) = cue_span(i);
                let (fs_, fe) = (frame_of(s), frame_of(e));
                let span = fe - fs_;
                let p = if *kind == CueKind::Mumbled { 0.5 } else { 0.9 };
                if p != 0.9 {
                    for row in &mut rows[fs_..fe] {
                        *row = prob_row(vocab.len(), 0, p);
                    }
                }
                let (tokens, unknown) = vocab.tokenize(&spoken[i]);
                anyhow::ensure!(unknown.is_empty() && tokens.len() <= span, "fixture text does not fit");
                for (k, tok) in tokens.iter().enumerate() {
                    let f = fs_ + ((k as f64 + 0.5) * span as f64 / tokens.len() as f64) as usize;
                    rows[f] = prob_row(vocab.len(), *tok as usize, p);
                }
            }
            PosteriorMatrix::from_prob_rows(&rows, SAMPLES_PER_FRAME as u32, SAMPLE_RATE_HZ)?
                .save(dir.join("posteriors").join(format!("{}.ctcp", v.video_id)))?;
        }

        // embeddings
        let mut centre_for = |key: String, rng: &mut ChaCha8Rng| {
            centres.entry(key).or_insert_with(|| unit_vector(rng)).clone()
        };
        let own = centre_for(v.channel_id.clone(), &mut rng);
        let other = centre_for(format!("{}-second", v.channel_id), &mut rng);
        let sigma = if v.speaker == SpeakerKind::Synthetic { 0.0 } else { JITTER };
        let mut data = Vec::with_capacity(n * EMBEDDING_DIM);
        for i in 0..n {
            let c = if v.speaker == SpeakerKind::Multiple && i % 2 == 1 { &other } else { &own };
            data.extend(c.iter().map(|m| (m + sigma * z.sample(&mut rng)) as f32));
        }
        let ids = (0..n).map(|i| utterance_id(&v.video_id, i)).collect();
        EmbeddingSet::new(v.video_id.clone(), Some(v.channel_id.clone()), ids, EMBEDDING_DIM, data)?
            .save(dir.join("embeddings").join(format!("{}.dvec", v.video_id)))?;

        catalog.upsert_video(VideoRecord {
            video_id: v.video_id.clone(),
            channel_id: v.channel_id.clone(),
            duration_s: total_s,
            has_manual_subs: !v.rolling_captions,
            has_auto_subs: true,
            found_by: vec!["speech corpus".into()],
        })?;
    }
    catalog.save_dir(dir.join("catalog"))?;

    let mut cfg = PipelineConfig {
        parallelism: 2,
        paths: Paths {
            audio_dir: Some("audio".into()),
            subtitle_dir: Some("subtitles".into()),
            posterior_dir: Some("posteriors".into()),
            embedding_dir: Some("embeddings".into()),
            output_dir: Some("out".into()),
            catalog_dir: Some("catalog".into()),
            vocab: Some("vocab.txt".into()),
            charmap: None,
        },
        trials: TrialSection {
            n_target: 60,
            n_nontarget: 200,
        },
        ..Default::default()
    };
    cfg.apply_seed(seed);
    fs::write(dir.join("config.toml"), cfg.to_toml())?;

    let sheet = FixtureSheet {
        seed,
        expected: expected(&videos),
        videos,
    };
    fs::write(dir.join("sheet.json"), serde_json::to_string_pretty(&sheet)?)?;
    Ok(sheet)
}
