//! End-to-end run: catalog → caption detection → posteriors → alignment → manifests and
//! splits → VAD → speaker classification → grouping → trials → EER.
//!
//! Per-video work runs on a pool of `parallelism` threads; results are gathered in video-id
//! order before anything is written, so outputs do not depend on scheduling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use speechcorpus_core::asrfilter::{
    design_splits, manifest_stats, score_histogram, stats_tsv, write_manifest_dir, ManifestStats, ScoreHistogram,
};
use speechcorpus_core::catalog::Catalog;
use speechcorpus_core::chunker::read_wav;
use speechcorpus_core::ctcseg::{write_alignment_jsonl, Vocabulary};
use speechcorpus_core::spkfilter::{
    group_speakers, make_trials, write_classification_jsonl, write_trials, EerResult, Klass, TrialConfig,
    TrialUtterance,
};
use speechcorpus_core::subtext::{detect_auto_track, AutoDetection, CharMap, SubtitleFormat};
use speechcorpus_core::{EmbeddingSet, PosteriorMatrix, SubtitleTrack, UtteranceRecord, VariationResult};

use crate::asr::{self, VideoAsr};
use crate::config::PipelineConfig;
use crate::events::EventLog;
use crate::spk;

pub const HIST_BIN_WIDTH: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub name: String,
    pub theta: Option<f64>,
    #[serde(flatten)]
    pub stats: ManifestStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n_videos: usize,
    pub auto_videos: Vec<String>,
    pub n_records: usize,
    pub stats: Vec<StatsRow>,
    pub classes: BTreeMap<String, Klass>,
    pub speakers: BTreeMap<String, String>,
    pub n_trials: usize,
    pub eer: Option<EerResult>,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
struct DetectionLine<'a> {
    video_id: &'a str,
    is_auto: bool,
    mean_rel_lev: Option<f64>,
}

/// Subtitle files by video id (file stem). SRT wins over WebVTT for the same id.
pub fn discover_subtitles(dir: &Path) -> anyhow::Result<BTreeMap<String, PathBuf>> {
    let mut out: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let Some(format) = SubtitleFormat::from_path(&path) else {
            continue;
        };
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let replace = match out.get(stem) {
            None => true,
            Some(prev) => format == SubtitleFormat::Srt && SubtitleFormat::from_path(prev) != Some(SubtitleFormat::Srt),
        };
        if replace {
            out.insert(stem.to_string(), path);
        }
    }
    Ok(out)
}

/// Files named `<video>.<ext>` in `dir`, by video id.
pub fn discover(dir: &Path, ext: &str) -> anyhow::Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

pub fn load_vocab(path: &Path) -> anyhow::Result<Vocabulary> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Vocabulary::read(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

pub fn load_charmap(path: Option<&Path>) -> anyhow::Result<CharMap> {
    match path {
        None => Ok(CharMap::default()),
        Some(p) => {
            let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            CharMap::read(BufReader::new(f)).with_context(|| format!("reading {}", p.display()))
        }
    }
}

pub fn histogram_tsv(h: &ScoreHistogram) -> String {
    let mut out = String::from("lower\tupper\tcount\n");
    for b in &h.bins {
        let _ = writeln!(out, "{:.3}\t{:.3}\t{}", b.lower, b.upper, b.count);
    }
    let _ = writeln!(out, "# unscorable\t{}", h.unscorable);
    out
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

enum PosteriorSource {
    Given,
    Resumed,
    Inferred,
}

struct AsrWork {
    video_id: String,
    track: Result<SubtitleTrack, String>,
    detection: Option<AutoDetection>,
    asr: Option<Result<(VideoAsr, PosteriorSource), String>>,
}

struct AsvWork {
    video_id: String,
    voiced: Option<Vec<String>>,
    result: Result<VariationResult, String>,
}

pub fn run(cfg: &PipelineConfig, events: &mut EventLog) -> anyhow::Result<PipelineReport> {
    cfg.validate_for_pipeline()?;
    let paths = &cfg.paths;
    let out = paths.output_dir.clone().expect("validated");
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let vocab = load_vocab(paths.vocab.as_deref().expect("validated"))?;
    let charmap = load_charmap(paths.charmap.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .context("building thread pool")?;

    // catalog
    let catalog = match &paths.catalog_dir {
        Some(dir) => {
            let cat = Catalog::load_dir(dir)?;
            let stats = cat.stats();
            write_file(&out.join("catalog_stats.json"), serde_json::to_vec_pretty(&stats)?)?;
            events.info("catalog", None, format!("{} terms, {} videos", stats.n_terms, stats.n_videos));
            Some(cat)
        }
        None => None,
    };

    // embeddings are loaded up front: their sidecars also name channels
    let mut sets: BTreeMap<String, EmbeddingSet> = BTreeMap::new();
    if let Some(dir) = &paths.embedding_dir {
        for (vid, path) in discover(dir, "dvec")? {
            match EmbeddingSet::load(&path) {
                Ok(set) => {
                    sets.insert(vid, set);
                }
                Err(e) => events.fail("embeddings", Some(&vid), e.to_string()),
            }
        }
    }
    let channels = spk::channel_map(catalog.as_ref(), sets.values());

    // detection and ASR, per video
    let subtitles = discover_subtitles(paths.subtitle_dir.as_deref().expect("validated"))?;
    let work: Vec<AsrWork> = pool.install(|| {
        subtitles
            .par_iter()
            .map(|(vid, path)| asr_video(cfg, &out, &vocab, &charmap, vid, path))
            .collect()
    });

    let mut detections = Vec::new();
    let mut tracks: BTreeMap<String, SubtitleTrack> = BTreeMap::new();
    let mut records: Vec<UtteranceRecord> = Vec::new();
    let mut auto_videos = Vec::new();
    for w in work {
        let vid = w.video_id.as_str();
        let track = match w.track {
            Ok(t) => t,
            Err(e) => {
                events.fail("subtitles", Some(vid), e);
                continue;
            }
        };
        let det = w.detection.expect("set for loaded tracks");
        detections.push((w.video_id.clone(), det));
        if det.is_auto {
            auto_videos.push(w.video_id.clone());
            events.info("detect_auto", Some(vid), "machine captions; excluded from ASR");
        }
        match w.asr {
            None => {}
            Some(Err(e)) => events.fail("asr", Some(vid), e),
            Some(Ok((result, source))) => {
                match source {
                    PosteriorSource::Inferred => events.info("infer", Some(vid), "posteriors inferred"),
                    PosteriorSource::Resumed => events.info("infer", Some(vid), "reused inferred posteriors"),
                    PosteriorSource::Given => {}
                }
                if !result.unknown.is_empty() {
                    events.warn("normalize", Some(vid), format!("{} cues with unknown characters", result.unknown.len()));
                    let mut buf = Vec::new();
                    speechcorpus_core::jsonl::write(&mut buf, &result.unknown)?;
                    write_file(&out.join("unknown_chars").join(format!("{vid}.jsonl")), buf)?;
                }
                for idx in &result.dropped {
                    events.warn("score", Some(vid), format!("cue {idx} starts after the audio ends; dropped"));
                }
                let mut buf = Vec::new();
                write_alignment_jsonl(&mut buf, &result.lines)?;
                write_file(&out.join("alignments").join(format!("{vid}.jsonl")), buf)?;
                let channel = channels.get(vid).map(String::as_str).unwrap_or("");
                records.extend(asr::records(vid, channel, &result.lines));
            }
        }
        tracks.insert(w.video_id, track);
    }
    let lines: Vec<DetectionLine> = detections
        .iter()
        .map(|(v, d)| DetectionLine {
            video_id: v,
            is_auto: d.is_auto,
            mean_rel_lev: d.mean_rel_lev,
        })
        .collect();
    speechcorpus_core::jsonl::save(out.join("auto_detect.jsonl"), &lines)?;

    // manifests, histogram, splits
    let asr_dir = out.join("asr");
    write_manifest_dir(asr_dir.join("all"), &records)?;
    write_file(&asr_dir.join("score_hist.tsv"), histogram_tsv(&score_histogram(&records, HIST_BIN_WIDTH)?))?;
    let mut stats = vec![StatsRow {
        name: "all".into(),
        theta: None,
        stats: manifest_stats(&records),
    }];
    if records.is_empty() {
        events.fail("split", None, "no utterance records");
    } else {
        match design_splits(&records, &cfg.split) {
            Ok(splits) => {
                for (name, theta, subset) in splits.named(&cfg.split) {
                    write_manifest_dir(asr_dir.join(name), subset)?;
                    stats.push(StatsRow {
                        name: name.into(),
                        theta: Some(theta),
                        stats: manifest_stats(subset),
                    });
                }
                let mut tv = splits.test_videos.join("\n");
                tv.push('\n');
                write_file(&asr_dir.join("test_videos.txt"), tv)?;
            }
            Err(e) => events.fail("split", None, e.to_string()),
        }
    }
    let tsv_rows: Vec<(&str, f64, ManifestStats)> = stats
        .iter()
        .map(|r| (r.name.as_str(), r.theta.unwrap_or(f64::NEG_INFINITY), r.stats))
        .collect();
    write_file(&asr_dir.join("stats.tsv"), stats_tsv(tsv_rows))?;

    // speaker side
    let mut report = PipelineReport {
        n_videos: subtitles.len(),
        auto_videos,
        n_records: records.len(),
        stats,
        classes: BTreeMap::new(),
        speakers: BTreeMap::new(),
        n_trials: 0,
        eer: None,
        failures: 0,
    };
    if sets.is_empty() {
        events.info("asv", None, "no embeddings; speaker stage skipped");
    } else {
        asv_stage(cfg, &out, &pool, &sets, &tracks, &channels, events, &mut report)?;
    }

    report.failures = events.failures();
    write_file(&out.join("summary.json"), serde_json::to_vec_pretty(&report)?)?;
    events.save(&out.join("events.jsonl"))?;
    Ok(report)
}

fn asr_video(
    cfg: &PipelineConfig,
    out: &Path,
    vocab: &Vocabulary,
    charmap: &CharMap,
    vid: &str,
    path: &Path,
) -> AsrWork {
    let mut w = AsrWork {
        video_id: vid.to_string(),
        track: SubtitleTrack::load(path).map_err(|e| e.to_string()),
        detection: None,
        asr: None,
    };
    let Ok(track) = &w.track else {
        return w;
    };
    let det = detect_auto_track(track, &cfg.auto_detect);
    w.detection = Some(det);
    if !det.is_auto {
        w.asr = Some(asr_posteriors(cfg, out, vocab, vid).and_then(|(p, source)| {
            if p.vocab() != vocab.len() {
                return Err(anyhow!("posteriors have {} tokens, vocabulary has {}", p.vocab(), vocab.len()));
            }
            let r = asr::process_track(&p, track, vocab, charmap, &cfg.score, cfg.asr.mode)?;
            Ok((r, source))
        })
        .map_err(|e| crate::error_chain(&e)));
    }
    w
}

fn asr_posteriors(cfg: &PipelineConfig, out: &Path, vocab: &Vocabulary, vid: &str) -> anyhow::Result<(PosteriorMatrix, PosteriorSource)> {
    if let Some(dir) = &cfg.paths.posterior_dir {
        let p = dir.join(format!("{vid}.ctcp"));
        if p.is_file() {
            return Ok((PosteriorMatrix::load(&p)?, PosteriorSource::Given));
        }
    }
    let cached = out.join("posteriors").join(format!("{vid}.ctcp"));
    if cached.is_file() {
        return Ok((PosteriorMatrix::load(&cached)?, PosteriorSource::Resumed));
    }
    let wav = cfg
        .paths
        .audio_dir
        .as_ref()
        .map(|d| d.join(format!("{vid}.wav")))
        .filter(|p| p.is_file())
        .ok_or_else(|| anyhow!("neither posteriors nor audio available"))?;
    let p = asr::infer_wav(&wav, vocab.len(), &cfg.model, &cfg.chunk)?;
    fs::create_dir_all(cached.parent().expect("has parent"))?;
    p.save(&cached)?;
    Ok((p, PosteriorSource::Inferred))
}

#[allow(clippy::too_many_arguments)]
fn asv_stage(
    cfg: &PipelineConfig,
    out: &Path,
    pool: &rayon::ThreadPool,
    sets: &BTreeMap<String, EmbeddingSet>,
    tracks: &BTreeMap<String, SubtitleTrack>,
    channels: &BTreeMap<String, String>,
    events: &mut EventLog,
    report: &mut PipelineReport,
) -> anyhow::Result<()> {
    let work: Vec<AsvWork> = pool.install(|| {
        sets.par_iter()
            .map(|(vid, set)| {
                let voiced = match (tracks.get(vid), &cfg.paths.audio_dir) {
                    (Some(track), Some(dir)) => {
                        let wav = dir.join(format!("{vid}.wav"));
                        match read_wav(&wav).and_then(|s| spk::voiced_utterances(vid, &s, track, &cfg.vad)) {
                            Ok(ids) => Some(Ok(ids)),
                            Err(e) => Some(Err(e.to_string())),
                        }
                    }
                    _ => None,
                };
                match voiced {
                    Some(Err(e)) => AsvWork {
                        video_id: vid.clone(),
                        voiced: None,
                        result: Err(format!("VAD: {e}")),
                    },
                    voiced => {
                        let voiced = voiced.map(|v| v.expect("errors handled above"));
                        let result = spk::classify(set, voiced.as_deref(), &cfg.classify).map_err(|e| e.to_string());
                        AsvWork {
                            video_id: vid.clone(),
                            voiced,
                            result,
                        }
                    }
                }
            })
            .collect()
    });

    let mut results = Vec::new();
    let mut voiced: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for w in work {
        match w.result {
            Ok(r) => {
                if w.voiced.is_none() {
                    events.warn("vad", Some(&w.video_id), "no audio or subtitles; all embeddings used");
                }
                let ids = w.voiced.unwrap_or_else(|| sets[&w.video_id].utt_ids.clone());
                voiced.insert(w.video_id.clone(), ids);
                report.classes.insert(w.video_id, r.klass);
                results.push(r);
            }
            Err(e) => events.fail("classify", Some(&w.video_id), e),
        }
    }
    let asv_dir = out.join("asv");
    let mut buf = Vec::new();
    write_classification_jsonl(&mut buf, &results)?;
    write_file(&asv_dir.join("classification.jsonl"), buf)?;

    let speakers = group_speakers(&results, channels);
    let mut tsv = String::new();
    for (v, s) in &speakers {
        let _ = writeln!(tsv, "{v}\t{s}");
    }
    write_file(&asv_dir.join("speakers.tsv"), tsv)?;
    let distinct: BTreeSet<&String> = speakers.values().collect();
    events.info("group", None, format!("{} videos, {} speakers", speakers.len(), distinct.len()));
    report.speakers = speakers.clone();

    let utterances: Vec<TrialUtterance> = speakers
        .keys()
        .flat_map(|v| {
            voiced[v].iter().map(move |u| TrialUtterance {
                utt_id: u.clone(),
                video_id: v.clone(),
            })
        })
        .collect();
    let trial_cfg = TrialConfig {
        n_target: cfg.trials.n_target,
        n_nontarget: cfg.trials.n_nontarget,
        seed: cfg.seed,
    };
    let trials = match make_trials(&speakers, &utterances, &trial_cfg) {
        Ok(t) => t,
        Err(e) => {
            events.fail("trials", None, e.to_string());
            return Ok(());
        }
    };
    let mut buf = Vec::new();
    write_trials(&mut buf, &trials)?;
    write_file(&asv_dir.join("trials.txt"), buf)?;
    report.n_trials = trials.len();

    let grouped: Vec<EmbeddingSet> = speakers.keys().map(|v| sets[v].clone()).collect();
    match spk::score_trials(&trials, &grouped) {
        Ok((scores, eer)) => {
            let mut tsv = String::new();
            for s in &scores {
                let _ = writeln!(
                    tsv,
                    "{}\t{}\t{}\t{:.6}",
                    s.trial.enroll_utt_id, s.trial.test_utt_id, s.trial.label, s.similarity
                );
            }
            write_file(&asv_dir.join("scores.tsv"), tsv)?;
            write_file(&asv_dir.join("eer.json"), serde_json::to_vec_pretty(&eer)?)?;
            events.info("eer", None, format!("EER {:.4} at threshold {:.4}", eer.eer, eer.threshold));
            report.eer = Some(eer);
        }
        Err(e) => events.fail("eer", None, crate::error_chain(&e)),
    }
    Ok(())
}
