//! Subcommands. Flags override the matching `[paths]` entries of `--config`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use speechcorpus_core::asrfilter::{
    design_splits_with_exclusions, manifest_stats, read_manifest, score_histogram, stats_tsv, write_manifest_dir,
};
use speechcorpus_core::catalog::Catalog;
use speechcorpus_core::ctcseg::{filter_by_score, read_alignment_jsonl, write_alignment_jsonl, AlignmentLine};
use speechcorpus_core::spkfilter::{
    group_speakers, make_trials, read_classification_jsonl, read_trials, write_classification_jsonl, write_trials,
    Reducer, TrialConfig, TrialUtterance,
};
use speechcorpus_core::subtext::{detect_auto_track, Pairing};
use speechcorpus_core::{EmbeddingSet, PosteriorMatrix, SubtitleTrack, UtteranceRecord};

use crate::config::{AsrMode, ConfigError, PipelineConfig};
use crate::events::EventLog;
use crate::pipeline::{self, discover, discover_subtitles, histogram_tsv, load_charmap, load_vocab};
use crate::{asr, fixture, spk};

#[derive(Debug, Parser)]
#[command(name = "speechcorpus", version, about = "Build ASR and speaker-verification corpora from subtitled audio")]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured worker count.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print catalog statistics as JSON.
    CatalogStats {
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Flag subtitle tracks that look like rolling machine captions (JSONL to stdout).
    DetectAuto {
        /// Subtitle files or directories.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        all_pairs: bool,
    },
    /// Run the bundled stand-in model over WAV files, block by block.
    Infer {
        /// A WAV file or a directory of them.
        #[arg(long)]
        audio: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Skip files whose output already exists.
        #[arg(long)]
        resume: bool,
    },
    /// Re-align every cue with CTC segmentation and score it.
    Align(AsrArgs),
    /// Score cues at their subtitle timings without re-aligning.
    Score(AsrArgs),
    /// Keep alignment lines scoring strictly above a threshold.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        theta: Option<f64>,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Design the test/train split and write manifest directories.
    Split {
        /// Directory of per-video alignment JSONL files.
        #[arg(long, conflicts_with = "manifest")]
        alignments: Option<PathBuf>,
        /// An existing manifest (directory or JSONL file).
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Utterance ids to drop from dev and eval, one per line.
        #[arg(long)]
        exclude: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a TSV of video, utterance and hour counts per manifest.
    Stats {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
    },
    /// Print a score histogram of a manifest as TSV.
    Hist {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = pipeline::HIST_BIN_WIDTH)]
        bin_width: f64,
    },
    /// Score intra-video speaker variation and label each video.
    SpkClassify {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// With --subtitles, restricts each video to mostly-voiced cues.
        #[arg(long, requires = "subtitles")]
        audio: Option<PathBuf>,
        #[arg(long)]
        subtitles: Option<PathBuf>,
        #[arg(long, value_parser = parse_reducer)]
        reducer: Option<Reducer>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Map single-speaker videos to channel speaker ids (TSV).
    SpkGroup {
        #[arg(long)]
        classification: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw target and nontarget verification trials.
    Trials {
        #[arg(long)]
        speakers: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        n_target: Option<usize>,
        #[arg(long)]
        n_nontarget: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cosine-score trials and print the equal error rate as JSON.
    Eer {
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Per-trial scores (TSV).
        #[arg(long)]
        scores_out: Option<PathBuf>,
    },
    /// Write the synthetic test corpus, its config and its construction sheet.
    SynthFixture {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage as configured.
    Pipeline,
}

#[derive(Debug, Args)]
pub struct AsrArgs {
    #[arg(long)]
    pub posteriors: Option<PathBuf>,
    #[arg(long)]
    pub subtitles: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub charmap: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_reducer(s: &str) -> Result<Reducer, String> {
    match s {
        "pca" => Ok(Reducer::Pca),
        "tsne" => Ok(Reducer::Tsne),
        other => Err(format!("unknown reducer {other:?} (pca or tsne)")),
    }
}

/// How a successful command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    /// Finished, but this many items failed and were skipped.
    Partial(usize),
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Complete => 0,
            Outcome::Partial(_) => 2,
        }
    }

    fn from_failures(n: usize) -> Self {
        if n == 0 {
            Outcome::Complete
        } else {
            Outcome::Partial(n)
        }
    }
}

fn required(flag: Option<&PathBuf>, configured: Option<&PathBuf>, name: &str, key: &str) -> anyhow::Result<PathBuf> {
    flag.or(configured)
        .cloned()
        .ok_or_else(|| ConfigError::one(format!("{key}: required (or pass --{name})")).into())
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.apply_seed(seed);
    }
    if let Some(n) = cli.parallelism {
        cfg.parallelism = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_writer(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn load_sets(dir: &Path, events: &mut EventLog) -> anyhow::Result<BTreeMap<String, EmbeddingSet>> {
    let mut sets = BTreeMap::new();
    for (vid, path) in discover(dir, "dvec")? {
        match EmbeddingSet::load(&path) {
            Ok(s) => {
                sets.insert(vid, s);
            }
            Err(e) => events.fail("embeddings", Some(&vid), e.to_string()),
        }
    }
    Ok(sets)
}

fn read_speakers(path: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let Some((v, s)) = line.split_once('\t') else {
            bail!("{}:{}: expected video<TAB>speaker", path.display(), i + 1);
        };
        out.insert(v.to_string(), s.to_string());
    }
    Ok(out)
}

pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let cfg = load_config(&cli)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.parallelism).build()?;
    let mut events = EventLog::new();
    let paths = &cfg.paths;

    match cli.command {
        Command::CatalogStats { catalog } => {
            let dir = required(catalog.as_ref(), paths.catalog_dir.as_ref(), "catalog", "paths.catalog_dir")?;
            let stats = Catalog::load_dir(&dir)?.stats();
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }

        Command::DetectAuto { inputs, threshold, all_pairs } => {
            let mut dc = cfg.auto_detect;
            if let Some(t) = threshold {
                dc.threshold = t;
            }
            if all_pairs {
                dc.pairing = Pairing::AllPairs;
            }
            let mut files = BTreeMap::new();
            for input in &inputs {
                if input.is_dir() {
                    files.extend(discover_subtitles(input)?);
                } else {
                    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                    files.insert(stem, input.clone());
                }
            }
            let mut stdout = std::io::stdout().lock();
            for (vid, path) in files {
                match SubtitleTrack::load(&path) {
                    Ok(track) => {
                        let d = detect_auto_track(&track, &dc);
                        let line = serde_json::json!({"video_id": vid, "is_auto": d.is_auto, "mean_rel_lev": d.mean_rel_lev});
                        writeln!(stdout, "{line}")?;
                    }
                    Err(e) => events.fail("detect_auto", Some(&vid), e.to_string()),
                }
            }
        }

        Command::Infer { audio, vocab, out, resume } => {
            let audio = required(audio.as_ref(), paths.audio_dir.as_ref(), "audio", "paths.audio_dir")?;
            let vocab = load_vocab(&required(vocab.as_ref(), paths.vocab.as_ref(), "vocab", "paths.vocab")?)?;
            let files = if audio.is_dir() {
                discover(&audio, "wav")?
            } else {
                let stem = audio.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                BTreeMap::from([(stem, audio.clone())])
            };
            fs::create_dir_all(&out)?;
            let results: Vec<(String, Result<bool, String>)> = pool.install(|| {
                files
                    .par_iter()
                    .map(|(vid, wav)| {
                        let target = out.join(format!("{vid}.ctcp"));
                        if resume && target.is_file() && PosteriorMatrix::load(&target).is_ok() {
                            return (vid.clone(), Ok(false));
                        }
                        let r = asr::infer_wav(wav, vocab.len(), &cfg.model, &cfg.chunk)
                            .and_then(|p| p.save(&target))
                            .map(|_| true)
                            .map_err(|e| e.to_string());
                        (vid.clone(), r)
                    })
                    .collect()
            });
            for (vid, r) in results {
                match r {
                    Ok(true) => events.info("infer", Some(&vid), "written"),
                    Ok(false) => events.info("infer", Some(&vid), "already present; skipped"),
                    Err(e) => events.fail("infer", Some(&vid), e),
                }
            }
        }

        Command::Align(args) => asr_command(&cfg, &pool, args, AsrMode::Align, &mut events)?,
        Command::Score(args) => asr_command(&cfg, &pool, args, AsrMode::Score, &mut events)?,

        Command::Filter { input, theta, out } => {
            let Some(theta) = theta.or(cfg.score.theta) else {
                return Err(ConfigError::one("score.theta: required (or pass --theta)").into());
            };
            let f = fs::File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let lines = read_alignment_jsonl(BufReader::new(f))?;
            let kept: Vec<AlignmentLine> = filter_by_score(&lines, theta);
            write_alignment_jsonl(out_writer(out.as_deref())?, &kept)?;
            log::info!("kept {} of {} lines above {theta}", kept.len(), lines.len());
        }

        Command::Split { alignments, manifest, catalog, exclude, out } => {
            let records = match (alignments, manifest) {
                (Some(dir), None) => {
                    let catalog = catalog.as_ref().or(paths.catalog_dir.as_ref()).map(Catalog::load_dir).transpose()?;
                    let channels = spk::channel_map(catalog.as_ref(), []);
                    let mut records = Vec::new();
                    for (vid, path) in discover(&dir, "jsonl")? {
                        let lines = read_alignment_jsonl(BufReader::new(fs::File::open(&path)?))
                            .with_context(|| format!("reading {}", path.display()))?;
                        let channel = channels.get(&vid).map(String::as_str).unwrap_or("");
                        records.extend(asr::records(&vid, channel, &lines));
                    }
                    records
                }
                (None, Some(m)) => read_manifest(&m)?,
                _ => bail!("pass one of --alignments or --manifest"),
            };
            let excluded: BTreeSet<String> = match exclude {
                Some(p) => fs::read_to_string(&p)
                    .with_context(|| format!("reading {}", p.display()))?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect(),
                None => BTreeSet::new(),
            };
            let splits = design_splits_with_exclusions(&records, &cfg.split, &excluded)?;
            write_manifest_dir(out.join("all"), &records)?;
            let mut rows = vec![("all", f64::NEG_INFINITY, manifest_stats(&records))];
            for (name, theta, subset) in splits.named(&cfg.split) {
                write_manifest_dir(out.join(name), subset)?;
                rows.push((name, theta, manifest_stats(subset)));
            }
            fs::write(out.join("test_videos.txt"), splits.test_videos.join("\n") + "\n")?;
            let tsv = stats_tsv(rows);
            fs::write(out.join("stats.tsv"), &tsv)?;
            print!("{tsv}");
        }

        Command::Stats { manifests } => {
            let mut loaded = Vec::new();
            for m in &manifests {
                let name = m
                    .file_name()
                    .map(|s| s.to_string_lossy().trim_end_matches(".jsonl").to_string())
                    .unwrap_or_default();
                loaded.push((name, manifest_stats(&read_manifest(m)?)));
            }
            print!(
                "{}",
                stats_tsv(loaded.iter().map(|(n, s)| (n.as_str(), f64::NEG_INFINITY, *s)))
            );
        }

        Command::Hist { manifest, bin_width } => {
            let records: Vec<UtteranceRecord> = read_manifest(&manifest)?;
            print!("{}", histogram_tsv(&score_histogram(&records, bin_width)?));
        }

        Command::SpkClassify { embeddings, audio, subtitles, reducer, out } => {
            let dir = required(embeddings.as_ref(), paths.embedding_dir.as_ref(), "embeddings", "paths.embedding_dir")?;
            let mut classify_cfg = cfg.classify.clone();
            if let Some(r) = reducer {
                classify_cfg.reducer = r;
            }
            classify_cfg.validate()?;
            let sets = load_sets(&dir, &mut events)?;
            let subs = subtitles.as_deref().map(discover_subtitles).transpose()?;
            let results: Vec<(String, Result<_, String>)> = pool.install(|| {
                sets.par_iter()
                    .map(|(vid, set)| {
                        let r = (|| -> anyhow::Result<_> {
                            let keep = match (&audio, &subs) {
                                (Some(a), Some(s)) => {
                                    let track = SubtitleTrack::load(
                                        s.get(vid).with_context(|| format!("no subtitles for {vid}"))?,
                                    )?;
                                    let samples = speechcorpus_core::chunker::read_wav(a.join(format!("{vid}.wav")))?;
                                    Some(spk::voiced_utterances(vid, &samples, &track, &cfg.vad)?)
                                }
                                _ => None,
                            };
                            Ok(spk::classify(set, keep.as_deref(), &classify_cfg)?)
                        })();
                        (vid.clone(), r.map_err(|e| crate::error_chain(&e)))
                    })
                    .collect()
            });
            let mut ok = Vec::new();
            for (vid, r) in results {
                match r {
                    Ok(r) => ok.push(r),
                    Err(e) => events.fail("classify", Some(&vid), e),
                }
            }
            write_classification_jsonl(out_writer(Some(&out))?, &ok)?;
        }

        Command::SpkGroup { classification, catalog, embeddings, out } => {
            let results = read_classification_jsonl(BufReader::new(
                fs::File::open(&classification).with_context(|| format!("opening {}", classification.display()))?,
            ))?;
            let catalog = catalog.as_ref().or(paths.catalog_dir.as_ref()).map(Catalog::load_dir).transpose()?;
            let sets = match embeddings.as_ref().or(paths.embedding_dir.as_ref()) {
                Some(d) => load_sets(d, &mut events)?,
                None => BTreeMap::new(),
            };
            let channels = spk::channel_map(catalog.as_ref(), sets.values());
            let speakers = group_speakers(&results, &channels);
            let mut tsv = String::new();
            for (v, s) in &speakers {
                let _ = writeln!(tsv, "{v}\t{s}");
            }
            fs::write(&out, tsv).with_context(|| format!("writing {}", out.display()))?;
        }

        Command::Trials { speakers, embeddings, n_target, n_nontarget, out } => {
            let speakers = read_speakers(&speakers)?;
            let dir = required(embeddings.as_ref(), paths.embedding_dir.as_ref(), "embeddings", "paths.embedding_dir")?;
            let sets = load_sets(&dir, &mut events)?;
            let utterances: Vec<TrialUtterance> = speakers
                .keys()
                .filter_map(|v| sets.get(v))
                .flat_map(|s| {
                    s.utt_ids.iter().map(|u| TrialUtterance {
                        utt_id: u.clone(),
                        video_id: s.video_id.clone(),
                    })
                })
                .collect();
            let trials = make_trials(
                &speakers,
                &utterances,
                &TrialConfig {
                    n_target: n_target.unwrap_or(cfg.trials.n_target),
                    n_nontarget: n_nontarget.unwrap_or(cfg.trials.n_nontarget),
                    seed: cfg.seed,
                },
            )?;
            write_trials(out_writer(Some(&out))?, &trials)?;
        }

        Command::Eer { trials, embeddings, scores_out } => {
            let trials = read_trials(BufReader::new(
                fs::File::open(&trials).with_context(|| format!("opening {}", trials.display()))?,
            ))?;
            let dir = required(embeddings.as_ref(), paths.embedding_dir.as_ref(), "embeddings", "paths.embedding_dir")?;
            let sets: Vec<EmbeddingSet> = load_sets(&dir, &mut events)?.into_values().collect();
            let (scores, eer) = spk::score_trials(&trials, &sets)?;
            if let Some(p) = scores_out {
                let mut w = out_writer(Some(&p))?;
                for s in &scores {
                    writeln!(w, "{}\t{}\t{}\t{:.6}", s.trial.enroll_utt_id, s.trial.test_utt_id, s.trial.label, s.similarity)?;
                }
            }
            println!("{}", serde_json::to_string_pretty(&eer)?);
        }

        Command::SynthFixture { out } => {
            fixture::write_fixture(&out, cfg.seed)?;
            println!("{}", out.join("config.toml").display());
        }

        Command::Pipeline => {
            let report = pipeline::run(&cfg, &mut events)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(Outcome::from_failures(events.failures()))
}

fn asr_command(
    cfg: &PipelineConfig,
    pool: &rayon::ThreadPool,
    args: AsrArgs,
    mode: AsrMode,
    events: &mut EventLog,
) -> anyhow::Result<()> {
    let paths = &cfg.paths;
    let post_dir = required(args.posteriors.as_ref(), paths.posterior_dir.as_ref(), "posteriors", "paths.posterior_dir")?;
    let sub_dir = required(args.subtitles.as_ref(), paths.subtitle_dir.as_ref(), "subtitles", "paths.subtitle_dir")?;
    let vocab = load_vocab(&required(args.vocab.as_ref(), paths.vocab.as_ref(), "vocab", "paths.vocab")?)?;
    let charmap = load_charmap(args.charmap.as_ref().or(paths.charmap.as_ref()).map(PathBuf::as_path))?;
    let subs = discover_subtitles(&sub_dir)?;
    let posteriors = discover(&post_dir, "ctcp")?;
    for vid in subs.keys().filter(|v| !posteriors.contains_key(*v)) {
        events.info("align", Some(vid), "no posteriors; skipped");
    }
    fs::create_dir_all(&args.out)?;
    let results: Vec<(String, anyhow::Result<asr::VideoAsr>)> = pool.install(|| {
        posteriors
            .par_iter()
            .map(|(vid, post)| {
                let r = (|| {
                    let sub = subs.get(vid).with_context(|| format!("no subtitles for {vid}"))?;
                    let p = PosteriorMatrix::load(post)?;
                    let track = SubtitleTrack::load(sub)?;
                    Ok(asr::process_track(&p, &track, &vocab, &charmap, &cfg.score, mode)?)
                })();
                (vid.clone(), r)
            })
            .collect()
    });
    for (vid, r) in results {
        match r {
            Ok(v) => {
                let mut buf = Vec::new();
                write_alignment_jsonl(&mut buf, &v.lines)?;
                fs::write(args.out.join(format!("{vid}.jsonl")), buf)?;
                for u in &v.unknown {
                    events.warn("normalize", Some(&vid), format!("cue {}: unknown {:?}", u.cue_index, u.chars));
                }
            }
            Err(e) => events.fail(if mode == AsrMode::Align { "align" } else { "score" }, Some(&vid), crate::error_chain(&e)),
        }
    }
    Ok(())
}
