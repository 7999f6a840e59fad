//! Corpus manifests for ASR: utterance records, the video-level test/train split with
//! "easy" and "normal" score tiers, merging of overlapping subsets, and statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ctcseg::{is_log_zero, Scored};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::util::{stable_digest, stable_u64};

/// `<video_id>_<index>` with the index zero-padded to five digits.
pub fn utterance_id(video_id: &str, index: usize) -> String {
    format!("{video_id}_{index:05}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub utt_id: String,
    pub video_id: String,
    pub channel_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
    pub score: f64,
}

impl Scored for UtteranceRecord {
    fn score(&self) -> f64 {
        self.score
    }
}

impl UtteranceRecord {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub easy_theta: f64,
    pub normal_theta: f64,
    pub test_video_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            easy_theta: -0.3,
            normal_theta: -1.0,
            test_video_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.easy_theta >= self.normal_theta) {
            return Err(Error::invalid(format!(
                "easy_theta {} must be >= normal_theta {}",
                self.easy_theta, self.normal_theta
            )));
        }
        if !(self.test_video_fraction > 0.0 && self.test_video_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "test_video_fraction {} must lie in (0, 1)",
                self.test_video_fraction
            )));
        }
        Ok(())
    }
}

/// Output of [`design_splits`]. Every list is sorted by `utt_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub test_videos: Vec<String>,
    pub dev_easy: Vec<UtteranceRecord>,
    pub eval_easy: Vec<UtteranceRecord>,
    pub dev_normal: Vec<UtteranceRecord>,
    pub eval_normal: Vec<UtteranceRecord>,
    pub train: Vec<UtteranceRecord>,
}

impl Splits {
    /// Named subsets in a fixed order, with the threshold each was cut at.
    pub fn named(&self, spec: &SplitSpec) -> [(&'static str, f64, &[UtteranceRecord]); 5] {
        [
            ("dev_easy", spec.easy_theta, &self.dev_easy),
            ("eval_easy", spec.easy_theta, &self.eval_easy),
            ("dev_normal", spec.normal_theta, &self.dev_normal),
            ("eval_normal", spec.normal_theta, &self.eval_normal),
            ("train", spec.normal_theta, &self.train),
        ]
    }
}

fn check_unique(records: &[UtteranceRecord]) -> Result<()> {
    let mut seen = BTreeSet::new();
    let dups: BTreeSet<&str> = records
        .iter()
        .filter(|r| !seen.insert(r.utt_id.as_str()))
        .map(|r| r.utt_id.as_str())
        .collect();
    if dups.is_empty() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "duplicate utt_id: {}",
            dups.into_iter().collect::<Vec<_>>().join(", ")
        )))
    }
}

pub fn design_splits(records: &[UtteranceRecord], spec: &SplitSpec) -> Result<Splits> {
    design_splits_with_exclusions(records, spec, &BTreeSet::new())
}

/// Video-level test/train split.
///
/// 1. Eligible videos hold at least one utterance scoring above `easy_theta`.
/// 2. `ceil(fraction · |eligible|)` of them become test videos: the ones with the smallest
///    seeded hash keys, so the draw is independent of input order.
/// 3. Test utterances above `easy_theta` form the easy tier, those above `normal_theta` the
///    normal tier; each utterance goes to dev or eval by a seeded per-utterance coin, so an
///    utterance lands on the same side in both tiers.
/// 4. Train holds every utterance above `normal_theta` from the remaining videos.
///
/// `excluded` lists utterances a listener rejected; they are removed from dev and eval.
pub fn design_splits_with_exclusions(
    records: &[UtteranceRecord],
    spec: &SplitSpec,
    excluded: &BTreeSet<String>,
) -> Result<Splits> {
    spec.validate()?;
    if records.is_empty() {
        return Err(Error::invalid("no records to split"));
    }
    check_unique(records)?;

    let seed = spec.seed.to_le_bytes();
    let eligible: BTreeSet<&str> = records
        .iter()
        .filter(|r| r.score > spec.easy_theta)
        .map(|r| r.video_id.as_str())
        .collect();
    if eligible.is_empty() {
        return Err(Error::NoEligibleVideos(spec.easy_theta));
    }
    let n_test = (spec.test_video_fraction * eligible.len() as f64).ceil() as usize;
    let mut keyed: Vec<([u8; 32], &str)> = eligible
        .iter()
        .map(|v| (stable_digest(&[b"test-video", &seed, v.as_bytes()]), *v))
        .collect();
    keyed.sort();
    let test_videos: BTreeSet<&str> = keyed.iter().take(n_test).map(|(_, v)| *v).collect();

    let is_dev = |utt: &str| stable_u64(&[b"dev-eval", &seed, utt.as_bytes()]) & 1 == 0;

    let mut sorted: Vec<&UtteranceRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));

    let mut splits = Splits {
        test_videos: test_videos.iter().map(|s| s.to_string()).collect(),
        dev_easy: Vec::new(),
        eval_easy: Vec::new(),
        dev_normal: Vec::new(),
        eval_normal: Vec::new(),
        train: Vec::new(),
    };
    for r in sorted {
        if test_videos.contains(r.video_id.as_str()) {
            if excluded.contains(&r.utt_id) {
                continue;
            }
            let dev = is_dev(&r.utt_id);
            if r.score > spec.easy_theta {
                if dev {
                    splits.dev_easy.push(r.clone());
                } else {
                    splits.eval_easy.push(r.clone());
                }
            }
            if r.score > spec.normal_theta {
                if dev {
                    splits.dev_normal.push(r.clone());
                } else {
                    splits.eval_normal.push(r.clone());
                }
            }
        } else if r.score > spec.normal_theta {
            splits.train.push(r.clone());
        }
    }
    Ok(splits)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestStats {
    pub n_videos: usize,
    pub n_utts: usize,
    pub hours: f64,
}

pub fn manifest_stats(records: &[UtteranceRecord]) -> ManifestStats {
    let videos: BTreeSet<&str> = records.iter().map(|r| r.video_id.as_str()).collect();
    ManifestStats {
        n_videos: videos.len(),
        n_utts: records.len(),
        hours: records.iter().map(UtteranceRecord::duration_s).sum::<f64>() / 3600.0,
    }
}

/// Union by `utt_id`. Shared ids keep the higher-scoring record; shared ids whose text
/// differs are an error. Output is sorted by `utt_id`.
pub fn merge_manifests(
    a: &[UtteranceRecord],
    b: &[UtteranceRecord],
) -> Result<Vec<UtteranceRecord>> {
    let mut merged: BTreeMap<&str, &UtteranceRecord> = BTreeMap::new();
    let mut conflicts = BTreeSet::new();
    for r in a.iter().chain(b) {
        match merged.get(r.utt_id.as_str()) {
            None => {
                merged.insert(&r.utt_id, r);
            }
            Some(prev) if prev.text != r.text => {
                conflicts.insert(r.utt_id.clone());
            }
            Some(prev) => {
                if prefer(r, prev) {
                    merged.insert(&r.utt_id, r);
                }
            }
        }
    }
    if !conflicts.is_empty() {
        return Err(Error::ConflictingText(conflicts.into_iter().collect()));
    }
    Ok(merged.into_values().cloned().collect())
}

/// Higher score wins; exact ties fall back to a fixed field order so merging commutes.
fn prefer(candidate: &UtteranceRecord, current: &UtteranceRecord) -> bool {
    candidate
        .score
        .total_cmp(&current.score)
        .then_with(|| current.start_s.total_cmp(&candidate.start_s))
        .then_with(|| current.end_s.total_cmp(&candidate.end_s))
        .then_with(|| current.video_id.cmp(&candidate.video_id))
        .then_with(|| current.channel_id.cmp(&candidate.channel_id))
        .is_gt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    /// Non-empty bins `[k·w, (k+1)·w)`, ascending.
    pub bins: Vec<HistogramBin>,
    /// Scores at the log-zero sentinel; they have no finite bin.
    pub unscorable: usize,
}

pub fn score_histogram(records: &[UtteranceRecord], bin_width: f64) -> Result<ScoreHistogram> {
    histogram_of(records.iter().map(|r| r.score), bin_width)
}

pub fn histogram_of(scores: impl IntoIterator<Item = f64>, bin_width: f64) -> Result<ScoreHistogram> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::invalid(format!("bin width {bin_width} must be positive")));
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    let mut unscorable = 0;
    for s in scores {
        if is_log_zero(s) || !s.is_finite() {
            unscorable += 1;
        } else {
            *counts.entry((s / bin_width).floor() as i64).or_default() += 1;
        }
    }
    Ok(ScoreHistogram {
        bins: counts
            .into_iter()
            .map(|(k, count)| HistogramBin {
                lower: k as f64 * bin_width,
                upper: (k + 1) as f64 * bin_width,
                count,
            })
            .collect(),
        unscorable,
    })
}

/// A manifest directory: `manifest.jsonl`, plus `segments` and `text` companions.
pub fn write_manifest_dir(dir: impl AsRef<Path>, records: &[UtteranceRecord]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::from(e).with_path(dir))?;
    let mut sorted: Vec<&UtteranceRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    jsonl::save(dir.join("manifest.jsonl"), &sorted)?;

    let mut segments = String::new();
    let mut text = String::new();
    for r in &sorted {
        let _ = writeln!(
            segments,
            "{} {} {:.2} {:.2}",
            r.utt_id, r.video_id, r.start_s, r.end_s
        );
        let _ = writeln!(text, "{}\t{}", r.utt_id, r.text);
    }
    let segments_path = dir.join("segments");
    fs::write(&segments_path, segments).map_err(|e| Error::from(e).with_path(segments_path))?;
    let text_path = dir.join("text");
    fs::write(&text_path, text).map_err(|e| Error::from(e).with_path(text_path))?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<UtteranceRecord>> {
    let path = path.as_ref();
    let file = if path.is_dir() {
        path.join("manifest.jsonl")
    } else {
        path.to_path_buf()
    };
    jsonl::load(file)
}

/// Table of `name theta n_videos n_utts hours`, tab separated, with a header row.
pub fn stats_tsv<'a>(rows: impl IntoIterator<Item = (&'a str, f64, ManifestStats)>) -> String {
    let mut out = String::from("name\ttheta\tn_videos\tn_utts\thours\n");
    for (name, theta, s) in rows {
        let _ = writeln!(
            out,
            "{name}\t{theta}\t{}\t{}\t{:.3}",
            s.n_videos, s.n_utts, s.hours
        );
    }
    out
}

/// Groups records by video, preserving the record order inside each video.
pub fn by_video(records: &[UtteranceRecord]) -> HashMap<&str, Vec<&UtteranceRecord>> {
    let mut map: HashMap<&str, Vec<&UtteranceRecord>> = HashMap::new();
    for r in records {
        map.entry(r.video_id.as_str()).or_default().push(r);
    }
    map
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn rec(video: &str, idx: usize, score: f64) -> UtteranceRecord {
        UtteranceRecord {
            utt_id: utterance_id(video, idx),
            video_id: video.into(),
            channel_id: format!("ch-{video}"),
            start_s: idx as f64 * 10.0,
            end_s: idx as f64 * 10.0 + 5.0,
            text: format!("utt {idx}"),
            score,
        }
    }

    fn corpus(videos: usize, per_video: usize, seed: u64) -> Vec<UtteranceRecord> {
        let mut out = Vec::new();
        for v in 0..videos {
            for i in 0..per_video {
                let x = stable_u64(&[&seed.to_le_bytes(), &(v * 1000 + i).to_le_bytes()]);
                let score = -((x % 3000) as f64) / 1000.0;
                out.push(rec(&format!("vid{v:03}"), i, score));
            }
        }
        out
    }

    #[test]
    fn utt_id_format() {
        assert_eq!(utterance_id("abc", 7), "abc_00007");
    }

    #[test]
    fn ten_videos_give_two_test_videos_deterministically() {
        let records: Vec<_> = (0..10)
            .flat_map(|v| (0..3).map(move |i| rec(&format!("v{v}"), i, -0.1)))
            .collect();
        let spec = SplitSpec {
            seed: 42,
            ..Default::default()
        };
        let a = design_splits(&records, &spec).unwrap();
        assert_eq!(a.test_videos.len(), 2);
        let mut shuffled = records.clone();
        shuffled.reverse();
        assert_eq!(design_splits(&shuffled, &spec).unwrap(), a);
    }

    #[test]
    fn mid_score_goes_to_normal_only() {
        let records = vec![rec("v0", 0, -0.1), rec("v0", 1, -0.5)];
        let s = design_splits(&records, &SplitSpec::default()).unwrap();
        assert_eq!(s.test_videos, vec!["v0"]);
        let easy: Vec<_> = s.dev_easy.iter().chain(&s.eval_easy).map(|r| &r.utt_id).collect();
        let normal: Vec<_> = s.dev_normal.iter().chain(&s.eval_normal).map(|r| &r.utt_id).collect();
        assert_eq!(easy, vec!["v0_00000"]);
        assert_eq!(normal.len(), 2);
    }

    #[test]
    fn no_eligible_video_is_an_error() {
        let records = vec![rec("v0", 0, -0.5)];
        assert!(matches!(
            design_splits(&records, &SplitSpec::default()),
            Err(Error::NoEligibleVideos(_))
        ));
        assert!(design_splits(&[], &SplitSpec::default()).is_err());
        let dup = vec![rec("v0", 0, -0.1), rec("v0", 0, -0.1)];
        assert!(design_splits(&dup, &SplitSpec::default()).is_err());
    }

    #[test]
    fn invalid_specs() {
        let bad = SplitSpec {
            easy_theta: -2.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SplitSpec {
            test_video_fraction: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn exclusions_only_touch_dev_eval() {
        let records = vec![rec("v0", 0, -0.1), rec("v0", 1, -0.1)];
        let excluded: BTreeSet<String> = ["v0_00001".to_string()].into();
        let s = design_splits_with_exclusions(&records, &SplitSpec::default(), &excluded).unwrap();
        let kept: Vec<_> = s.dev_normal.iter().chain(&s.eval_normal).collect();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].utt_id, "v0_00000");
    }

    #[test]
    fn stats_examples() {
        let mut a = rec("v", 0, 0.0);
        a.start_s = 0.0;
        a.end_s = 1800.0;
        let mut b = rec("v", 1, 0.0);
        b.start_s = 1800.0;
        b.end_s = 3600.0;
        let s = manifest_stats(&[a, b]);
        assert_eq!((s.n_videos, s.n_utts), (1, 2));
        assert!((s.hours - 1.0).abs() < 1e-12);
        assert_eq!(manifest_stats(&[]), ManifestStats::default());
    }

    #[test]
    fn stats_of_constructed_table_row() {
        // 20 videos with 11 or 12 utts each (228 total, 11.4 per video), 3.6 s per utt
        let mut records = Vec::new();
        for v in 0..20 {
            let n = if v < 8 { 12 } else { 11 };
            for i in 0..n {
                let mut r = rec(&format!("v{v}"), i, -0.1);
                r.start_s = i as f64 * 4.0;
                r.end_s = r.start_s + 3.6;
                records.push(r);
            }
        }
        let s = manifest_stats(&records);
        assert_eq!((s.n_videos, s.n_utts), (20, 228));
        assert!((s.n_utts as f64 / s.n_videos as f64 - 11.4).abs() < 1e-12);
        assert!((s.hours - 228.0 * 3.6 / 3600.0).abs() < 1e-12);
    }

    #[test]
    fn merge_examples() {
        let a: Vec<_> = (0..3).map(|i| rec("a", i, -0.1)).collect();
        let b: Vec<_> = (0..4).map(|i| rec("b", i, -0.1)).collect();
        assert_eq!(merge_manifests(&a, &b).unwrap().len(), 7);

        let mut b2: Vec<_> = (1..5).map(|i| rec("a", i, -0.1)).collect();
        assert_eq!(merge_manifests(&a, &b2).unwrap().len(), 3 + 4 - 2);

        b2[0].score = -0.2;
        let mut a2 = a.clone();
        a2[1].score = -0.4;
        let merged = merge_manifests(&a2, &b2).unwrap();
        assert_eq!(merged.iter().find(|r| r.utt_id == "a_00001").unwrap().score, -0.2);

        b2[1].text = "different".into();
        match merge_manifests(&a, &b2) {
            Err(Error::ConflictingText(ids)) => assert_eq!(ids, vec!["a_00002"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn histogram_examples() {
        let records = vec![rec("v", 0, -0.1), rec("v", 1, -0.1), rec("v", 2, -2.9)];
        let h = score_histogram(&records, 1.0).unwrap();
        assert_eq!(
            h.bins,
            vec![
                HistogramBin { lower: -3.0, upper: -2.0, count: 1 },
                HistogramBin { lower: -1.0, upper: 0.0, count: 2 },
            ]
        );
        assert!(score_histogram(&[], 0.5).unwrap().bins.is_empty());
        assert!(score_histogram(&records, 0.0).is_err());
        let h = histogram_of([crate::LOG_ZERO, -0.5], 1.0).unwrap();
        assert_eq!(h.unscorable, 1);
    }

    #[test]
    fn bimodal_scores_recover_both_modes() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let good = Normal::new(-0.2, 0.05).unwrap();
        let bad = Normal::new(-3.75, 0.1).unwrap();
        let scores: Vec<f64> = (0..2000)
            .map(|i| if i % 4 == 0 { bad.sample(&mut rng) } else { good.sample(&mut rng) })
            .collect();
        let h = histogram_of(scores, 0.5).unwrap();
        // two local maxima, at the bins holding each construction mean
        let peaks: Vec<f64> = (0..h.bins.len())
            .filter(|&i| {
                let c = h.bins[i].count;
                let left = if i > 0 && h.bins[i - 1].upper == h.bins[i].lower { h.bins[i - 1].count } else { 0 };
                let right = if i + 1 < h.bins.len() && h.bins[i + 1].lower == h.bins[i].upper { h.bins[i + 1].count } else { 0 };
                c > left && c > right
            })
            .map(|i| h.bins[i].lower)
            .collect();
        assert_eq!(peaks, vec![-4.0, -0.5]);
    }

    #[test]
    fn manifest_files() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![rec("v", 1, -0.25), rec("v", 0, -0.5)];
        write_manifest_dir(dir.path(), &records).unwrap();
        let segments = fs::read_to_string(dir.path().join("segments")).unwrap();
        assert_eq!(segments, "v_00000 v 0.00 5.00\nv_00001 v 10.00 15.00\n");
        let text = fs::read_to_string(dir.path().join("text")).unwrap();
        assert_eq!(text, "v_00000\tutt 0\nv_00001\tutt 1\n");
        let back = read_manifest(dir.path()).unwrap();
        assert_eq!(back[0], records[1]);
        let tsv = stats_tsv([("train", -0.3, manifest_stats(&back))]);
        assert_eq!(tsv, "name\ttheta\tn_videos\tn_utts\thours\ntrain\t-0.3\t1\t2\t0.003\n");
    }

    proptest! {
        #[test]
        fn splits_partition_and_nest(videos in 1usize..25, per in 1usize..8, seed in any::<u64>()) {
            let records = corpus(videos, per, seed);
            let spec = SplitSpec { seed, ..Default::default() };
            let Ok(s) = design_splits(&records, &spec) else { return Ok(()); };
            let ids = |v: &[UtteranceRecord]| v.iter().map(|r| r.utt_id.clone()).collect::<BTreeSet<_>>();
            prop_assert!(ids(&s.dev_easy).is_disjoint(&ids(&s.eval_easy)));
            prop_assert!(ids(&s.dev_normal).is_disjoint(&ids(&s.eval_normal)));
            prop_assert!(ids(&s.dev_easy).is_subset(&ids(&s.dev_normal)));
            prop_assert!(ids(&s.eval_easy).is_subset(&ids(&s.eval_normal)));
            let test: BTreeSet<&str> = s.test_videos.iter().map(String::as_str).collect();
            prop_assert!(s.train.iter().all(|r| !test.contains(r.video_id.as_str())));
            prop_assert!(s.dev_normal.iter().chain(&s.eval_normal).all(|r| test.contains(r.video_id.as_str())));
        }

        #[test]
        fn lowering_normal_theta_only_adds(seed in any::<u64>(), drop in 0.0f64..1.5) {
            let records = corpus(12, 6, seed);
            let spec = SplitSpec { seed, ..Default::default() };
            let looser = SplitSpec { normal_theta: spec.normal_theta - drop, ..spec.clone() };
            let (Ok(a), Ok(b)) = (design_splits(&records, &spec), design_splits(&records, &looser)) else {
                return Ok(());
            };
            for ((_, _, x), (_, _, y)) in a.named(&spec).iter().zip(b.named(&looser).iter()) {
                let yi: BTreeSet<&str> = y.iter().map(|r| r.utt_id.as_str()).collect();
                prop_assert!(x.iter().all(|r| yi.contains(r.utt_id.as_str())));
            }
        }

        #[test]
        fn merge_commutes_and_is_idempotent(
            a in prop::collection::vec((0usize..10, -3.0f64..0.0), 0..10),
            b in prop::collection::vec((0usize..10, -3.0f64..0.0), 0..10),
        ) {
            let mk = |v: &[(usize, f64)]| {
                let mut seen = BTreeSet::new();
                v.iter().filter(|(i, _)| seen.insert(*i)).map(|&(i, s)| rec("v", i, s)).collect::<Vec<_>>()
            };
            let (a, b) = (mk(&a), mk(&b));
            let ab = merge_manifests(&a, &b).unwrap();
            prop_assert_eq!(&ab, &merge_manifests(&b, &a).unwrap());
            prop_assert_eq!(&ab, &merge_manifests(&ab, &ab).unwrap());
        }
    }
}
