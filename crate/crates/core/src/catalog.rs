//! Bookkeeping for search terms, discovered videos and their subtitle availability.
//!
//! Network fetchers are out of scope: [`VideoSearch`] and [`SubtitleProbe`] are the seams,
//! and [`FixtureFetcher`] serves both from local JSONL files.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::jsonl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermSource {
    WikiHyperlink,
    Trend,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchTerm {
    pub text: String,
    pub source: TermSource,
}

impl SearchTerm {
    pub fn new(text: impl Into<String>, source: TermSource) -> Self {
        Self {
            text: text.into(),
            source,
        }
    }
}

/// Identity of a search term: NFC, lower-cased, whitespace runs collapsed, trimmed.
pub fn normalize_term(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    nfc.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub channel_id: String,
    pub duration_s: f64,
    pub has_manual_subs: bool,
    pub has_auto_subs: bool,
    /// Normalised texts of the search terms that surfaced this video.
    #[serde(default)]
    pub found_by: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upsert {
    Inserted,
    Updated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedTerm {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AddTermsReport {
    pub added: usize,
    pub rejected: Vec<RejectedTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatalogStats {
    pub n_terms: u64,
    pub n_videos: u64,
    pub n_manual: u64,
    pub n_auto: u64,
    /// Absent when there are no terms.
    pub videos_per_term: Option<f64>,
}

impl CatalogStats {
    pub fn from_counts(n_terms: u64, n_videos: u64, n_manual: u64, n_auto: u64) -> Self {
        Self {
            n_terms,
            n_videos,
            n_manual,
            n_auto,
            videos_per_term: (n_terms > 0).then(|| n_videos as f64 / n_terms as f64),
        }
    }

    pub fn manual_fraction(&self) -> Option<f64> {
        (self.n_videos > 0).then(|| self.n_manual as f64 / self.n_videos as f64)
    }

    pub fn auto_fraction(&self) -> Option<f64> {
        (self.n_videos > 0).then(|| self.n_auto as f64 / self.n_videos as f64)
    }
}

/// In-memory catalog. Single writer; `&Catalog` reads are safe to share.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    terms: BTreeMap<String, SearchTerm>,
    videos: BTreeMap<String, VideoRecord>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds terms, silently dropping duplicates of already-known terms. Empty terms are
    /// reported per item and skipped.
    pub fn add_terms(&mut self, terms: impl IntoIterator<Item = SearchTerm>) -> AddTermsReport {
        let mut report = AddTermsReport::default();
        for (index, term) in terms.into_iter().enumerate() {
            let key = normalize_term(&term.text);
            if key.is_empty() {
                report.rejected.push(RejectedTerm {
                    index,
                    reason: "empty search term".into(),
                });
                continue;
            }
            if !self.terms.contains_key(&key) {
                self.terms.insert(
                    key.clone(),
                    SearchTerm {
                        text: key,
                        source: term.source,
                    },
                );
                report.added += 1;
            }
        }
        report
    }

    /// Inserts a new video or merges into the existing record: `found_by` is unioned, every
    /// other field takes the latest observation.
    pub fn upsert_video(&mut self, v: VideoRecord) -> Result<Upsert> {
        if v.video_id.trim().is_empty() {
            return Err(Error::invalid("video_id is empty"));
        }
        if !(v.duration_s >= 0.0) || !v.duration_s.is_finite() {
            return Err(Error::invalid(format!(
                "video {} has invalid duration {}",
                v.video_id, v.duration_s
            )));
        }
        let mut found: BTreeSet<String> = v.found_by.iter().map(|t| normalize_term(t)).collect();
        let outcome = match self.videos.get(&v.video_id) {
            Some(existing) => {
                found.extend(existing.found_by.iter().cloned());
                Upsert::Updated
            }
            None => Upsert::Inserted,
        };
        self.videos.insert(
            v.video_id.clone(),
            VideoRecord {
                found_by: found.into_iter().collect(),
                ..v
            },
        );
        Ok(outcome)
    }

    pub fn terms(&self) -> impl Iterator<Item = &SearchTerm> {
        self.terms.values()
    }

    pub fn videos(&self) -> impl Iterator<Item = &VideoRecord> {
        self.videos.values()
    }

    pub fn video(&self, id: &str) -> Option<&VideoRecord> {
        self.videos.get(id)
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn n_videos(&self) -> usize {
        self.videos.len()
    }

    pub fn stats(&self) -> CatalogStats {
        let (manual, auto) = self.videos.values().fold((0u64, 0u64), |(m, a), v| {
            (m + u64::from(v.has_manual_subs), a + u64::from(v.has_auto_subs))
        });
        CatalogStats::from_counts(
            self.terms.len() as u64,
            self.videos.len() as u64,
            manual,
            auto,
        )
    }

    /// Loads `terms.jsonl` and `videos.jsonl` from `dir`; missing files count as empty.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut cat = Catalog::new();
        let terms_path = dir.join("terms.jsonl");
        if terms_path.exists() {
            let terms: Vec<SearchTerm> = jsonl::load(&terms_path)?;
            let report = cat.add_terms(terms);
            if let Some(bad) = report.rejected.first() {
                return Err(Error::Parse {
                    line: bad.index + 1,
                    message: bad.reason.clone(),
                }
                .with_path(terms_path));
            }
        }
        let videos_path = dir.join("videos.jsonl");
        if videos_path.exists() {
            for v in jsonl::load::<VideoRecord>(&videos_path)? {
                cat.upsert_video(v).map_err(|e| e.with_path(&videos_path))?;
            }
        }
        Ok(cat)
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).with_path(dir))?;
        jsonl::save(
            dir.join("terms.jsonl"),
            &self.terms.values().cloned().collect::<Vec<_>>(),
        )?;
        jsonl::save(
            dir.join("videos.jsonl"),
            &self.videos.values().cloned().collect::<Vec<_>>(),
        )
    }
}

/// Search-engine seam: video ids returned for a term, at most `max_results`.
pub trait VideoSearch {
    fn search(&self, term: &str, max_results: usize) -> Result<Vec<String>>;
}

/// Subtitle-availability seam: full metadata for a video id, `None` if unknown.
pub trait SubtitleProbe {
    fn probe(&self, video_id: &str) -> Result<Option<VideoRecord>>;
}

#[derive(Debug, Clone, Deserialize)]
struct SearchFixtureLine {
    term: String,
    video_ids: Vec<String>,
}

/// Offline fetcher backed by JSONL fixtures: `search.jsonl` lines
/// `{"term": str, "video_ids": [str]}` and a `videos.jsonl` of probe answers.
#[derive(Debug, Clone, Default)]
pub struct FixtureFetcher {
    results: HashMap<String, Vec<String>>,
    probes: HashMap<String, VideoRecord>,
}

impl FixtureFetcher {
    pub fn load(search_path: impl AsRef<Path>, videos_path: impl AsRef<Path>) -> Result<Self> {
        let mut results: HashMap<String, Vec<String>> = HashMap::new();
        for line in jsonl::load::<SearchFixtureLine>(search_path)? {
            results
                .entry(normalize_term(&line.term))
                .or_default()
                .extend(line.video_ids);
        }
        let probes = jsonl::load::<VideoRecord>(videos_path)?
            .into_iter()
            .map(|v| (v.video_id.clone(), v))
            .collect();
        Ok(Self { results, probes })
    }
}

impl VideoSearch for FixtureFetcher {
    fn search(&self, term: &str, max_results: usize) -> Result<Vec<String>> {
        Ok(self
            .results
            .get(&normalize_term(term))
            .map(|ids| ids.iter().take(max_results).cloned().collect())
            .unwrap_or_default())
    }
}

impl SubtitleProbe for FixtureFetcher {
    fn probe(&self, video_id: &str) -> Result<Option<VideoRecord>> {
        Ok(self.probes.get(video_id).map(|v| VideoRecord {
            found_by: Vec::new(),
            ..v.clone()
        }))
    }
}

/// Runs every catalog term through `search`, probes each hit and upserts it. Returns the
/// number of ids the probe did not know.
pub fn discover(
    catalog: &mut Catalog,
    search: &dyn VideoSearch,
    probe: &dyn SubtitleProbe,
    max_results: usize,
) -> Result<usize> {
    let terms: Vec<String> = catalog.terms().map(|t| t.text.clone()).collect();
    let mut unknown = 0;
    for term in terms {
        for id in search.search(&term, max_results)? {
            match probe.probe(&id)? {
                Some(mut v) => {
                    v.found_by = vec![term.clone()];
                    catalog.upsert_video(v)?;
                }
                None => unknown += 1,
            }
        }
    }
    Ok(unknown)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use proptest::prelude::*;

    use super::*;

    fn video(id: &str, manual: bool, terms: &[&str]) -> VideoRecord {
        VideoRecord {
            video_id: id.into(),
            channel_id: format!("ch-{id}"),
            duration_s: 60.0,
            has_manual_subs: manual,
            has_auto_subs: !manual,
            found_by: terms.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn manual(t: &str) -> SearchTerm {
        SearchTerm::new(t, TermSource::Manual)
    }

    #[test]
    fn duplicate_terms_collapse() {
        let mut c = Catalog::new();
        let r = c.add_terms(["tokyo", "tokyo", "  tokyo "].map(manual));
        assert_eq!(r.added, 1);
        assert_eq!(c.add_terms(["a", "b"].map(manual)).added, 2);
        assert_eq!(c.add_terms(["b", "c"].map(manual)).added, 1);
        assert_eq!(c.add_terms(["TOKYO", "Ｔokyo"].map(manual)).added, 1);
    }

    #[test]
    fn empty_terms_are_rejected_per_item() {
        let mut c = Catalog::new();
        let r = c.add_terms(["ok", "", "   "].map(manual));
        assert_eq!(r.added, 1);
        assert_eq!(r.rejected.iter().map(|x| x.index).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn nfc_equivalent_terms_are_one_term() {
        let mut c = Catalog::new();
        assert_eq!(c.add_terms(["caf\u{e9}", "cafe\u{301}"].map(manual)).added, 1);
    }

    #[test]
    fn wiki_fixture_with_duplicates() {
        let mut words: Vec<String> = (0..47).map(|i| format!("Term {i}")).collect();
        words.push("term 3".into());
        words.push("TERM  10".into());
        words.push(" term 46 ".into());
        assert_eq!(words.len(), 50);
        // independent set construction
        let expected: HashSet<String> = words
            .iter()
            .map(|w| w.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase())
            .collect();
        let mut c = Catalog::new();
        let r = c.add_terms(
            words
                .iter()
                .map(|w| SearchTerm::new(w.as_str(), TermSource::WikiHyperlink)),
        );
        assert_eq!(expected.len(), 47);
        assert_eq!(r.added, expected.len());
    }

    #[test]
    fn upsert_semantics() {
        let mut c = Catalog::new();
        assert_eq!(c.upsert_video(video("v1", true, &["a"])).unwrap(), Upsert::Inserted);
        assert_eq!(c.upsert_video(video("v1", false, &["b"])).unwrap(), Upsert::Updated);
        let v = c.video("v1").unwrap();
        assert_eq!(v.found_by, vec!["a", "b"]);
        assert!(!v.has_manual_subs);

        let before = c.clone();
        assert_eq!(c.upsert_video(video("v1", false, &["b"])).unwrap(), Upsert::Updated);
        assert_eq!(c, before);

        assert!(c.upsert_video(video("", true, &[])).is_err());
        let mut neg = video("v2", true, &[]);
        neg.duration_s = -1.0;
        assert!(c.upsert_video(neg).is_err());
    }

    #[test]
    fn stats_of_large_scale_counts() {
        let s = CatalogStats::from_counts(2_340_000, 11_900_000, 110_000, 4_960_000);
        assert!((s.videos_per_term.unwrap() - 5.09).abs() < 0.005);
        assert!((s.manual_fraction().unwrap() * 100.0 - 0.92).abs() < 0.005);
        assert!((s.auto_fraction().unwrap() * 100.0 - 41.7).abs() < 0.05);
    }

    #[test]
    fn empty_catalog_stats() {
        let s = Catalog::new().stats();
        assert_eq!(
            s,
            CatalogStats {
                n_terms: 0,
                n_videos: 0,
                n_manual: 0,
                n_auto: 0,
                videos_per_term: None
            }
        );
    }

    #[test]
    fn dir_round_trip_and_discovery() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("search.jsonl"),
            "{\"term\":\"Tokyo\",\"video_ids\":[\"v1\",\"v2\",\"v3\"]}\n{\"term\":\"osaka\",\"video_ids\":[\"v2\"]}\n",
        )
        .unwrap();
        jsonl::save(
            dir.path().join("probe.jsonl"),
            &[video("v1", true, &[]), video("v2", false, &[])],
        )
        .unwrap();
        let fetcher =
            FixtureFetcher::load(dir.path().join("search.jsonl"), dir.path().join("probe.jsonl"))
                .unwrap();
        let mut c = Catalog::new();
        c.add_terms(["tokyo", "Osaka"].map(manual));
        let unknown = discover(&mut c, &fetcher, &fetcher, 10).unwrap();
        assert_eq!(unknown, 1);
        assert_eq!(c.video("v2").unwrap().found_by, vec!["osaka", "tokyo"]);
        assert_eq!(fetcher.search("TOKYO", 2).unwrap(), vec!["v1", "v2"]);

        let out = dir.path().join("cat");
        c.save_dir(&out).unwrap();
        let line = std::fs::read_to_string(out.join("terms.jsonl")).unwrap();
        assert_eq!(line.lines().next().unwrap(), r#"{"text":"osaka","source":"manual"}"#);
        assert_eq!(Catalog::load_dir(&out).unwrap(), c);
    }

    proptest! {
        #[test]
        fn stats_ignore_insertion_order(
            flags in prop::collection::vec((0u8..20, any::<bool>(), any::<bool>()), 0..30),
        ) {
            let records: Vec<VideoRecord> = flags
                .iter()
                .map(|(id, m, a)| VideoRecord {
                    video_id: format!("v{id}"),
                    channel_id: "c".into(),
                    duration_s: 1.0,
                    has_manual_subs: *m,
                    has_auto_subs: *a,
                    found_by: vec![],
                })
                .collect();
            // dedupe to last-write-wins so both orders describe the same final state
            let mut last: BTreeMap<String, VideoRecord> = BTreeMap::new();
            for r in &records {
                last.insert(r.video_id.clone(), r.clone());
            }
            let mut fwd = Catalog::new();
            let mut rev = Catalog::new();
            for r in last.values() {
                fwd.upsert_video(r.clone()).unwrap();
            }
            for r in last.values().rev() {
                rev.upsert_video(r.clone()).unwrap();
            }
            let s = fwd.stats();
            prop_assert_eq!(s, rev.stats());
            let without_manual = fwd.videos().filter(|v| !v.has_manual_subs).count() as u64;
            prop_assert_eq!(s.n_manual + without_manual, s.n_videos);
            prop_assert!(s.n_auto <= s.n_videos);
        }
    }
}
