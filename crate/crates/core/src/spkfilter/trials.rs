use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Klass, VariationResult};
use crate::error::{Error, Result};
use crate::util::{hex, stable_digest};

pub fn speaker_id(channel_id: &str) -> String {
    format!("spk-{}", &hex(&stable_digest(&[b"speaker", channel_id.as_bytes()]))[..16])
}

/// Maps every single-speaker video with a known channel to its channel's speaker id.
/// `channels` maps video id to channel id; videos without one are skipped with a warning.
pub fn group_speakers(
    results: &[VariationResult],
    channels: &BTreeMap<String, String>,
) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for r in results.iter().filter(|r| r.klass == Klass::Single) {
        match channels.get(&r.video_id).filter(|c| !c.is_empty()) {
            Some(channel) => {
                out.insert(r.video_id.clone(), speaker_id(channel));
            }
            None => log::warn!("video {} has no channel id; excluded from speakers", r.video_id),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialLabel {
    Target,
    Nontarget,
}

impl fmt::Display for TrialLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrialLabel::Target => "target",
            TrialLabel::Nontarget => "nontarget",
        })
    }
}

impl FromStr for TrialLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target" => Ok(TrialLabel::Target),
            "nontarget" => Ok(TrialLabel::Nontarget),
            other => Err(Error::invalid(format!("unknown trial label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Trial {
    pub enroll_utt_id: String,
    pub test_utt_id: String,
    pub label: TrialLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialUtterance {
    pub utt_id: String,
    pub video_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub n_target: usize,
    pub n_nontarget: usize,
    pub seed: u64,
}

fn choose(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Draws `n` distinct unordered index pairs out of `max`, enumerating when the request is a
/// large share of the population and rejection-sampling otherwise.
fn sample_pairs(
    rng: &mut ChaCha8Rng,
    n: usize,
    max: usize,
    all: impl FnOnce() -> Vec<(usize, usize)>,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> Option<(usize, usize)>,
) -> Vec<(usize, usize)> {
    if n == 0 {
        return Vec::new();
    }
    if n * 4 > max {
        let mut pairs = all();
        let (chosen, _) = pairs.partial_shuffle(rng, n);
        return chosen.to_vec();
    }
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if let Some((a, b)) = draw(rng) {
            let key = (a.min(b), a.max(b));
            if seen.insert(key) {
                out.push(key);
            }
        }
    }
    out
}

/// Verification trials over the utterances of the grouped videos. Target pairs are two
/// different utterances of one video; nontarget pairs join utterances of different speakers.
/// Pairs are unordered (the enrollment side is the smaller id), distinct, and returned sorted.
pub fn make_trials(
    speakers: &BTreeMap<String, String>,
    utterances: &[TrialUtterance],
    cfg: &TrialConfig,
) -> Result<Vec<Trial>> {
    let mut utts: Vec<(&str, &str, &str)> = utterances
        .iter()
        .filter_map(|u| {
            speakers
                .get(&u.video_id)
                .map(|s| (u.utt_id.as_str(), u.video_id.as_str(), s.as_str()))
        })
        .collect();
    utts.sort();
    if let Some(w) = utts.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid(format!("duplicate utt_id {}", w[0].0)));
    }

    let mut by_video: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut per_speaker: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, &(_, video, spk)) in utts.iter().enumerate() {
        by_video.entry(video).or_default().push(i);
        *per_speaker.entry(spk).or_default() += 1;
    }
    let max_target: usize = by_video.values().map(|v| choose(v.len())).sum();
    let max_nontarget = choose(utts.len()) - per_speaker.values().map(|&n| choose(n)).sum::<usize>();
    if cfg.n_target > max_target || cfg.n_nontarget > max_nontarget {
        return Err(Error::InfeasibleTrials {
            requested_target: cfg.n_target,
            requested_nontarget: cfg.n_nontarget,
            max_target,
            max_nontarget,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let videos: Vec<&Vec<usize>> = by_video.values().collect();
    let largest = videos.iter().map(|v| v.len()).max().unwrap_or(0);
    let targets = sample_pairs(
        &mut rng,
        cfg.n_target,
        max_target,
        || {
            videos
                .iter()
                .flat_map(|v| {
                    v.iter()
                        .enumerate()
                        .flat_map(move |(k, &a)| v[k + 1..].iter().map(move |&b| (a, b)))
                })
                .collect()
        },
        |rng| {
            // a uniform utterance, then a uniform partner from its video; thinning by video
            // size makes every same-video pair equally likely
            let a = rng.random_range(0..utts.len());
            let v = &by_video[utts[a].1];
            let b = v[rng.random_range(0..v.len())];
            let keep = rng.random::<f64>() * (largest as f64) < (v.len() as f64);
            (a != b && keep).then_some((a, b))
        },
    );
    let n = utts.len();
    let nontargets = sample_pairs(
        &mut rng,
        cfg.n_nontarget,
        max_nontarget,
        || {
            (0..n)
                .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                .filter(|&(a, b)| utts[a].2 != utts[b].2)
                .collect()
        },
        |rng| {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            (utts[a].2 != utts[b].2).then_some((a, b))
        },
    );

    let mut trials: Vec<Trial> = targets
        .into_iter()
        .map(|p| (p, TrialLabel::Target))
        .chain(nontargets.into_iter().map(|p| (p, TrialLabel::Nontarget)))
        .map(|((a, b), label)| Trial {
            enroll_utt_id: utts[a].0.to_string(),
            test_utt_id: utts[b].0.to_string(),
            label,
        })
        .collect();
    trials.sort();
    Ok(trials)
}

/// Lines of `enroll_utt_id test_utt_id target|nontarget`.
pub fn write_trials<W: Write>(mut w: W, trials: &[Trial]) -> Result<()> {
    for t in trials {
        writeln!(w, "{} {} {}", t.enroll_utt_id, t.test_utt_id, t.label)?;
    }
    Ok(())
}

pub fn read_trials<R: BufRead>(r: R) -> Result<Vec<Trial>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: i + 1, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [enroll, test, label] = fields[..] else {
            return Err(parse_err(format!("expected 3 fields, found {}", fields.len())));
        };
        if enroll == test {
            return Err(parse_err(format!("enroll and test are both {enroll}")));
        }
        let label = label.parse().map_err(|e: Error| parse_err(e.to_string()))?;
        if !seen.insert((enroll.to_string(), test.to_string())) {
            return Err(parse_err(format!("duplicate pair {enroll} {test}")));
        }
        out.push(Trial {
            enroll_utt_id: enroll.into(),
            test_utt_id: test.into(),
            label,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spkfilter::Reducer;

    fn result(video: &str, klass: Klass) -> VariationResult {
        VariationResult {
            video_id: video.into(),
            score: Some(-10.0),
            n_utts: 20,
            klass,
            reducer: Reducer::Pca,
        }
    }

    fn utts(video: &str, n: usize) -> Vec<TrialUtterance> {
        (0..n)
            .map(|i| TrialUtterance {
                utt_id: format!("{video}_{i:05}"),
                video_id: video.into(),
            })
            .collect()
    }

    fn channels(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|&(v, c)| (v.to_string(), c.to_string())).collect()
    }

    #[test]
    fn grouping() {
        let results = [
            result("a", Klass::Single),
            result("b", Klass::Single),
            result("c", Klass::Single),
            result("d", Klass::Multi),
            result("e", Klass::Single),
        ];
        let ch = channels(&[("a", "x"), ("b", "x"), ("c", "y"), ("d", "y"), ("e", "")]);
        let g = group_speakers(&results, &ch);
        assert_eq!(g.keys().collect::<Vec<_>>(), ["a", "b", "c"]);
        assert_eq!(g["a"], g["b"]);
        assert_ne!(g["a"], g["c"]);
        assert_eq!(g.values().collect::<BTreeSet<_>>().len(), 2);
        assert_eq!(g["a"], speaker_id("x"));
        assert!(g["a"].starts_with("spk-"));
    }

    #[test]
    fn small_request_is_exact() {
        let speakers = channels(&[("a", "spk-1"), ("b", "spk-2")]);
        let mut u = utts("a", 2);
        u.extend(utts("b", 2));
        let cfg = TrialConfig { n_target: 2, n_nontarget: 2, seed: 1 };
        let t = make_trials(&speakers, &u, &cfg).unwrap();
        assert_eq!(t.len(), 4);
        for trial in &t {
            let same = trial.enroll_utt_id[..1] == trial.test_utt_id[..1];
            assert_eq!(same, trial.label == TrialLabel::Target);
            assert_ne!(trial.enroll_utt_id, trial.test_utt_id);
        }
        assert_eq!(t, make_trials(&speakers, &u, &cfg).unwrap());
    }

    #[test]
    fn infeasible_reports_maxima() {
        let speakers = channels(&[("a", "spk-1"), ("b", "spk-2")]);
        let mut u = utts("a", 2);
        u.extend(utts("b", 2));
        let cfg = TrialConfig { n_target: 3, n_nontarget: 0, seed: 1 };
        match make_trials(&speakers, &u, &cfg) {
            Err(Error::InfeasibleTrials { max_target, max_nontarget, .. }) => {
                assert_eq!((max_target, max_nontarget), (2, 4));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn skewed_ratio_is_honoured() {
        // 12 speakers, one video each, 10 utterances per video
        let speakers: BTreeMap<String, String> =
            (0..12).map(|s| (format!("v{s:02}"), format!("spk-{s}"))).collect();
        let u: Vec<_> = (0..12).flat_map(|s| utts(&format!("v{s:02}"), 10)).collect();
        let cfg = TrialConfig { n_target: 60, n_nontarget: 60 * 91, seed: 7 };
        let t = make_trials(&speakers, &u, &cfg).unwrap();
        let n_target = t.iter().filter(|x| x.label == TrialLabel::Target).count();
        assert_eq!((n_target, t.len() - n_target), (60, 5460));
        let unique: BTreeSet<_> = t.iter().map(|x| (&x.enroll_utt_id, &x.test_utt_id)).collect();
        assert_eq!(unique.len(), t.len());
        for x in &t {
            assert!(x.enroll_utt_id < x.test_utt_id);
            assert_eq!(x.enroll_utt_id[..3] == x.test_utt_id[..3], x.label == TrialLabel::Target);
        }
        let other = make_trials(&speakers, &u, &TrialConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(t, other);
    }

    #[test]
    fn trials_file() {
        let t = vec![
            Trial { enroll_utt_id: "a".into(), test_utt_id: "b".into(), label: TrialLabel::Target },
            Trial { enroll_utt_id: "a".into(), test_utt_id: "c".into(), label: TrialLabel::Nontarget },
        ];
        let mut buf = Vec::new();
        write_trials(&mut buf, &t).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "a b target\na c nontarget\n");
        assert_eq!(read_trials(&buf[..]).unwrap(), t);
        assert!(matches!(read_trials(&b"a b\n"[..]), Err(Error::Parse { line: 1, .. })));
        assert!(read_trials(&b"a a target\n"[..]).is_err());
        assert!(read_trials(&b"a b maybe\n"[..]).is_err());
    }
}
