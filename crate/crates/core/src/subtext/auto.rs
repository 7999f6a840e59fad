use serde::{Deserialize, Serialize};

use super::SubtitleTrack;

/// Edit distance normalised by the longer string, in characters. Two empty strings are 0.
pub fn relative_levenshtein(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    strsim::levenshtein(a, b) as f64 / longest as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    #[default]
    Adjacent,
    AllPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoDetectConfig {
    /// Tracks whose mean relative distance falls below this are machine captions.
    pub threshold: f64,
    pub pairing: Pairing,
}

impl Default for AutoDetectConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            pairing: Pairing::Adjacent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoDetection {
    pub is_auto: bool,
    pub mean_rel_lev: Option<f64>,
}

/// Rolling machine captions repeat most of the previous cue, so their mean distance between
/// cues is small; manually written cues are mostly unrelated to each other.
pub fn detect_auto_track(track: &SubtitleTrack, cfg: &AutoDetectConfig) -> AutoDetection {
    let cues = &track.cues;
    if cues.len() < 2 {
        return AutoDetection {
            is_auto: false,
            mean_rel_lev: None,
        };
    }
    let (sum, count) = match cfg.pairing {
        Pairing::Adjacent => cues.windows(2).fold((0.0, 0usize), |(s, n), w| {
            (s + relative_levenshtein(&w[0].text, &w[1].text), n + 1)
        }),
        Pairing::AllPairs => {
            let mut acc = (0.0, 0usize);
            for i in 0..cues.len() {
                for j in i + 1..cues.len() {
                    acc.0 += relative_levenshtein(&cues[i].text, &cues[j].text);
                    acc.1 += 1;
                }
            }
            acc
        }
    };
    let mean = sum / count as f64;
    AutoDetection {
        is_auto: mean < cfg.threshold,
        mean_rel_lev: Some(mean),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::super::{Cue, TrackSource};
    use super::*;

    /// Textbook Wagner-Fischer table over chars.
    fn edit_distance(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for (j, cell) in d[0].iter_mut().enumerate() {
            *cell = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
                d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
            }
        }
        d[a.len()][b.len()]
    }

    fn track(texts: &[&str]) -> SubtitleTrack {
        SubtitleTrack::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Cue::new(*t, i as f64, i as f64 + 1.0))
                .collect(),
            TrackSource::Unknown,
        )
    }

    #[test]
    fn relative_distance_examples() {
        assert_eq!(relative_levenshtein("abc", "abc"), 0.0);
        assert_eq!(edit_distance("abc", "abd"), 1);
        assert!((relative_levenshtein("abc", "abd") - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(relative_levenshtein("", "xy"), 1.0);
        assert_eq!(relative_levenshtein("", ""), 0.0);
    }

    #[test]
    fn rolling_captions_are_auto() {
        let words = ["so", "today", "we", "are", "going", "to", "talk", "about", "rust"];
        let texts: Vec<String> = (1..=words.len()).map(|n| words[..n].join(" ")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let t = track(&refs);
        // oracle mean over adjacent pairs
        let oracle: f64 = refs
            .windows(2)
            .map(|w| {
                edit_distance(w[0], w[1]) as f64
                    / w[0].chars().count().max(w[1].chars().count()) as f64
            })
            .sum::<f64>()
            / (refs.len() - 1) as f64;
        let det = detect_auto_track(&t, &AutoDetectConfig::default());
        assert!((det.mean_rel_lev.unwrap() - oracle).abs() < 1e-12);
        assert!(oracle < 0.5);
        assert!(det.is_auto);
    }

    #[test]
    fn disjoint_texts_are_not_auto() {
        let t = track(&["aaaa", "bbbb", "cccc", "dddd"]);
        let det = detect_auto_track(&t, &AutoDetectConfig::default());
        assert_eq!(det.mean_rel_lev, Some(1.0));
        assert!(!det.is_auto);
        let all = AutoDetectConfig {
            pairing: Pairing::AllPairs,
            ..Default::default()
        };
        assert_eq!(detect_auto_track(&t, &all).mean_rel_lev, Some(1.0));
    }

    #[test]
    fn identical_cues_and_short_tracks() {
        let det = detect_auto_track(&track(&["same", "same"]), &AutoDetectConfig::default());
        assert_eq!(det.mean_rel_lev, Some(0.0));
        assert!(det.is_auto);
        let det = detect_auto_track(&track(&["only"]), &AutoDetectConfig::default());
        assert_eq!(
            det,
            AutoDetection {
                is_auto: false,
                mean_rel_lev: None
            }
        );
    }

    proptest! {
        #[test]
        fn relative_distance_properties(a in "[abcé ]{0,12}", b in "[abcé ]{0,12}") {
            let ab = relative_levenshtein(&a, &b);
            prop_assert_eq!(ab, relative_levenshtein(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            let (la, lb) = (a.chars().count(), b.chars().count());
            if la.max(lb) > 0 {
                let bound = la.abs_diff(lb) as f64 / la.max(lb) as f64;
                prop_assert!(bound <= ab + 1e-15);
                prop_assert!((ab - edit_distance(&a, &b) as f64 / la.max(lb) as f64).abs() < 1e-15);
            }
        }
    }
}
