//! Subtitle tracks: SRT/WebVTT parsing, text normalisation toward a model's token set, and
//! detection of machine-generated (rolling) caption tracks.

mod auto;
mod normalize;
mod parse;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use auto::{detect_auto_track, relative_levenshtein, AutoDetectConfig, AutoDetection, Pairing};
pub use normalize::{
    normalize_text, CharMap, EnglishVerbalizer, NormalizedText, TokenSet, UnknownCharReport,
    Verbalizer,
};
pub use parse::parse_track;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cue {
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl Cue {
    pub fn new(text: impl Into<String>, start_s: f64, end_s: f64) -> Self {
        Self {
            text: text.into(),
            start_s,
            end_s,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackSource {
    Manual,
    Auto,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubtitleFormat {
    Srt,
    Vtt,
}

impl SubtitleFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "srt" => Some(Self::Srt),
            "vtt" => Some(Self::Vtt),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Srt => "srt",
            Self::Vtt => "vtt",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubtitleTrack {
    pub cues: Vec<Cue>,
    pub source: TrackSource,
}

impl SubtitleTrack {
    /// Builds a track and applies cue normalisation: sort by start, clip each cue at the
    /// start of the next, drop cues that end up empty in time or text.
    pub fn new(cues: Vec<Cue>, source: TrackSource) -> Self {
        let mut track = Self { cues, source };
        track.normalize();
        track
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let format = SubtitleFormat::from_path(path).ok_or_else(|| {
            Error::invalid(format!("{}: not an .srt or .vtt file", path.display()))
        })?;
        let bytes = std::fs::read(path).map_err(|e| Error::from(e).with_path(path))?;
        parse_track(&bytes, format).map_err(|e| e.with_path(path))
    }

    pub fn len(&self) -> usize {
        self.cues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cues.is_empty()
    }

    fn normalize(&mut self) {
        for cue in &mut self.cues {
            cue.text = cue.text.split_whitespace().collect::<Vec<_>>().join(" ");
        }
        self.cues.retain(|c| !c.text.is_empty() && c.start_s.is_finite() && c.end_s.is_finite());
        self.cues.sort_by(|a, b| {
            a.start_s
                .total_cmp(&b.start_s)
                .then(a.end_s.total_cmp(&b.end_s))
        });
        for i in 1..self.cues.len() {
            let next_start = self.cues[i].start_s;
            let prev = &mut self.cues[i - 1];
            if prev.end_s > next_start {
                prev.end_s = next_start;
            }
        }
        self.cues.retain(|c| c.end_s > c.start_s);
    }

    pub fn to_srt(&self) -> String {
        let mut out = String::new();
        for (i, cue) in self.cues.iter().enumerate() {
            let _ = write!(
                out,
                "{}\n{} --> {}\n{}\n\n",
                i + 1,
                format_timestamp(cue.start_s, ','),
                format_timestamp(cue.end_s, ','),
                cue.text
            );
        }
        out
    }

    pub fn to_vtt(&self) -> String {
        let mut out = String::from("WEBVTT\n\n");
        for cue in &self.cues {
            let _ = write!(
                out,
                "{} --> {}\n{}\n\n",
                format_timestamp(cue.start_s, '.'),
                format_timestamp(cue.end_s, '.'),
                cue.text
            );
        }
        out
    }

    pub fn serialize(&self, format: SubtitleFormat) -> String {
        match format {
            SubtitleFormat::Srt => self.to_srt(),
            SubtitleFormat::Vtt => self.to_vtt(),
        }
    }
}

fn format_timestamp(seconds: f64, frac_sep: char) -> String {
    let total_ms = (seconds * 1000.0).round().max(0.0) as u64;
    let (h, rem) = (total_ms / 3_600_000, total_ms % 3_600_000);
    let (m, rem) = (rem / 60_000, rem % 60_000);
    let (s, ms) = (rem / 1000, rem % 1000);
    format!("{h:02}:{m:02}:{s:02}{frac_sep}{ms:03}")
}
