use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subtext::Cue;

/// Level assigned to frames of digital silence.
const SILENCE_DBFS: f64 = -200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VadConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub noise_floor_percentile: f64,
    pub margin_db: f64,
    pub hangover_frames: usize,
    /// Minimum voiced fraction for a cue to be retained.
    pub speech_fraction_min: f64,
    /// Absolute level used when the signal has no contrast to estimate a noise floor from
    /// (every frame within `margin_db` of the percentile level).
    pub flat_signal_dbfs: f64,
    pub sample_rate_hz: u32,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            frame_ms: 30.0,
            hop_ms: 10.0,
            noise_floor_percentile: 5.0,
            margin_db: 6.0,
            hangover_frames: 3,
            speech_fraction_min: 0.5,
            flat_signal_dbfs: -50.0,
            sample_rate_hz: super::super::chunker::SAMPLE_RATE_HZ,
        }
    }
}

impl VadConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("frame_ms", self.frame_ms),
            ("hop_ms", self.hop_ms),
            ("noise_floor_percentile", self.noise_floor_percentile),
            ("margin_db", self.margin_db),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("vad {name} must be positive, got {v}")));
            }
        }
        if self.noise_floor_percentile > 100.0 {
            return Err(Error::invalid("vad noise_floor_percentile must be <= 100"));
        }
        if !(self.speech_fraction_min > 0.0 && self.speech_fraction_min <= 1.0) {
            return Err(Error::invalid(format!(
                "vad speech_fraction_min {} must lie in (0, 1]",
                self.speech_fraction_min
            )));
        }
        if self.sample_rate_hz == 0 || self.frame_samples() == 0 || self.hop_samples() == 0 {
            return Err(Error::invalid("vad frame and hop must span at least one sample"));
        }
        Ok(())
    }

    pub fn frame_samples(&self) -> usize {
        (self.frame_ms * f64::from(self.sample_rate_hz) / 1000.0).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_ms * f64::from(self.sample_rate_hz) / 1000.0).round() as usize
    }
}

/// Per-frame voiced flags; frame `i` covers samples `[i·hop, i·hop + frame)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VadMask {
    pub voiced: Vec<bool>,
    pub frame_samples: usize,
    pub hop_samples: usize,
    pub sample_rate_hz: u32,
    pub total_samples: usize,
}

impl VadMask {
    pub fn voiced_fraction(&self) -> f64 {
        if self.voiced.is_empty() {
            return 0.0;
        }
        self.voiced.iter().filter(|&&v| v).count() as f64 / self.voiced.len() as f64
    }

    pub fn duration_s(&self) -> f64 {
        self.total_samples as f64 / f64::from(self.sample_rate_hz)
    }

    fn centre_s(&self, frame: usize) -> f64 {
        (frame * self.hop_samples) as f64 / f64::from(self.sample_rate_hz)
            + self.frame_samples as f64 / 2.0 / f64::from(self.sample_rate_hz)
    }

    /// Fraction of frames whose centre falls in `[start_s, end_s)` that are voiced; `None`
    /// when no frame centre does.
    pub fn fraction_in(&self, start_s: f64, end_s: f64) -> Option<f64> {
        let (mut n, mut voiced) = (0usize, 0usize);
        for (i, &v) in self.voiced.iter().enumerate() {
            let c = self.centre_s(i);
            if c >= start_s && c < end_s {
                n += 1;
                voiced += usize::from(v);
            }
        }
        (n > 0).then(|| voiced as f64 / n as f64)
    }
}

/// RMS level of each frame in dBFS.
pub fn frame_levels(samples: &[i16], cfg: &VadConfig) -> Vec<f64> {
    let (frame, hop) = (cfg.frame_samples(), cfg.hop_samples());
    if samples.len() < frame || frame == 0 || hop == 0 {
        return Vec::new();
    }
    let n = 1 + (samples.len() - frame) / hop;
    (0..n)
        .map(|i| {
            let w = &samples[i * hop..i * hop + frame];
            let energy = w.iter().map(|&s| f64::from(s).powi(2)).sum::<f64>() / frame as f64;
            if energy == 0.0 {
                SILENCE_DBFS
            } else {
                (10.0 * (energy / 32768f64.powi(2)).log10()).max(SILENCE_DBFS)
            }
        })
        .collect()
}

/// Energy VAD. A frame is voiced when its level exceeds the noise floor (a low percentile of
/// all frame levels) by `margin_db`; voiced runs are then extended by `hangover_frames`.
/// When no frame rises `margin_db` above the floor the signal is flat and every frame is
/// judged against `flat_signal_dbfs` instead. Audio shorter than one frame gives an empty mask.
pub fn vad_mask(samples: &[i16], cfg: &VadConfig) -> Result<VadMask> {
    cfg.validate()?;
    let levels = frame_levels(samples, cfg);
    let mut voiced = vec![false; levels.len()];
    if !levels.is_empty() {
        let mut sorted = levels.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = (cfg.noise_floor_percentile / 100.0 * sorted.len() as f64).ceil() as usize;
        let floor = sorted[rank.clamp(1, sorted.len()) - 1];
        let loudest = sorted[sorted.len() - 1];
        let threshold = if loudest > floor + cfg.margin_db {
            floor + cfg.margin_db
        } else {
            cfg.flat_signal_dbfs
        };
        let raw: Vec<bool> = levels.iter().map(|&l| l > threshold).collect();
        let mut since_voiced = usize::MAX;
        for (i, &v) in raw.iter().enumerate() {
            since_voiced = if v { 0 } else { since_voiced.saturating_add(1) };
            voiced[i] = since_voiced <= cfg.hangover_frames;
        }
    }
    Ok(VadMask {
        voiced,
        frame_samples: cfg.frame_samples(),
        hop_samples: cfg.hop_samples(),
        sample_rate_hz: cfg.sample_rate_hz,
        total_samples: samples.len(),
    })
}

/// Indices of cues whose voiced fraction reaches `speech_fraction_min`, in input order.
/// Cues extending past the audio are dropped with a warning.
pub fn retain_segments(cues: &[Cue], mask: &VadMask, cfg: &VadConfig) -> Vec<usize> {
    let duration = mask.duration_s();
    let mut kept = Vec::new();
    for (i, cue) in cues.iter().enumerate() {
        if cue.start_s < 0.0 || cue.end_s > duration + 1e-9 {
            log::warn!(
                "cue {i} [{:.3}, {:.3}) lies outside the {duration:.3} s audio; dropped",
                cue.start_s,
                cue.end_s
            );
            continue;
        }
        if mask
            .fraction_in(cue.start_s, cue.end_s)
            .is_some_and(|f| f >= cfg.speech_fraction_min)
        {
            kept.push(i);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn tone(n: usize, amp: f64) -> Vec<i16> {
        (0..n)
            .map(|i| (amp * (i as f64 * 2.0 * std::f64::consts::PI * 440.0 / 16000.0).sin()) as i16)
            .collect()
    }

    /// Low-level deterministic hiss around ±`amp`.
    fn hiss(n: usize, amp: i16) -> Vec<i16> {
        let mut x: u32 = 12345;
        (0..n)
            .map(|_| {
                x = x.wrapping_mul(1_103_515_245).wrapping_add(12345);
                ((x >> 16) % (2 * amp as u32 + 1)) as i16 - amp
            })
            .collect()
    }

    fn cue(start_s: f64, end_s: f64) -> Cue {
        Cue {
            text: "x".into(),
            start_s,
            end_s,
        }
    }

    #[test]
    fn silence_and_full_scale_tone() {
        let cfg = VadConfig::default();
        let m = vad_mask(&vec![0; 16000], &cfg).unwrap();
        assert_eq!(m.voiced.len(), 1 + (16000 - 480) / 160);
        assert!(m.voiced.iter().all(|&v| !v));
        let m = vad_mask(&tone(16000, 32767.0), &cfg).unwrap();
        assert!(m.voiced.iter().all(|&v| v));
        assert!(vad_mask(&[0; 100], &cfg).unwrap().voiced.is_empty());
    }

    #[test]
    fn hiss_then_tone_is_half_voiced() {
        let cfg = VadConfig::default();
        let mut audio = hiss(16000, 30);
        audio.extend(tone(16000, 10000.0));
        let m = vad_mask(&audio, &cfg).unwrap();

        // oracle: frames lying entirely in the tone second, plus those straddling the
        // boundary, plus at most `hangover` trailing frames (none here: the tone runs to the end)
        let (frame, hop) = (480, 160);
        let n = m.voiced.len();
        let straddling_or_tone = (0..n).filter(|&i| i * hop + frame > 16000).count();
        let fully_tone = (0..n).filter(|&i| i * hop >= 16000).count();
        let voiced = m.voiced.iter().filter(|&&v| v).count();
        assert!(voiced >= fully_tone && voiced <= straddling_or_tone, "{voiced}");
        assert!((m.voiced_fraction() - 0.5).abs() <= (cfg.hangover_frames + 3) as f64 / n as f64);
    }

    #[test]
    fn hangover_extends_runs() {
        let cfg = VadConfig::default();
        let mut audio = vec![0i16; 8000];
        audio.extend(tone(1600, 10000.0));
        audio.extend(vec![0i16; 8000]);
        let levels = frame_levels(&audio, &cfg);
        let raw_last = levels.iter().rposition(|&l| l > -100.0).unwrap();
        let m = vad_mask(&audio, &cfg).unwrap();
        assert_eq!(m.voiced.iter().rposition(|&v| v).unwrap(), raw_last + cfg.hangover_frames);
    }

    #[test]
    fn cue_retention() {
        let cfg = VadConfig {
            hangover_frames: 0,
            ..VadConfig::default()
        };
        let mut audio = vec![0i16; 32000];
        audio.extend(tone(32000, 10000.0));
        let m = vad_mask(&audio, &cfg).unwrap();
        let cues = [
            cue(2.5, 3.5), // tone
            cue(0.2, 1.5), // silence
            cue(1.0, 3.0), // about half tone
            cue(3.5, 5.0), // past the end
        ];
        assert_eq!(retain_segments(&cues, &m, &cfg), vec![0, 2]);
    }

    #[test]
    fn exactly_half_voiced_is_kept() {
        let cfg = VadConfig::default();
        // 10 ms hop, 30 ms frame: centres at 0.015, 0.025, ...
        let mask = VadMask {
            voiced: (0..100).map(|i| i >= 50).collect(),
            frame_samples: 480,
            hop_samples: 160,
            sample_rate_hz: 16000,
            total_samples: 480 + 99 * 160,
        };
        // centres in [0.41, 0.61) belong to frames 40..=59, half of them voiced
        let (start, end) = (0.41, 0.61);
        assert_eq!(mask.fraction_in(start, end), Some(0.5));
        assert_eq!(retain_segments(&[cue(start, end)], &mask, &cfg), vec![0]);
        let strict = VadConfig { speech_fraction_min: 0.51, ..cfg };
        assert!(retain_segments(&[cue(start, end)], &mask, &strict).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(VadConfig { speech_fraction_min: 0.0, ..Default::default() }.validate().is_err());
        assert!(VadConfig { hop_ms: -1.0, ..Default::default() }.validate().is_err());
        assert!(VadConfig::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn retained_is_ordered_subset(
            spans in prop::collection::vec((0.0f64..2.0, 0.0f64..1.0), 0..12),
            amp in 0.0f64..20000.0,
        ) {
            let cfg = VadConfig::default();
            let mut audio = hiss(16000, 20);
            audio.extend(tone(16000, amp));
            let m = vad_mask(&audio, &cfg).unwrap();
            let cues: Vec<Cue> = spans.iter().map(|&(s, d)| cue(s, s + d)).collect();
            let kept = retain_segments(&cues, &m, &cfg);
            prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(kept.iter().all(|&i| i < cues.len()));
        }
    }
}
