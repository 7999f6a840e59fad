use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use speechcorpus_core::spkfilter::ClassifyConfig;
use speechcorpus_core::subtext::AutoDetectConfig;
use speechcorpus_core::{ChunkConfig, ScoreConfig, SplitSpec, VadConfig};

/// A configuration problem, reported with every offending field.
#[derive(Debug, thiserror::Error)]
#[error("invalid configuration:\n  {}", .problems.join("\n  "))]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl ConfigError {
    pub fn one(problem: impl Into<String>) -> Self {
        Self {
            problems: vec![problem.into()],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub audio_dir: Option<PathBuf>,
    pub subtitle_dir: Option<PathBuf>,
    pub posterior_dir: Option<PathBuf>,
    pub embedding_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub catalog_dir: Option<PathBuf>,
    /// Model token inventory, one token per line, blank first.
    pub vocab: Option<PathBuf>,
    pub charmap: Option<PathBuf>,
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.audio_dir,
            &mut self.subtitle_dir,
            &mut self.posterior_dir,
            &mut self.embedding_dir,
            &mut self.output_dir,
            &mut self.catalog_dir,
            &mut self.vocab,
            &mut self.charmap,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Settings of the bundled deterministic stand-in acoustic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub samples_per_frame: usize,
    pub window_samples: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            samples_per_frame: 640,
            window_samples: 3_200,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AsrMode {
    /// Re-align every cue with CTC segmentation over the whole video.
    #[default]
    Align,
    /// Trust the subtitle timings and only score each cue's segment.
    Score,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsrConfig {
    pub mode: AsrMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSection {
    pub n_target: usize,
    pub n_nontarget: usize,
}

impl Default for TrialSection {
    fn default() -> Self {
        Self {
            n_target: 100,
            n_nontarget: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds every random draw (split design, t-SNE, trials).
    pub seed: u64,
    pub parallelism: usize,
    pub paths: Paths,
    pub model: ModelConfig,
    pub asr: AsrConfig,
    pub score: ScoreConfig,
    pub chunk: ChunkConfig,
    pub auto_detect: AutoDetectConfig,
    pub vad: VadConfig,
    pub classify: ClassifyConfig,
    pub split: SplitSpec,
    pub trials: TrialSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            parallelism: 1,
            paths: Paths::default(),
            model: ModelConfig::default(),
            asr: AsrConfig::default(),
            score: ScoreConfig::default(),
            chunk: ChunkConfig::default(),
            auto_detect: AutoDetectConfig::default(),
            vad: VadConfig::default(),
            classify: ClassifyConfig::default(),
            split: SplitSpec::default(),
            trials: TrialSection::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses a TOML file; relative paths are taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::one(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| ConfigError::one(format!("{}: {e}", path.display())))?;
        cfg.paths
            .resolve(path.parent().unwrap_or_else(|| Path::new(".")));
        cfg.apply_seed(cfg.seed);
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.split.seed = seed;
        self.classify.tsne.seed = seed;
    }

    /// Checks every section and collects all problems, each prefixed by its field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        if self.parallelism == 0 {
            problems.push("parallelism: must be at least 1".to_string());
        }
        if self.model.samples_per_frame == 0 {
            problems.push("model.samples_per_frame: must be positive".to_string());
        }
        let checks = [
            ("score", self.score.validate()),
            ("chunk", self.chunk.validate(self.model.samples_per_frame.max(1))),
            ("vad", self.vad.validate()),
            ("classify", self.classify.validate()),
            ("split", self.split.validate()),
        ];
        for (section, result) in checks {
            if let Err(e) = result {
                problems.push(format!("{section}: {e}"));
            }
        }
        if !(self.auto_detect.threshold >= 0.0 && self.auto_detect.threshold <= 1.0) {
            problems.push("auto_detect.threshold: must lie in [0, 1]".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { problems })
        }
    }

    /// Like [`validate`](Self::validate), and additionally requires the inputs a full
    /// pipeline run reads to exist.
    pub fn validate_for_pipeline(&self) -> Result<(), ConfigError> {
        let mut problems = self.validate().err().map(|e| e.problems).unwrap_or_default();
        let required = [
            ("paths.subtitle_dir", &self.paths.subtitle_dir),
            ("paths.output_dir", &self.paths.output_dir),
            ("paths.vocab", &self.paths.vocab),
        ];
        for (name, p) in required {
            if p.is_none() {
                problems.push(format!("{name}: required"));
            }
        }
        let existing = [
            ("paths.audio_dir", &self.paths.audio_dir),
            ("paths.subtitle_dir", &self.paths.subtitle_dir),
            ("paths.posterior_dir", &self.paths.posterior_dir),
            ("paths.embedding_dir", &self.paths.embedding_dir),
            ("paths.catalog_dir", &self.paths.catalog_dir),
        ];
        for (name, p) in existing {
            if let Some(p) = p {
                if !p.is_dir() {
                    problems.push(format!("{name}: {} is not a directory", p.display()));
                }
            }
        }
        for (name, p) in [("paths.vocab", &self.paths.vocab), ("paths.charmap", &self.paths.charmap)] {
            if let Some(p) = p {
                if !p.is_file() {
                    problems.push(format!("{name}: {} is not a file", p.display()));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { problems })
        }
    }
}
