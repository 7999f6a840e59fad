//! Structured run log. Events are collected on the coordinating thread in a fixed order and
//! carry no timestamps, so two runs over the same inputs produce identical logs.

use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Info,
    Warning,
    /// One video (or one step) could not be processed; the run continues without it.
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub stage: String,
    pub level: Level,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub video_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, stage: &str, level: Level, video_id: Option<&str>, message: impl Into<String>) {
        let event = Event {
            stage: stage.to_string(),
            level,
            video_id: video_id.map(str::to_string),
            message: message.into(),
        };
        let subject = event.video_id.as_deref().unwrap_or("-");
        match level {
            Level::Info => log::info!("[{stage}] {subject}: {}", event.message),
            Level::Warning => log::warn!("[{stage}] {subject}: {}", event.message),
            Level::Failure => log::error!("[{stage}] {subject}: {}", event.message),
        }
        self.events.push(event);
    }

    pub fn info(&mut self, stage: &str, video_id: Option<&str>, message: impl Into<String>) {
        self.push(stage, Level::Info, video_id, message);
    }

    pub fn warn(&mut self, stage: &str, video_id: Option<&str>, message: impl Into<String>) {
        self.push(stage, Level::Warning, video_id, message);
    }

    pub fn fail(&mut self, stage: &str, video_id: Option<&str>, message: impl Into<String>) {
        self.push(stage, Level::Failure, video_id, message);
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn failures(&self) -> usize {
        self.events.iter().filter(|e| e.level == Level::Failure).count()
    }

    pub fn save(&self, path: &Path) -> speechcorpus_core::Result<()> {
        speechcorpus_core::jsonl::save(path, &self.events)
    }
}
