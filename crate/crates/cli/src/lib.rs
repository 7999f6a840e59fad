//! Command-line pipeline over `speechcorpus-core`: configuration, per-stage commands, a
//! parallel end-to-end run, and a synthetic fixture with known answers.

pub mod asr;
pub mod commands;
pub mod config;
pub mod events;
pub mod fixture;
pub mod pipeline;
pub mod spk;

pub use commands::{run, Cli, Outcome};
pub use config::{ConfigError, PipelineConfig};
pub use pipeline::PipelineReport;

/// Renders an error with its causes, skipping causes whose text the message already shows.
pub fn error_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}
