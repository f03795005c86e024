//! Deterministic report envelopes and plot-ready TSV series.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// Hex SHA-256 of the canonical (serialized) experiment config.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Report envelope shared by every subcommand. Timings are opt-in so default
/// runs stay byte-identical under a fixed config and seed.
#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_seconds: Option<f64>,
    pub payload: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &str, seed: u64, config: &ExperimentConfig, payload: T) -> Self {
        Self {
            schema_version: crate::config::SCHEMA_VERSION,
            command: command.into(),
            seed,
            config_hash: config_hash(config),
            elapsed_seconds: None,
            payload,
        }
    }

    pub fn render(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// Write to `out` or, when absent, to stdout.
    pub fn emit(&self, out: Option<&Path>) -> Result<()> {
        let text = self.render();
        match out {
            Some(path) => std::fs::write(path, text)
                .with_context(|| format!("writing report {}", path.display())),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

/// Write a TSV table: a header row, then one row per record.
pub fn write_tsv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut text = String::new();
    text.push_str(&header.join("\t"));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join("\t"));
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = 1;
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn default_report_has_no_timing_field() {
        let r = Report::new("map", 0, &ExperimentConfig::default(), serde_json::json!({}));
        assert!(!r.render().contains("elapsed_seconds"));
    }
}
