use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::support::{input, write_atomic, CmdResult};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to repeat a command: its arguments, the resolved
/// configuration, the seed and content hashes of the inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub config: BTreeMap<String, Value>,
    /// Hash of the configuration without seed and budget; runs sharing it
    /// are replicates of one setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<InputRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<String>,
    pub inputs: BTreeMap<String, InputRef>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: BTreeMap<String, String>,
    pub results: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRef {
    pub source: String,
    pub sha256: String,
}

pub fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn new(command: &str, started: DateTime<Utc>) -> Self {
        RunManifest {
            command: command.to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            argv: std::env::args().collect(),
            seed: None,
            config: BTreeMap::new(),
            config_hash: None,
            label: None,
            model: None,
            oracle: None,
            inputs: BTreeMap::new(),
            started_at: timestamp(started),
            finished_at: String::new(),
            outputs: BTreeMap::new(),
            results: BTreeMap::new(),
        }
    }

    pub fn set<V: Serialize>(&mut self, key: &str, v: V) {
        self.config
            .insert(key.to_owned(), serde_json::to_value(v).expect("serializable"));
    }

    pub fn result<V: Serialize>(&mut self, key: &str, v: V) {
        self.results
            .insert(key.to_owned(), serde_json::to_value(v).expect("serializable"));
    }

    /// Stamps the end time and writes the manifest atomically.
    pub fn finish(mut self, path: &Path) -> CmdResult {
        self.finished_at = timestamp(Utc::now());
        let mut text = serde_json::to_string_pretty(&self).expect("serializable");
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> CmdResult<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))
            .map_err(input)?;
        serde_json::from_str(&text)
            .with_context(|| format!("malformed manifest {}", path.display()))
            .map_err(input)
    }
}
