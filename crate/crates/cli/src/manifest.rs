//! Run manifests: every invocation records its command, all resolved
//! parameters (including defaulted ones), the seed, and the tool version,
//! so a run can be reproduced from the manifest alone.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: BTreeMap<String, String>,
    pub seed: u64,
    pub tool_version: String,
    pub elapsed_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, parameters: BTreeMap<String, String>, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            parameters,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            elapsed_seconds: 0.0,
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(dir.join("manifest.json"), text + "\n")
    }

    pub fn read(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn param(&self, key: &str) -> Result<&str, String> {
        self.parameters
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| format!("manifest is missing parameter {key:?}"))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, String> {
        self.param(key)?
            .parse()
            .map_err(|_| format!("manifest parameter {key:?} has an invalid value"))
    }

    pub fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>, String> {
        self.param(key)?
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| format!("manifest parameter {key:?} has an invalid entry"))
            })
            .collect()
    }
}

/// Join values with commas for manifest storage.
pub fn join_list<T: std::fmt::Display>(values: &[T]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}
