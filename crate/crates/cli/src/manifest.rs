//! Dataset manifest: what was generated, from which config, and how the
//! output splits across functions and routes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct FunctionCounts {
    pub search: u64,
    pub generate: u64,
    pub total: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetManifest {
    pub corpus_id: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub worker_lanes: usize,
    pub counts: FunctionCounts,
    pub route_tallies: BTreeMap<String, u64>,
    pub generator_tallies: BTreeMap<String, u64>,
    pub skipped: u64,
    pub rejected: u64,
    pub started_at_unix: u64,
    pub finished_at_unix: u64,
}

impl DatasetManifest {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
    }
}
