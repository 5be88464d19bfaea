//! Pipeline configuration: one TOML file naming the input stores, the
//! output location, seeds, and backend settings. Command-line flags
//! override file values; credentials only ever come from the
//! environment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use queryforge::prompts::BackendConfig;
use queryforge::rng::fnv1a64;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
pub struct RawPaths {
    pub kg: PathBuf,
    pub assets: PathBuf,
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub policy: Option<PathBuf>,
    #[serde(default)]
    pub router: Option<PathBuf>,
    #[serde(default)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RawBackends {
    pub text: BackendConfig,
    pub vision: BackendConfig,
}

impl Default for RawBackends {
    fn default() -> Self {
        Self {
            text: BackendConfig::mock("mock-text"),
            vision: BackendConfig::mock("mock-vision"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct RawPipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_lanes")]
    pub worker_lanes: usize,
    #[serde(default = "default_n_records")]
    pub n_records: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub paths: RawPaths,
    #[serde(default)]
    pub backends: RawBackends,
}

fn default_seed() -> u64 {
    42
}

fn default_lanes() -> usize {
    1
}

fn default_n_records() -> usize {
    1000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Fully resolved configuration: absolute paths, flag overrides applied,
/// environment credentials injected.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub seed: u64,
    pub worker_lanes: usize,
    pub n_records: usize,
    pub output_dir: PathBuf,
    pub kg: PathBuf,
    pub assets: PathBuf,
    pub templates: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    pub router: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub text_backend: BackendConfig,
    pub vision_backend: BackendConfig,
}

/// Flag-level overrides (precedence: flags > file > defaults).
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub lanes: Option<usize>,
    pub out: Option<PathBuf>,
    pub n_records: Option<usize>,
}

impl PipelineConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let raw_text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Data(format!("cannot read config {}: {e}", path.display()))
        })?;
        let raw: RawPipelineConfig = toml::from_str(&raw_text)
            .map_err(|e| CliError::Data(format!("invalid config {}: {e}", path.display())))?;

        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &PathBuf| -> PathBuf {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        };

        let mut text_backend = raw.backends.text;
        let mut vision_backend = raw.backends.vision;
        if let Ok(endpoint) = std::env::var("QUERYFORGE_TEXT_ENDPOINT") {
            text_backend.endpoint = Some(endpoint);
        }
        if let Ok(endpoint) = std::env::var("QUERYFORGE_VISION_ENDPOINT") {
            vision_backend.endpoint = Some(endpoint);
        }
        if let Ok(key) = std::env::var("QUERYFORGE_API_KEY") {
            text_backend.api_key = Some(key.clone());
            vision_backend.api_key = Some(key);
        }

        let config = Self {
            seed: overrides.seed.unwrap_or(raw.seed),
            worker_lanes: overrides.lanes.unwrap_or(raw.worker_lanes).max(1),
            n_records: overrides.n_records.unwrap_or(raw.n_records),
            output_dir: overrides
                .out
                .clone()
                .unwrap_or_else(|| resolve(&raw.output_dir)),
            kg: resolve(&raw.paths.kg),
            assets: resolve(&raw.paths.assets),
            templates: raw.paths.templates.as_ref().map(&resolve),
            lexicon: raw.paths.lexicon.as_ref().map(&resolve),
            policy: raw.paths.policy.as_ref().map(&resolve),
            router: raw.paths.router.as_ref().map(&resolve),
            reference: raw.paths.reference.as_ref().map(&resolve),
            text_backend,
            vision_backend,
        };
        if config.n_records == 0 {
            return Err(CliError::Usage("n_records must be at least 1".to_string()));
        }
        Ok(config)
    }

    /// Stable hash of the resolved configuration, for the manifest.
    /// Credentials are deliberately excluded.
    pub fn stable_hash(&self) -> u64 {
        let mut fields: BTreeMap<&str, String> = BTreeMap::new();
        fields.insert("seed", self.seed.to_string());
        fields.insert("worker_lanes", self.worker_lanes.to_string());
        fields.insert("n_records", self.n_records.to_string());
        fields.insert("kg", self.kg.display().to_string());
        fields.insert("assets", self.assets.display().to_string());
        for (name, path) in [
            ("templates", &self.templates),
            ("lexicon", &self.lexicon),
            ("policy", &self.policy),
            ("router", &self.router),
            ("reference", &self.reference),
        ] {
            fields.insert(
                name,
                path.as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_else(|| "<builtin>".to_string()),
            );
        }
        for (name, backend) in [
            ("text_backend", &self.text_backend),
            ("vision_backend", &self.vision_backend),
        ] {
            fields.insert(
                name,
                format!(
                    "{}|{:?}|{}|{}|{}",
                    backend.backend_id,
                    backend.kind,
                    backend.endpoint.as_deref().unwrap_or("-"),
                    backend.sampling.temperature,
                    backend.sampling.max_tokens,
                ),
            );
        }
        let canonical = fields
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("\n");
        fnv1a64(canonical.as_bytes())
    }

    pub fn corpus_id(&self) -> String {
        format!("qf-{:016x}-s{}", self.stable_hash(), self.seed)
    }
}
