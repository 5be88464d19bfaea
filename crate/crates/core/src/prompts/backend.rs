//! Completion backends: a deterministic mock for offline runs and an HTTP
//! client for real model endpoints.
//!
//! The mock is a pure function of (prompt, image metadata, seed). It
//! parses the word budget and any "include the word ..." instruction out
//! of the prompt itself, filters instruction boilerplate away to find the
//! grounded slot values, and assembles query-shaped text from them with a
//! seeded grammar. That keeps large generated corpora diverse and
//! replayable without any model in the loop.
//!
//! The HTTP protocol is a single POST of
//! `{"prompt", "image"?, "seed", "temperature", "max_tokens"}` answered by
//! `{"texts": ["..."]}`.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::{PromptError, TemplateRegistry};
use crate::knowledge::AssetMetadata;
use crate::rng::mix_seed;
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum BackendKind {
    Text,
    Vision,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 0.3,
            max_tokens: 4096,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct BackendConfig {
    pub backend_id: String,
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub sampling: SamplingParams,
    /// Mock only: echo the grounded slot values verbatim instead of
    /// running the phrase grammar.
    #[serde(default)]
    pub echo: bool,
    /// Credentials come from the environment, never from config files.
    #[serde(skip)]
    pub api_key: Option<String>,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_retries() -> u32 {
    2
}

impl BackendConfig {
    pub fn mock(backend_id: &str) -> Self {
        Self {
            backend_id: backend_id.to_string(),
            kind: BackendKind::Mock,
            endpoint: None,
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            sampling: SamplingParams::default(),
            echo: false,
            api_key: None,
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.kind != BackendKind::Mock && self.endpoint.is_none() {
            return Err(PromptError::BackendUnavailable(format!(
                "backend `{}` has kind {:?} but no endpoint",
                self.backend_id, self.kind
            )));
        }
        Ok(())
    }
}

/// A batch of completion texts with call metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub texts: Vec<String>,
    pub backend_id: String,
    pub latency: Duration,
}

/// Image input for vision completions. The mock grounds itself in the
/// asset metadata; real backends need a resolvable locator.
#[derive(Debug, Clone, Copy)]
pub enum ImageRef<'a> {
    Asset(&'a AssetMetadata),
    Locator(&'a str),
}

pub trait Backend: Send + Sync {
    fn config(&self) -> &BackendConfig;

    fn complete_text(&self, prompt: &str, seed: u64) -> Result<Completion, PromptError>;

    fn complete_vision(
        &self,
        image: ImageRef<'_>,
        prompt: &str,
        seed: u64,
    ) -> Result<Completion, PromptError>;
}

/// Instantiate the backend matching a config.
pub fn build_backend(config: BackendConfig) -> Result<Box<dyn Backend>, PromptError> {
    config.validate()?;
    Ok(match config.kind {
        BackendKind::Mock => Box::new(MockBackend::new(config)),
        BackendKind::Text | BackendKind::Vision => Box::new(HttpBackend::new(config)?),
    })
}

/// Text completion with a kind check in front of the backend call.
pub fn complete_text(
    backend: &dyn Backend,
    prompt: &str,
    seed: u64,
) -> Result<Completion, PromptError> {
    match backend.config().kind {
        BackendKind::Text | BackendKind::Mock => backend.complete_text(prompt, seed),
        BackendKind::Vision => Err(PromptError::KindMismatch {
            backend_id: backend.config().backend_id.clone(),
            wanted: "text".to_string(),
        }),
    }
}

/// Vision completion. When the prompt asks for two single-sentence
/// prompts, responses with any other shape are split or truncated to two
/// texts, with a warning.
pub fn complete_vision(
    backend: &dyn Backend,
    image: ImageRef<'_>,
    prompt: &str,
    seed: u64,
) -> Result<Completion, PromptError> {
    let completion = match backend.config().kind {
        BackendKind::Vision | BackendKind::Mock => backend.complete_vision(image, prompt, seed)?,
        BackendKind::Text => {
            return Err(PromptError::KindMismatch {
                backend_id: backend.config().backend_id.clone(),
                wanted: "vision".to_string(),
            })
        }
    };
    if !prompt.contains("generate 2 single-sentence prompts") || completion.texts.len() == 2 {
        return Ok(completion);
    }
    log::warn!(
        "backend `{}` returned {} texts where 2 were requested; normalizing",
        completion.backend_id,
        completion.texts.len()
    );
    let mut sentences: Vec<String> = completion
        .texts
        .iter()
        .flat_map(|t| t.split(['.', '!', '?']))
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    sentences.truncate(2);
    if sentences.is_empty() {
        return Err(PromptError::EmptyCompletion);
    }
    Ok(Completion {
        texts: sentences,
        ..completion
    })
}

/// Modifier vocabulary the mock mixes into generated queries.
const FILLERS: &[&str] = &[
    "modern", "minimal", "vintage", "colorful", "elegant", "cute", "bright", "dark", "simple",
    "festive", "rustic", "bold", "pastel", "retro", "aesthetic", "floral", "geometric",
    "watercolor", "neon", "cozy", "fun", "classic", "clean", "luxury", "playful", "summer",
    "winter", "holiday", "party", "school", "wedding", "travel", "music", "food", "nature",
    "abstract", "trendy", "handmade", "professional", "cheerful",
];

const GENERATE_OPENERS: &[&str] = &[
    "create",
    "generate",
    "make",
    "design",
    "please create",
    "please generate",
    "please make",
    "i want",
    "i need",
    "can you make",
];

const SEARCH_OPENERS: &[&str] = &["find me", "search for", "look for", "search", "show me", "find"];

/// Deterministic stand-in for the text and vision models.
pub struct MockBackend {
    config: BackendConfig,
    boilerplate: BTreeSet<String>,
}

impl MockBackend {
    pub fn new(config: BackendConfig) -> Self {
        Self {
            config,
            boilerplate: default_boilerplate(),
        }
    }

    /// Tokens of the prompt that are not instruction boilerplate, in
    /// first-occurrence order. With the shipped templates these are
    /// exactly the bound slot values.
    fn content_tokens(&self, prompt: &str) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for token in text::normalize_key(prompt).split_whitespace() {
            if token.len() < 2 || token.chars().all(|c| c.is_ascii_digit()) {
                continue;
            }
            if self.boilerplate.contains(token) {
                continue;
            }
            if seen.insert(token.to_string()) {
                out.push(token.to_string());
            }
        }
        out
    }

    fn synthesize(&self, rng: &mut ChaCha8Rng, pool: &[String], prompt: &str) -> String {
        let is_search = prompt.to_lowercase().contains("search query");
        let max_words = parse_word_budget(prompt).unwrap_or(40);
        let forced = parse_forced_word(prompt);

        if self.config.echo {
            return pool.join(" ");
        }

        let (min_len, openers) = if is_search {
            (2usize, SEARCH_OPENERS)
        } else {
            (5usize, GENERATE_OPENERS)
        };
        let hi = max_words.max(min_len + 1);
        // Min of two uniforms biases toward short queries, which is the
        // shape real search traffic has.
        let target = rng
            .random_range(min_len..=hi)
            .min(rng.random_range(min_len..=hi));

        let opener = openers.choose(rng).expect("openers non-empty");
        let mut words: Vec<String> = opener.split_whitespace().map(str::to_string).collect();
        let budget = target.saturating_sub(words.len()).max(1);

        // An ordered random subset of the grounded tokens keeps phrases
        // like multi-word titles readable.
        let mut tail: Vec<String> = Vec::new();
        if !pool.is_empty() {
            let take = rng.random_range(1..=pool.len().min(budget));
            let mut picked: Vec<usize> = rand::seq::index::sample(rng, pool.len(), take).into_vec();
            picked.sort_unstable();
            tail.extend(picked.into_iter().map(|i| pool[i].clone()));
        }
        while tail.len() < budget {
            let filler = FILLERS.choose(rng).expect("fillers non-empty");
            let pos = rng.random_range(0..=tail.len());
            tail.insert(pos, (*filler).to_string());
        }
        tail.truncate(budget);
        if let Some(word) = forced {
            if !tail.contains(&word) {
                if tail.len() < budget {
                    let pos = rng.random_range(0..=tail.len());
                    tail.insert(pos, word);
                } else {
                    let pos = rng.random_range(0..tail.len());
                    tail[pos] = word;
                }
            }
        }
        words.extend(tail);
        words.truncate(max_words);
        words.join(" ")
    }
}

fn default_boilerplate() -> BTreeSet<String> {
    let mut set: BTreeSet<String> = BTreeSet::new();
    for template in TemplateRegistry::defaults().templates() {
        for token in text::normalize_key(&template.body).split_whitespace() {
            set.insert(token.to_string());
        }
    }
    for extra in [
        "query", "queries", "prompt", "prompts", "model", "system", "respond", "response",
        "instruction", "instructions",
    ] {
        set.insert(extra.to_string());
    }
    set
}

/// Parse "less than N words" out of an instruction prompt.
fn parse_word_budget(prompt: &str) -> Option<usize> {
    let lower = prompt.to_lowercase();
    let idx = lower.find("less than ")?;
    let rest = &lower[idx + "less than ".len()..];
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() || !rest[digits.len()..].trim_start().starts_with("word") {
        return None;
    }
    digits.parse().ok()
}

/// Parse "include the word W" out of an instruction prompt.
fn parse_forced_word(prompt: &str) -> Option<String> {
    let lower = prompt.to_lowercase();
    let idx = lower.find("include the word ")?;
    let rest = &lower[idx + "include the word ".len()..];
    let word: String = rest
        .chars()
        .take_while(|c| c.is_alphanumeric())
        .collect();
    (!word.is_empty()).then_some(word)
}

impl Backend for MockBackend {
    fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn complete_text(&self, prompt: &str, seed: u64) -> Result<Completion, PromptError> {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, prompt.as_bytes()));
        let pool = self.content_tokens(prompt);
        let body = self.synthesize(&mut rng, &pool, prompt);
        if body.trim().is_empty() {
            return Err(PromptError::EmptyCompletion);
        }
        Ok(Completion {
            texts: vec![body],
            backend_id: self.config.backend_id.clone(),
            latency: start.elapsed(),
        })
    }

    fn complete_vision(
        &self,
        image: ImageRef<'_>,
        prompt: &str,
        seed: u64,
    ) -> Result<Completion, PromptError> {
        let start = Instant::now();
        let asset = match image {
            ImageRef::Asset(asset) => asset,
            ImageRef::Locator(locator) => {
                return Err(PromptError::ImageUnreadable(format!(
                    "mock backend needs asset metadata, got bare locator `{locator}`"
                )))
            }
        };
        let title_tokens: Vec<String> = text::clean_phrase(&asset.title)
            .split_whitespace()
            .map(str::to_string)
            .collect();
        if title_tokens.is_empty() {
            return Err(PromptError::ImageUnreadable(format!(
                "asset `{}` has no usable title",
                asset.asset_id
            )));
        }
        let tag_tokens: Vec<String> = asset
            .tags
            .iter()
            .flat_map(|t| {
                text::clean_phrase(t)
                    .split_whitespace()
                    .map(str::to_string)
                    .collect::<Vec<_>>()
            })
            .collect();

        let fingerprint = format!("{}\u{1}{}\u{1}{}", prompt, asset.title, asset.tags.join(","));
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, fingerprint.as_bytes()));
        let max_words = parse_word_budget(prompt).unwrap_or(40);

        let mut texts = Vec::with_capacity(2);
        for idx in 0..2 {
            let opener = GENERATE_OPENERS[(rng.random_range(0..GENERATE_OPENERS.len()) + idx)
                % GENERATE_OPENERS.len()];
            let mut words: Vec<String> =
                opener.split_whitespace().map(str::to_string).collect();
            let take = rng.random_range(1..=title_tokens.len().min(6));
            words.push("a".to_string());
            if rng.random_range(0..2) == 1 {
                words.push(FILLERS.choose(&mut rng).expect("fillers").to_string());
            }
            words.extend(title_tokens.iter().take(take).cloned());
            words.push("template".to_string());
            if !tag_tokens.is_empty() && rng.random_range(0..3) > 0 {
                words.push("with".to_string());
                let tags = rng.random_range(1..=tag_tokens.len().min(3));
                let picked = rand::seq::index::sample(&mut rng, tag_tokens.len(), tags);
                for i in picked {
                    words.push(tag_tokens[i].clone());
                }
            }
            words.truncate(max_words);
            texts.push(words.join(" "));
        }

        Ok(Completion {
            texts,
            backend_id: self.config.backend_id.clone(),
            latency: start.elapsed(),
        })
    }
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    texts: Vec<String>,
}

/// Client for a real completion endpoint.
pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, PromptError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| PromptError::BackendUnavailable(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn post(&self, payload: serde_json::Value) -> Result<Completion, PromptError> {
        let start = Instant::now();
        let endpoint = self
            .config
            .endpoint
            .as_deref()
            .ok_or_else(|| PromptError::BackendUnavailable("no endpoint configured".into()))?;
        let mut last_err: Option<PromptError> = None;
        for _attempt in 0..=self.config.max_retries {
            let mut request = self.client.post(endpoint).json(&payload);
            if let Some(key) = &self.config.api_key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_client_error() {
                        return Err(PromptError::BackendUnavailable(format!(
                            "endpoint returned {status}"
                        )));
                    }
                    if status.is_server_error() {
                        last_err = Some(PromptError::BackendUnavailable(format!(
                            "endpoint returned {status}"
                        )));
                        continue;
                    }
                    let parsed: WireResponse = response
                        .json()
                        .map_err(|e| PromptError::BackendUnavailable(e.to_string()))?;
                    if parsed.texts.iter().all(|t| t.trim().is_empty()) {
                        return Err(PromptError::EmptyCompletion);
                    }
                    return Ok(Completion {
                        texts: parsed.texts,
                        backend_id: self.config.backend_id.clone(),
                        latency: start.elapsed(),
                    });
                }
                Err(e) if e.is_timeout() => {
                    last_err = Some(PromptError::Timeout(e.to_string()));
                }
                Err(e) => {
                    last_err = Some(PromptError::BackendUnavailable(e.to_string()));
                }
            }
        }
        Err(last_err.unwrap_or_else(|| PromptError::BackendUnavailable("no attempts made".into())))
    }
}

impl Backend for HttpBackend {
    fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn complete_text(&self, prompt: &str, seed: u64) -> Result<Completion, PromptError> {
        self.post(serde_json::json!({
            "prompt": prompt,
            "seed": seed,
            "temperature": self.config.sampling.temperature,
            "max_tokens": self.config.sampling.max_tokens,
        }))
    }

    fn complete_vision(
        &self,
        image: ImageRef<'_>,
        prompt: &str,
        seed: u64,
    ) -> Result<Completion, PromptError> {
        let locator = match image {
            ImageRef::Locator(locator) => locator.to_string(),
            ImageRef::Asset(asset) => ["url", "image_url", "path"]
                .iter()
                .find_map(|key| asset.extras.get(*key).and_then(|v| v.as_str()))
                .map(str::to_string)
                .ok_or_else(|| {
                    PromptError::ImageUnreadable(format!(
                        "asset `{}` carries no url/image_url/path extra",
                        asset.asset_id
                    ))
                })?,
        };
        self.post(serde_json::json!({
            "prompt": prompt,
            "image": locator,
            "seed": seed,
            "temperature": self.config.sampling.temperature,
            "max_tokens": self.config.sampling.max_tokens,
        }))
    }
}
