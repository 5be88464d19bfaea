//! Prompt templates and completion backends.
//!
//! Templates are plain strings with named `{slot}` markers. A registry
//! loads them from a TOML file; the built-in defaults cover short search
//! queries, descriptive generate prompts, and the vision route. Rendered
//! prompts go to a [`backend::Backend`], and raw completions come back
//! through [`postprocess`] to become candidate records.

pub mod backend;

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::heuristics::VerbLexicon;
use crate::record::{ContentType, FunctionKind, GeneratorKind, Provenance, QueryRecord};
use crate::text;

pub use backend::{
    build_backend, complete_text, complete_vision, Backend, BackendConfig, BackendKind,
    Completion, HttpBackend, ImageRef, MockBackend, SamplingParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum Modality {
    Text,
    Vision,
}

/// One prompt template with named slots and a word-count constraint for
/// the queries it is meant to elicit.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub template_id: String,
    pub target_function: FunctionKind,
    pub modality: Modality,
    /// Content label stamped on records produced through this template
    /// when the route does not override it.
    pub target_content_type: Option<ContentType>,
    pub body: String,
    pub slots: Vec<String>,
    pub max_words: usize,
}

/// Slot name to value map. Values are trimmed and stripped of braces on
/// insertion so rendered output can never contain stray slot markers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlotBinding {
    values: BTreeMap<String, String>,
}

impl SlotBinding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(mut self, slot: &str, value: &str) -> Result<Self, PromptError> {
        self.insert(slot, value)?;
        Ok(self)
    }

    pub fn insert(&mut self, slot: &str, value: &str) -> Result<(), PromptError> {
        let cleaned: String = value.chars().filter(|c| *c != '{' && *c != '}').collect();
        let cleaned = cleaned.trim().to_string();
        if cleaned.is_empty() {
            return Err(PromptError::EmptySlotValue(slot.to_string()));
        }
        self.values.insert(slot.to_string(), cleaned);
        Ok(())
    }

    pub fn get(&self, slot: &str) -> Option<&str> {
        self.values.get(slot).map(String::as_str)
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid template registry: {0}")]
    InvalidRegistry(String),
    #[error("template `{template_id}` is malformed: {reason}")]
    MalformedTemplate { template_id: String, reason: String },
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("missing slot `{0}`")]
    MissingSlot(String),
    #[error("slot `{0}` bound to an empty value")]
    EmptySlotValue(String),
    #[error("backend `{backend_id}` does not serve {wanted} requests")]
    KindMismatch { backend_id: String, wanted: String },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend timed out: {0}")]
    Timeout(String),
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("image not readable: {0}")]
    ImageUnreadable(String),
    #[error("unusable completion: {reason}")]
    UnusableCompletion { reason: String },
}

/// Scan a template body for `{slot}` markers.
fn slot_markers(body: &str) -> Result<Vec<String>, String> {
    let mut markers = Vec::new();
    let bytes = body.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' => {
                let Some(end) = body[i + 1..].find(['{', '}']) else {
                    return Err(format!("unterminated `{{` at byte {i}"));
                };
                let end = i + 1 + end;
                if bytes[end] == b'{' {
                    return Err(format!("nested `{{` at byte {end}"));
                }
                let name = &body[i + 1..end];
                if name.is_empty()
                    || !name
                        .chars()
                        .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
                {
                    return Err(format!("invalid slot name `{{{name}}}`"));
                }
                markers.push(name.to_string());
                i = end + 1;
            }
            b'}' => return Err(format!("unmatched `}}` at byte {i}")),
            _ => i += 1,
        }
    }
    Ok(markers)
}

impl PromptTemplate {
    /// Check the body parses and every marker is declared.
    pub fn validate(&self) -> Result<(), PromptError> {
        let markers = slot_markers(&self.body).map_err(|reason| PromptError::MalformedTemplate {
            template_id: self.template_id.clone(),
            reason,
        })?;
        for marker in &markers {
            if !self.slots.contains(marker) {
                return Err(PromptError::MalformedTemplate {
                    template_id: self.template_id.clone(),
                    reason: format!("slot `{{{marker}}}` not declared"),
                });
            }
        }
        if self.max_words == 0 {
            return Err(PromptError::MalformedTemplate {
                template_id: self.template_id.clone(),
                reason: "max_words must be positive".to_string(),
            });
        }
        Ok(())
    }
}

/// Substitute every slot marker with its bound value. The result contains
/// no residual `{...}` markers.
pub fn render(template: &PromptTemplate, binding: &SlotBinding) -> Result<String, PromptError> {
    let markers = slot_markers(&template.body).map_err(|reason| PromptError::MalformedTemplate {
        template_id: template.template_id.clone(),
        reason,
    })?;
    let mut out = template.body.clone();
    for marker in markers {
        let value = binding
            .get(&marker)
            .ok_or_else(|| PromptError::MissingSlot(marker.clone()))?;
        out = out.replace(&format!("{{{marker}}}"), value);
    }
    Ok(out)
}

/// Boilerplate lead-ins stripped from raw completions.
pub const DEFAULT_BOILERPLATE_PREFIXES: &[&str] = &[
    "here is",
    "here's",
    "sure,",
    "sure:",
    "certainly,",
    "certainly:",
    "query:",
    "prompt:",
    "answer:",
    "output:",
];

fn strip_wrapping_quotes(s: &str) -> &str {
    let mut out = s.trim();
    loop {
        let trimmed = out.trim();
        let stripped = if (trimmed.starts_with('"') && trimmed.ends_with('"') && trimmed.len() >= 2)
            || (trimmed.starts_with('\'') && trimmed.ends_with('\'') && trimmed.len() >= 2)
            || (trimmed.starts_with('`') && trimmed.ends_with('`') && trimmed.len() >= 2)
        {
            &trimmed[1..trimmed.len() - 1]
        } else {
            trimmed
        };
        if stripped == out {
            return out;
        }
        out = stripped;
    }
}

/// Normalize a raw completion: trim wrapper quotes, drop boilerplate
/// lead-ins, collapse whitespace, and drop trailing sentence punctuation.
pub fn cleanup_completion(raw: &str, extra_prefixes: &[String]) -> String {
    let mut current = strip_wrapping_quotes(raw).to_string();
    loop {
        let collapsed = current.split_whitespace().collect::<Vec<_>>().join(" ");
        let lower = collapsed.to_lowercase();
        let mut next = collapsed.clone();
        for prefix in DEFAULT_BOILERPLATE_PREFIXES
            .iter()
            .map(|p| p.to_string())
            .chain(extra_prefixes.iter().cloned())
        {
            if lower.starts_with(&prefix) {
                next = collapsed[prefix.len()..]
                    .trim_start_matches([' ', ',', ':'])
                    .to_string();
                break;
            }
        }
        next = strip_wrapping_quotes(&next).to_string();
        let next = next.trim_end_matches(['.', '!', '?']).trim().to_string();
        if next == current {
            return next;
        }
        current = next;
    }
}

/// Derive the extracted prompt from a cleaned query: drop a leading
/// "please", a leading lexicon verb phrase, and a leading article. Falls
/// back to the whole query when stripping would leave nothing.
pub fn derive_extracted_prompt(cleaned: &str, lexicon: &VerbLexicon) -> String {
    let lowered = cleaned.to_lowercase();
    let mut tokens: Vec<String> = lowered.split_whitespace().map(str::to_string).collect();
    if tokens.first().map(String::as_str) == Some("please") {
        tokens.remove(0);
    }
    'verbs: for verb in lexicon.all_verbs() {
        let parts: Vec<&str> = verb.split_whitespace().collect();
        if parts.len() <= tokens.len()
            && parts.iter().zip(&tokens).all(|(p, t)| *p == t.as_str())
        {
            tokens.drain(..parts.len());
            break 'verbs;
        }
    }
    if matches!(tokens.first().map(String::as_str), Some("a") | Some("an") | Some("the")) {
        tokens.remove(0);
    }
    if tokens.is_empty() {
        lowered
    } else {
        tokens.join(" ")
    }
}

/// Turn one completion text into a candidate record labeled from the
/// template's targets. Rejects empty cleanups and texts that blow the
/// word budget by more than half.
pub fn postprocess(
    completion_text: &str,
    template: &PromptTemplate,
    seed: u64,
) -> Result<QueryRecord, PromptError> {
    let cleaned = cleanup_completion(completion_text, &[]);
    if cleaned.is_empty() {
        return Err(PromptError::UnusableCompletion {
            reason: "empty".to_string(),
        });
    }
    let words = text::word_count(&cleaned);
    if words as f64 > template.max_words as f64 * 1.5 {
        return Err(PromptError::UnusableCompletion {
            reason: "over_length".to_string(),
        });
    }
    let lexicon = VerbLexicon::default();
    let extracted = derive_extracted_prompt(&cleaned, &lexicon);
    let generator = match template.modality {
        Modality::Text => GeneratorKind::TextLlm,
        Modality::Vision => GeneratorKind::VisionLlm,
    };
    Ok(QueryRecord {
        input: cleaned,
        function: template.target_function,
        content_type: template.target_content_type.unwrap_or(ContentType::Any),
        extracted_prompt: extracted,
        provenance: Provenance {
            route_id: "direct".to_string(),
            generator,
            template_id: Some(template.template_id.clone()),
            seed,
        },
    })
}

#[derive(Debug, Deserialize)]
struct RawTemplate {
    template_id: String,
    function: String,
    modality: Modality,
    #[serde(default)]
    content_type: Option<String>,
    #[serde(default)]
    max_words: Option<usize>,
    #[serde(default)]
    slots: Vec<String>,
    body: String,
}

#[derive(Debug, Deserialize)]
struct RawRegistry {
    #[serde(default)]
    templates: Vec<RawTemplate>,
}

/// Named collection of validated templates.
#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, PromptTemplate>,
}

impl TemplateRegistry {
    pub fn get(&self, template_id: &str) -> Result<&PromptTemplate, PromptError> {
        self.templates
            .get(template_id)
            .ok_or_else(|| PromptError::UnknownTemplate(template_id.to_string()))
    }

    pub fn contains(&self, template_id: &str) -> bool {
        self.templates.contains_key(template_id)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn templates(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }

    pub fn insert(&mut self, template: PromptTemplate) -> Result<(), PromptError> {
        template.validate()?;
        if self.templates.contains_key(&template.template_id) {
            return Err(PromptError::InvalidRegistry(format!(
                "duplicate template id `{}`",
                template.template_id
            )));
        }
        self.templates.insert(template.template_id.clone(), template);
        Ok(())
    }

    pub fn from_path(path: &Path) -> Result<Self, PromptError> {
        let raw = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&raw)
    }

    pub fn from_toml(raw: &str) -> Result<Self, PromptError> {
        let parsed: RawRegistry =
            toml::from_str(raw).map_err(|e| PromptError::InvalidRegistry(e.to_string()))?;
        let mut registry = Self::default();
        for raw in parsed.templates {
            let function: FunctionKind = raw
                .function
                .parse()
                .map_err(|e| PromptError::InvalidRegistry(format!("{}: {e}", raw.template_id)))?;
            let content_type = raw
                .content_type
                .map(|s| {
                    s.parse::<ContentType>().map_err(|e| {
                        PromptError::InvalidRegistry(format!("{}: {e}", raw.template_id))
                    })
                })
                .transpose()?;
            registry.insert(PromptTemplate {
                template_id: raw.template_id,
                target_function: function,
                modality: raw.modality,
                target_content_type: content_type,
                max_words: raw.max_words.unwrap_or(function.default_max_words()),
                slots: raw.slots,
                body: raw.body,
            })?;
        }
        Ok(registry)
    }

    /// The built-in templates: two short-search bodies, two descriptive
    /// generate bodies, and the vision prompt that asks for two
    /// single-sentence creation prompts.
    pub fn defaults() -> Self {
        let mut registry = Self::default();
        let entries = [
            PromptTemplate {
                template_id: "search-title-intents".to_string(),
                target_function: FunctionKind::Search,
                modality: Modality::Text,
                target_content_type: None,
                max_words: 10,
                slots: vec!["title".to_string(), "intents".to_string()],
                body: "You are an AI Assistant responsible for generating a single, concise user \
                       search query based on provided metadata. The search queries are short and \
                       crisp and less than 10 words. You will be working with different assets \
                       for example (templates, images, videos, design assets, backgrounds, \
                       shapes). Help me write a search query for an Instagram story template for \
                       title:{title} focusing on intents:{intents}. The query should directly \
                       reflect the relevant title, intents, actions, or assets, without any \
                       additional explanations or unnecessary text. Do not include any \
                       introductory phrases or conclusions, just the query itself."
                    .to_string(),
            },
            PromptTemplate {
                template_id: "search-title-actions".to_string(),
                target_function: FunctionKind::Search,
                modality: Modality::Text,
                target_content_type: Some(ContentType::Background),
                max_words: 10,
                slots: vec!["title".to_string(), "actions".to_string()],
                body: "You are an AI Assistant responsible for generating a single, concise user \
                       search query based on provided metadata. The search queries are short and \
                       crisp and less than 10 words. You will be working with different assets \
                       for example (templates, images, videos, design assets, backgrounds, \
                       shapes). Help me write a search query for the vibrant background for \
                       title:{title} focusing on actions:{actions}. Please include the word \
                       background in the query. The query should directly reflect the relevant \
                       title, intents, actions, or assets, without any additional explanations \
                       or unnecessary text. Do not include any introductory phrases or \
                       conclusions, just the query itself."
                    .to_string(),
            },
            PromptTemplate {
                template_id: "generate-title-actions-assets".to_string(),
                target_function: FunctionKind::Generate,
                modality: Modality::Text,
                target_content_type: None,
                max_words: 40,
                slots: vec![
                    "title".to_string(),
                    "actions".to_string(),
                    "assets".to_string(),
                    "intents".to_string(),
                ],
                body: "You are an AI that generates creative and engaging user prompts based on \
                       provided metadata. The prompt should be less than 40 words. Design a \
                       Facebook post prompt for title:{title} that encourages users to \
                       actions:{actions}. Use assets:{assets} to support intents:{intents}. The \
                       prompt should feel like something a human would write and should not \
                       include any hashtags or links or unnecessary punctuations."
                    .to_string(),
            },
            PromptTemplate {
                template_id: "generate-title-intents".to_string(),
                target_function: FunctionKind::Generate,
                modality: Modality::Text,
                target_content_type: None,
                max_words: 40,
                slots: vec![
                    "title".to_string(),
                    "intents".to_string(),
                    "assets".to_string(),
                ],
                body: "You are an AI that generates creative and engaging user prompts based on \
                       provided metadata. The prompt should be less than 40 words. Make some \
                       prompt for title:{title} with intents:{intents}. Use assets:{assets}, or \
                       maybe not?"
                    .to_string(),
            },
            PromptTemplate {
                template_id: "vision-template-prompts".to_string(),
                target_function: FunctionKind::Generate,
                modality: Modality::Vision,
                target_content_type: Some(ContentType::Template),
                max_words: 40,
                slots: vec![],
                body: "Based on this image, generate 2 single-sentence prompts that could have \
                       created this template. Each prompt should specify the type of material, \
                       the purpose it is for, and briefly mention key elements to include. \
                       Mention specific business name only if it is present in the image. \
                       Translate any non English sentences/words to English."
                    .to_string(),
            },
        ];
        for template in entries {
            registry.insert(template).expect("default templates are valid");
        }
        registry
    }
}
