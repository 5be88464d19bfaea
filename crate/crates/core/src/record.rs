//! The labeled training record and its closed label vocabularies.
//!
//! Serialized records are line-delimited JSON with the field names
//! `input`, `function`, `content_type`, `extracted_prompt`, plus a
//! `provenance` object describing which route produced the record and
//! with what seed.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which API family a query targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FunctionKind {
    Search,
    Generate,
}

impl FunctionKind {
    pub const ALL: [FunctionKind; 2] = [FunctionKind::Search, FunctionKind::Generate];

    pub fn as_str(&self) -> &'static str {
        match self {
            FunctionKind::Search => "Search",
            FunctionKind::Generate => "Generate",
        }
    }

    /// Word budget for queries of this function: Search queries stay
    /// short and targeted, Generate queries may be descriptive.
    pub const fn default_max_words(self) -> usize {
        match self {
            FunctionKind::Search => 10,
            FunctionKind::Generate => 40,
        }
    }
}

impl fmt::Display for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FunctionKind {
    type Err = LabelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "search" => Ok(FunctionKind::Search),
            "generate" => Ok(FunctionKind::Generate),
            _ => Err(LabelParseError::Function(s.to_string())),
        }
    }
}

/// Media category parameter of a call. `Any` marks type-agnostic queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ContentType {
    Photo,
    Template,
    Background,
    Video,
    Audio,
    DesignAsset,
    Text,
    Any,
}

impl ContentType {
    pub const ALL: [ContentType; 8] = [
        ContentType::Photo,
        ContentType::Template,
        ContentType::Background,
        ContentType::Video,
        ContentType::Audio,
        ContentType::DesignAsset,
        ContentType::Text,
        ContentType::Any,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ContentType::Photo => "Photo",
            ContentType::Template => "Template",
            ContentType::Background => "Background",
            ContentType::Video => "Video",
            ContentType::Audio => "Audio",
            ContentType::DesignAsset => "DesignAsset",
            ContentType::Text => "Text",
            ContentType::Any => "Any",
        }
    }

    /// Natural-language keyword a query would use for this type, if any.
    pub fn keyword(&self) -> Option<&'static str> {
        match self {
            ContentType::Photo => Some("photo"),
            ContentType::Template => Some("template"),
            ContentType::Background => Some("background"),
            ContentType::Video => Some("video"),
            ContentType::Audio => Some("audio"),
            ContentType::DesignAsset => Some("design"),
            ContentType::Text => Some("text"),
            ContentType::Any => None,
        }
    }
}

impl fmt::Display for ContentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContentType {
    type Err = LabelParseError;

    /// Case-insensitive; ignores spaces, hyphens, and underscores, and
    /// tolerates plural forms, so "Design Asset", "design_assets", and
    /// "Photos/Images" display labels all resolve.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        let candidates = [norm.clone(), norm.strip_suffix('s').unwrap_or(&norm).to_string()];
        for cand in candidates {
            let hit = match cand.as_str() {
                "photo" | "image" | "picture" | "photosimage" => Some(ContentType::Photo),
                "template" => Some(ContentType::Template),
                "background" => Some(ContentType::Background),
                "video" => Some(ContentType::Video),
                "audio" => Some(ContentType::Audio),
                "designasset" | "design" => Some(ContentType::DesignAsset),
                "text" => Some(ContentType::Text),
                "any" | "anytypeagnostic" => Some(ContentType::Any),
                _ => None,
            };
            if let Some(ct) = hit {
                return Ok(ct);
            }
        }
        Err(LabelParseError::ContentType(s.to_string()))
    }
}

/// Which generation strategy produced a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GeneratorKind {
    Heuristic,
    #[serde(rename = "TextLLM")]
    TextLlm,
    #[serde(rename = "VisionLLM")]
    VisionLlm,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 3] = [
        GeneratorKind::Heuristic,
        GeneratorKind::TextLlm,
        GeneratorKind::VisionLlm,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GeneratorKind::Heuristic => "Heuristic",
            GeneratorKind::TextLlm => "TextLLM",
            GeneratorKind::VisionLlm => "VisionLLM",
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum LabelParseError {
    #[error("unknown function label `{0}`")]
    Function(String),
    #[error("unknown content type `{0}`")]
    ContentType(String),
}

/// Where a record came from and how to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub route_id: String,
    pub generator: GeneratorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    pub seed: u64,
}

impl Provenance {
    /// Provenance for records produced outside the router.
    pub fn direct(generator: GeneratorKind, seed: u64) -> Self {
        Self {
            route_id: "direct".to_string(),
            generator,
            template_id: None,
            seed,
        }
    }
}

/// One labeled training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub input: String,
    pub function: FunctionKind,
    pub content_type: ContentType,
    pub extracted_prompt: String,
    pub provenance: Provenance,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
}

/// Read a line-delimited record corpus. Blank lines are skipped.
pub fn read_records(path: &Path) -> Result<Vec<QueryRecord>, CorpusError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: QueryRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                path: display.clone(),
                line: idx + 1,
                reason: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

/// Write records as line-delimited JSON with a stable field order.
pub fn write_records(path: &Path, records: &[QueryRecord]) -> Result<(), CorpusError> {
    let display = path.display().to_string();
    let file = File::create(path).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    let mut writer = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(writer, "{line}").map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn function_labels_round_trip() {
        for f in FunctionKind::ALL {
            assert_eq!(f.as_str().parse::<FunctionKind>().unwrap(), f);
        }
    }

    #[test]
    fn content_type_aliases() {
        assert_eq!("Photo".parse::<ContentType>().unwrap(), ContentType::Photo);
        assert_eq!("images".parse::<ContentType>().unwrap(), ContentType::Photo);
        assert_eq!(
            "Design Asset".parse::<ContentType>().unwrap(),
            ContentType::DesignAsset
        );
        assert_eq!(
            "design_assets".parse::<ContentType>().unwrap(),
            ContentType::DesignAsset
        );
        assert_eq!("Templates".parse::<ContentType>().unwrap(), ContentType::Template);
        assert_eq!(
            "Any (type-agnostic)".parse::<ContentType>().unwrap(),
            ContentType::Any
        );
        assert!("hologram".parse::<ContentType>().is_err());
    }

    #[test]
    fn record_json_field_names() {
        let record = QueryRecord {
            input: "find me an image of an elephant".to_string(),
            function: FunctionKind::Search,
            content_type: ContentType::Photo,
            extracted_prompt: "elephant".to_string(),
            provenance: Provenance::direct(GeneratorKind::Heuristic, 7),
        };
        let json = serde_json::to_string(&record).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["input"], "find me an image of an elephant");
        assert_eq!(value["function"], "Search");
        assert_eq!(value["content_type"], "Photo");
        assert_eq!(value["extracted_prompt"], "elephant");
        assert_eq!(value["provenance"]["generator"], "Heuristic");
        assert_eq!(value["provenance"]["seed"], 7);
    }

    #[test]
    fn corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let records = vec![
            QueryRecord {
                input: "find cats".to_string(),
                function: FunctionKind::Search,
                content_type: ContentType::Photo,
                extracted_prompt: "cats".to_string(),
                provenance: Provenance::direct(GeneratorKind::Heuristic, 1),
            },
            QueryRecord {
                input: "make a poster".to_string(),
                function: FunctionKind::Generate,
                content_type: ContentType::Template,
                extracted_prompt: "poster".to_string(),
                provenance: Provenance::direct(GeneratorKind::TextLlm, 2),
            },
        ];
        write_records(&path, &records).unwrap();
        let loaded = read_records(&path).unwrap();
        assert_eq!(loaded, records);
    }

    #[test]
    fn malformed_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"not\": \"a record\"}\n").unwrap();
        let err = read_records(&path).unwrap_err();
        match err {
            CorpusError::Malformed { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error: {other}"),
        }
    }
}
