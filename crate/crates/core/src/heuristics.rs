//! Rule-based query synthesis from graph entity pairs and asset titles.
//!
//! Search queries combine a search verb with related entities ("find me a
//! birthday card") or an asset title ("find tropical frangipani flowers
//! floating"). Generate queries wrap a title in an action phrase ("please
//! generate a template for galaxy minecraft server banner"). Image assets
//! may only feed Generate queries when their gentech flag is set.

use std::path::Path;

use rand::Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::knowledge::{
    connected_pairs, AssetKind, AssetMetadata, KnowledgeGraph, NodeKind,
};
use crate::record::{ContentType, FunctionKind, GeneratorKind, Provenance, QueryRecord};
use crate::rng::SeededRng;
use crate::text;

/// Word budget for Search queries.
pub const SEARCH_MAX_WORDS: usize = FunctionKind::Search.default_max_words();
/// Word budget for Generate queries.
pub const GENERATE_MAX_WORDS: usize = FunctionKind::Generate.default_max_words();

/// Verb vocabulary driving the rule templates. Entries are lowercase and
/// may span multiple words ("find me", "search for").
#[derive(Debug, Clone, Deserialize, PartialEq)]
pub struct VerbLexicon {
    pub search_verbs: Vec<String>,
    pub generate_verbs: Vec<String>,
}

impl Default for VerbLexicon {
    fn default() -> Self {
        Self {
            search_verbs: ["find me", "search for", "look for", "search", "show me", "find"]
                .map(str::to_string)
                .to_vec(),
            generate_verbs: ["generate", "create", "make"].map(str::to_string).to_vec(),
        }
    }
}

impl VerbLexicon {
    pub fn from_path(path: &Path) -> Result<Self, HeuristicError> {
        let raw = std::fs::read_to_string(path).map_err(|source| HeuristicError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let lexicon: VerbLexicon =
            toml::from_str(&raw).map_err(|e| HeuristicError::InvalidLexicon(e.to_string()))?;
        lexicon.validate()?;
        Ok(lexicon)
    }

    pub fn validate(&self) -> Result<(), HeuristicError> {
        if self.search_verbs.is_empty() || self.generate_verbs.is_empty() {
            return Err(HeuristicError::InvalidLexicon(
                "both verb lists must be non-empty".to_string(),
            ));
        }
        for verb in self.search_verbs.iter().chain(&self.generate_verbs) {
            if verb.trim().is_empty() || verb.chars().any(|c| c.is_uppercase()) {
                return Err(HeuristicError::InvalidLexicon(format!(
                    "verb `{verb}` must be non-empty lowercase"
                )));
            }
        }
        Ok(())
    }

    /// Every verb from both families, longest phrases first so prefix
    /// stripping prefers "search for" over "search".
    pub fn all_verbs(&self) -> Vec<String> {
        let mut verbs: Vec<String> = self
            .search_verbs
            .iter()
            .chain(&self.generate_verbs)
            .cloned()
            .collect();
        verbs.sort_by_key(|v| std::cmp::Reverse(v.split_whitespace().count()));
        verbs
    }
}

#[derive(Debug, Error)]
pub enum HeuristicError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid verb lexicon: {0}")]
    InvalidLexicon(String),
    #[error("no connected entity pair of the required kinds")]
    NoSuchPair,
    #[error("asset `{0}` has an empty title")]
    EmptyTitle(String),
    #[error("asset `{0}` is not gentech-flagged and cannot seed Generate queries")]
    GentechRequired(String),
}

fn choose<'a, R: Rng>(items: &'a [String], rng: &mut R) -> &'a str {
    &items[rng.random_range(0..items.len())]
}

/// Clean a free-text fragment for query insertion and drop any verb
/// occurrences so extracted prompts never contain lexicon verbs.
fn descriptor_tokens(raw: &str, lexicon: &VerbLexicon) -> Vec<String> {
    let cleaned = text::clean_phrase(raw);
    let tokens: Vec<String> = cleaned.split_whitespace().map(str::to_string).collect();
    text::strip_phrases(&tokens, &lexicon.all_verbs())
}

/// Search query from a connected knowledge-graph pair. Pairs are drawn
/// from (Intent, DesignType) edges, with (Intent, SceneObject) edges
/// widening the pool. A concrete content type adds its keyword to the
/// query; `None` and `Any` leave the phrase type-agnostic.
pub fn gen_search_from_kg(
    graph: &KnowledgeGraph,
    lexicon: &VerbLexicon,
    rng: &mut SeededRng,
    content_type: Option<ContentType>,
) -> Result<QueryRecord, HeuristicError> {
    let mut pairs = connected_pairs(graph, (NodeKind::Intent, NodeKind::DesignType));
    pairs.extend(connected_pairs(graph, (NodeKind::Intent, NodeKind::SceneObject)));
    if pairs.is_empty() {
        return Err(HeuristicError::NoSuchPair);
    }
    let (intent, other) = pairs[rng.random_range(0..pairs.len())];

    let verb = choose(&lexicon.search_verbs, rng).to_string();
    let mut phrase = descriptor_tokens(&format!("{} {}", intent.label, other.label), lexicon);
    if phrase.is_empty() {
        return Err(HeuristicError::NoSuchPair);
    }

    let ct = content_type.unwrap_or(ContentType::Any);
    let prompt_tokens: Vec<String> = match ct.keyword() {
        None => phrase.clone(),
        Some(kw) => match ct {
            ContentType::Text => {
                let mut t = vec!["text".to_string(), "for".to_string()];
                t.append(&mut phrase);
                t
            }
            ContentType::Photo | ContentType::Video if rng.random_range(0..2) == 1 => {
                let mut t = vec![kw.to_string(), "of".to_string()];
                t.append(&mut phrase);
                t
            }
            _ => {
                phrase.push(kw.to_string());
                phrase
            }
        },
    };

    let verb_words = text::word_count(&verb);
    // Leave room for the verb and the article inside the Search budget.
    let budget = SEARCH_MAX_WORDS.saturating_sub(verb_words + 1);
    let prompt = text::truncate_words(&prompt_tokens.join(" "), budget);
    let input = match ct {
        ContentType::Text => format!("{verb} {prompt}"),
        _ => format!("{verb} {} {prompt}", text::article_for(&prompt)),
    };

    Ok(QueryRecord {
        input,
        function: FunctionKind::Search,
        content_type: ct,
        extracted_prompt: prompt,
        provenance: Provenance::direct(GeneratorKind::Heuristic, rng.seed()),
    })
}

/// Search query from an asset title: verb plus the cleaned title,
/// truncated to the Search word budget.
pub fn gen_search_from_asset(
    asset: &AssetMetadata,
    lexicon: &VerbLexicon,
    rng: &mut SeededRng,
) -> Result<QueryRecord, HeuristicError> {
    let descriptor = descriptor_tokens(&asset.title, lexicon);
    if descriptor.is_empty() {
        return Err(HeuristicError::EmptyTitle(asset.asset_id.clone()));
    }
    let verb = choose(&lexicon.search_verbs, rng).to_string();
    let budget = SEARCH_MAX_WORDS.saturating_sub(text::word_count(&verb));
    let prompt = text::truncate_words(&descriptor.join(" "), budget);
    let content_type = match asset.kind {
        AssetKind::Image => ContentType::Photo,
        AssetKind::Template => ContentType::Template,
    };

    Ok(QueryRecord {
        input: format!("{verb} {prompt}"),
        function: FunctionKind::Search,
        content_type,
        extracted_prompt: prompt,
        provenance: Provenance::direct(GeneratorKind::Heuristic, rng.seed()),
    })
}

/// Generate query from an asset title. Templates expand to "please {verb}
/// a template for {title}"; images to "{verb} an image of {title}" and
/// must carry the gentech flag.
pub fn gen_generate_from_asset(
    asset: &AssetMetadata,
    lexicon: &VerbLexicon,
    rng: &mut SeededRng,
) -> Result<QueryRecord, HeuristicError> {
    if asset.kind == AssetKind::Image && !asset.gentech {
        return Err(HeuristicError::GentechRequired(asset.asset_id.clone()));
    }
    let descriptor = descriptor_tokens(&asset.title, lexicon);
    if descriptor.is_empty() {
        return Err(HeuristicError::EmptyTitle(asset.asset_id.clone()));
    }
    let verb = choose(&lexicon.generate_verbs, rng).to_string();

    let (input, content_type, prompt) = match asset.kind {
        AssetKind::Template => {
            let budget = GENERATE_MAX_WORDS.saturating_sub(text::word_count(&verb) + 4);
            let prompt = text::truncate_words(&descriptor.join(" "), budget);
            (
                format!("please {verb} a template for {prompt}"),
                ContentType::Template,
                prompt,
            )
        }
        AssetKind::Image => {
            let budget = GENERATE_MAX_WORDS.saturating_sub(text::word_count(&verb) + 3);
            let prompt = text::truncate_words(&descriptor.join(" "), budget);
            (
                format!("{verb} an image of {prompt}"),
                ContentType::Photo,
                prompt,
            )
        }
    };

    Ok(QueryRecord {
        input,
        function: FunctionKind::Generate,
        content_type,
        extracted_prompt: prompt,
        provenance: Provenance::direct(GeneratorKind::Heuristic, rng.seed()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{load_assets, load_graph};
    use std::collections::BTreeMap;

    fn lexicon_with(search: &[&str], generate: &[&str]) -> VerbLexicon {
        VerbLexicon {
            search_verbs: search.iter().map(|s| s.to_string()).collect(),
            generate_verbs: generate.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn single_pair_graph() -> KnowledgeGraph {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kg.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"record_type":"node","id":"i1","kind":"Intent","label":"Birthday"}"#,
                "\n",
                r#"{"record_type":"node","id":"d1","kind":"DesignType","label":"Card"}"#,
                "\n",
                r#"{"record_type":"edge","src":"i1","dst":"d1","relation":"uses"}"#,
                "\n",
            ),
        )
        .unwrap();
        load_graph(&path).unwrap()
    }

    fn diwali_invite_graph() -> KnowledgeGraph {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kg.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"record_type":"node","id":"i1","kind":"Intent","label":"Diwali"}"#,
                "\n",
                r#"{"record_type":"node","id":"d1","kind":"DesignType","label":"Invite"}"#,
                "\n",
                r#"{"record_type":"edge","src":"i1","dst":"d1","relation":"uses"}"#,
                "\n",
            ),
        )
        .unwrap();
        load_graph(&path).unwrap()
    }

    fn image_asset(title: &str, gentech: bool) -> AssetMetadata {
        AssetMetadata {
            asset_id: "img-test".to_string(),
            kind: AssetKind::Image,
            title: title.to_string(),
            tags: vec![],
            gentech,
            extras: BTreeMap::new(),
        }
    }

    fn template_asset(title: &str) -> AssetMetadata {
        AssetMetadata {
            asset_id: "tpl-test".to_string(),
            kind: AssetKind::Template,
            title: title.to_string(),
            tags: vec![],
            gentech: false,
            extras: BTreeMap::new(),
        }
    }

    #[test]
    fn kg_search_find_me_birthday_card() {
        let graph = single_pair_graph();
        let lexicon = lexicon_with(&["find me"], &["generate"]);
        let mut rng = SeededRng::new(3);
        let rec = gen_search_from_kg(&graph, &lexicon, &mut rng, None).unwrap();
        assert_eq!(rec.input, "find me a birthday card");
        assert_eq!(rec.function, FunctionKind::Search);
        assert_eq!(rec.extracted_prompt, "birthday card");
        assert_eq!(rec.content_type, ContentType::Any);
    }

    #[test]
    fn kg_search_single_choice_is_seed_independent() {
        let graph = single_pair_graph();
        let lexicon = lexicon_with(&["find me"], &["generate"]);
        let mut outputs = std::collections::BTreeSet::new();
        for seed in [0u64, 1, 7, 42, 999] {
            let mut rng = SeededRng::new(seed);
            let rec = gen_search_from_kg(&graph, &lexicon, &mut rng, None).unwrap();
            outputs.insert(rec.input);
        }
        assert_eq!(outputs.len(), 1);
    }

    #[test]
    fn kg_search_diwali_invite() {
        let graph = diwali_invite_graph();
        let lexicon = lexicon_with(&["search for"], &["generate"]);
        let mut rng = SeededRng::new(11);
        let rec = gen_search_from_kg(&graph, &lexicon, &mut rng, None).unwrap();
        assert_eq!(rec.input, "search for a diwali invite");
        assert_eq!(rec.extracted_prompt, "diwali invite");
    }

    #[test]
    fn kg_search_with_content_keyword() {
        let graph = single_pair_graph();
        let lexicon = lexicon_with(&["find"], &["generate"]);
        let mut rng = SeededRng::new(5);
        let rec =
            gen_search_from_kg(&graph, &lexicon, &mut rng, Some(ContentType::Template))
                .unwrap();
        assert!(rec.input.contains("template"), "input: {}", rec.input);
        assert_eq!(rec.content_type, ContentType::Template);
        assert!(text::word_count(&rec.input) <= SEARCH_MAX_WORDS);
    }

    #[test]
    fn kg_search_respects_word_budget() {
        let graph = single_pair_graph();
        let lexicon = lexicon_with(&["search for"], &["generate"]);
        for seed in 0..50 {
            let mut rng = SeededRng::new(seed);
            for ct in [None, Some(ContentType::Photo), Some(ContentType::Text)] {
                let rec = gen_search_from_kg(&graph, &lexicon, &mut rng, ct).unwrap();
                assert!(text::word_count(&rec.input) <= SEARCH_MAX_WORDS);
            }
        }
    }

    #[test]
    fn kg_search_without_pairs_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kg.jsonl");
        std::fs::write(
            &path,
            r#"{"record_type":"node","id":"a1","kind":"Action","label":"Dance"}"#,
        )
        .unwrap();
        let graph = load_graph(&path).unwrap();
        let lexicon = VerbLexicon::default();
        let mut rng = SeededRng::new(0);
        assert!(matches!(
            gen_search_from_kg(&graph, &lexicon, &mut rng, None),
            Err(HeuristicError::NoSuchPair)
        ));
    }

    #[test]
    fn asset_search_uses_title_verbatim() {
        let asset = image_asset("Tropical frangipani flowers floating", false);
        let lexicon = lexicon_with(&["find"], &["generate"]);
        let mut rng = SeededRng::new(1);
        let rec = gen_search_from_asset(&asset, &lexicon, &mut rng).unwrap();
        assert_eq!(rec.input, "find tropical frangipani flowers floating");
        assert_eq!(rec.content_type, ContentType::Photo);
        assert_eq!(rec.extracted_prompt, "tropical frangipani flowers floating");
    }

    #[test]
    fn asset_search_one_word_title() {
        let asset = image_asset("Cake", false);
        let lexicon = lexicon_with(&["find"], &["generate"]);
        let mut rng = SeededRng::new(1);
        let rec = gen_search_from_asset(&asset, &lexicon, &mut rng).unwrap();
        assert_eq!(rec.input, "find cake");
    }

    #[test]
    fn asset_search_truncates_long_titles() {
        let title = "one two three four five six seven eight nine ten eleven twelve thirteen fourteen fifteen";
        let asset = image_asset(title, false);
        let lexicon = lexicon_with(&["find me"], &["generate"]);
        let mut rng = SeededRng::new(1);
        let rec = gen_search_from_asset(&asset, &lexicon, &mut rng).unwrap();
        assert_eq!(text::word_count(&rec.input), SEARCH_MAX_WORDS);
        assert!(rec.input.starts_with("find me one two three"));
    }

    #[test]
    fn asset_search_empty_title_errors() {
        let asset = image_asset("  !!", false);
        let lexicon = VerbLexicon::default();
        let mut rng = SeededRng::new(1);
        assert!(matches!(
            gen_search_from_asset(&asset, &lexicon, &mut rng),
            Err(HeuristicError::EmptyTitle(_))
        ));
    }

    #[test]
    fn generate_template_expansion() {
        let asset = template_asset("Galaxy Minecraft Server Banner");
        let lexicon = lexicon_with(&["find"], &["generate"]);
        let mut rng = SeededRng::new(2);
        let rec = gen_generate_from_asset(&asset, &lexicon, &mut rng).unwrap();
        assert_eq!(
            rec.input,
            "please generate a template for galaxy minecraft server banner"
        );
        assert_eq!(rec.function, FunctionKind::Generate);
        assert_eq!(rec.content_type, ContentType::Template);
        assert_eq!(rec.extracted_prompt, "galaxy minecraft server banner");
    }

    #[test]
    fn generate_image_requires_gentech() {
        let asset = image_asset("Tropical frangipani flowers floating", false);
        let lexicon = VerbLexicon::default();
        let mut rng = SeededRng::new(2);
        match gen_generate_from_asset(&asset, &lexicon, &mut rng) {
            Err(HeuristicError::GentechRequired(id)) => assert_eq!(id, "img-test"),
            other => panic!("expected GentechRequired, got {other:?}"),
        }
    }

    #[test]
    fn generate_gentech_image() {
        let asset = image_asset("Sunset over dunes", true);
        let lexicon = lexicon_with(&["find"], &["create"]);
        let mut rng = SeededRng::new(2);
        let rec = gen_generate_from_asset(&asset, &lexicon, &mut rng).unwrap();
        assert_eq!(rec.input, "create an image of sunset over dunes");
        assert_eq!(rec.content_type, ContentType::Photo);
        assert_eq!(rec.extracted_prompt, "sunset over dunes");
    }

    #[test]
    fn generate_respects_word_budget() {
        let long_title = (0..60).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let asset = template_asset(&long_title);
        let lexicon = VerbLexicon::default();
        for seed in 0..10 {
            let mut rng = SeededRng::new(seed);
            let rec = gen_generate_from_asset(&asset, &lexicon, &mut rng).unwrap();
            assert!(text::word_count(&rec.input) <= GENERATE_MAX_WORDS);
        }
    }

    #[test]
    fn extracted_prompts_never_contain_lexicon_verbs() {
        let lexicon = VerbLexicon::default();
        let asset = template_asset("Find Your Way Poster Design");
        let mut rng = SeededRng::new(8);
        let rec = gen_generate_from_asset(&asset, &lexicon, &mut rng).unwrap();
        let tokens: Vec<&str> = rec.extracted_prompt.split_whitespace().collect();
        for verb in lexicon.all_verbs() {
            assert!(
                !text::contains_phrase(&tokens, &verb),
                "extracted prompt `{}` contains verb `{}`",
                rec.extracted_prompt,
                verb
            );
        }
    }

    #[test]
    fn verb_family_matches_function_label() {
        let graph = single_pair_graph();
        let lexicon = VerbLexicon::default();
        for seed in 0..30 {
            let mut rng = SeededRng::new(seed);
            let rec = gen_search_from_kg(&graph, &lexicon, &mut rng, None).unwrap();
            let tokens: Vec<&str> = rec.input.split_whitespace().collect();
            let leads_search = lexicon
                .search_verbs
                .iter()
                .any(|v| text::contains_phrase(&tokens[..v.split_whitespace().count().min(tokens.len())], v));
            assert!(leads_search, "input `{}` does not lead with a search verb", rec.input);
            assert_eq!(rec.function, FunctionKind::Search);
        }
    }

    #[test]
    fn outputs_replay_under_fixed_seed() {
        let graph = single_pair_graph();
        let lexicon = VerbLexicon::default();
        let a = {
            let mut rng = SeededRng::new(42);
            gen_search_from_kg(&graph, &lexicon, &mut rng, Some(ContentType::Photo)).unwrap()
        };
        let b = {
            let mut rng = SeededRng::new(42);
            gen_search_from_kg(&graph, &lexicon, &mut rng, Some(ContentType::Photo)).unwrap()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn listing_catalog_smoke() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("assets.jsonl");
        std::fs::write(&path, crate::knowledge::tests::listing_assets_text()).unwrap();
        let catalog = load_assets(&path).unwrap();
        let lexicon = VerbLexicon::default();
        let mut rng = SeededRng::new(4);
        let tpl = catalog.get("tpl-001").unwrap();
        let rec = gen_generate_from_asset(tpl, &lexicon, &mut rng).unwrap();
        assert!(rec.input.contains("galaxy minecraft server banner"));
    }
}
